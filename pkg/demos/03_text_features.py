# Three ways to turn a loan assessment into numbers: TF-IDF, topic
# proportions from a Gibbs-sampled topic model, and averaged word vectors.
# Precomputed document embeddings load from a sidecar file instead.

import numpy as np

from textcredit.corpus import stratified_split
from textcredit.synthgen import generate, planted_config
from textcredit.textfeat import (
    Tokenizer,
    avg_embed,
    fit_lda,
    fit_tfidf,
    infer_topics,
    load_doc_vectors,
    save_doc_vectors,
    tfidf_transform,
    tokenize,
)

dataset, _ = generate(planted_config(n=600, default_rate=0.10, seed=5))
split = stratified_split(dataset, seed=7)
tok = Tokenizer()  # word mode; a char-mode tokenizer handles CJK text
tokens = [tokenize(tok, rec.human_text) for rec in dataset.records]
train_tokens = [tokens[i] for i in split.train]

# --- TF-IDF -----------------------------------------------------------------
tfidf = fit_tfidf(train_tokens)
vec = tfidf_transform(tfidf, tokens[0])
print(f"tf-idf: vocabulary {len(tfidf.vocabulary)} terms, |v| = {np.linalg.norm(vec):.3f}")

# --- topic model ------------------------------------------------------------
lda = fit_lda(train_tokens, n_topics=6, alpha=0.5, iterations=200, seed=11)
theta = infer_topics(lda, tokens[0], iterations=50, seed=0)
print(f"topic proportions: {theta.round(3)} (sum {theta.sum():.6f})")

phi = lda.topic_word_distributions()
inv_vocab = {i: w for w, i in lda.vocabulary.items()}
for k in range(lda.n_topics):
    top = np.argsort(-phi[k])[:5]
    print(f"  topic {k}: " + ", ".join(inv_vocab[i] for i in top))

# --- averaged word vectors ----------------------------------------------------
# Tiny demo table over this corpus's vocabulary; production use points at a
# pre-trained 300-dim file with the same "<count> <dim>" header format.
vocab = sorted({w for t in train_tokens for w in t})
demo_vectors = dict(zip(vocab, np.random.default_rng(0).standard_normal((len(vocab), 8))))
from textcredit.textfeat import WordVectors

table = WordVectors(dim=8, table=demo_vectors)
doc_vec = avg_embed(table, tokens[0])
print(f"\naveraged word vector (dim {table.dim}): {doc_vec[:4].round(3)} ...")
print(f"out-of-vocabulary text maps to zeros: {avg_embed(table, ['zzz']).tolist()}")

# --- precomputed document vectors ------------------------------------------
# One "<id>\tv1 v2 ..." line per record; ids are validated on load.
vecs = {rec.id: np.asarray(infer_topics(lda, toks, iterations=50, seed=i))
        for i, (rec, toks) in enumerate(zip(dataset.records[:5], tokens[:5]))}
save_doc_vectors("docvec_demo.tsv", vecs)
loaded = load_doc_vectors("docvec_demo.tsv", expected_dim=6, require_ids=list(vecs))
print(f"\nreloaded {len(loaded)} document vectors from docvec_demo.tsv")
