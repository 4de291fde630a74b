"""Document featurizers: tokenization, TF-IDF, Gibbs-sampled topic model,
averaged word vectors, and precomputed document-vector loading.

Every featurizer maps one document to a fixed-dimension numeric vector.
Topic inference uses collapsed Gibbs sampling with an explicit integer RNG
so that identical seeds give bitwise-identical results.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numba import njit

# ASCII punctuation plus common full-width CJK marks; all are token delimiters.
CJK_PUNCTUATION = "，。；！？、：“”‘’（）《》【】…—·"
DEFAULT_PUNCTUATION = frozenset(string.punctuation + CJK_PUNCTUATION)


@dataclass(frozen=True)
class Tokenizer:
    mode: str = "word"  # "word" | "char"
    lowercase: bool = True
    punctuation: frozenset = DEFAULT_PUNCTUATION

    def __post_init__(self):
        if self.mode not in ("word", "char"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")


def tokenize(tokenizer: Tokenizer, text: str) -> list[str]:
    """Split ``text`` into tokens.

    Word mode splits on whitespace and delimiter punctuation; char mode
    emits one token per non-whitespace, non-punctuation character.
    """
    if tokenizer.lowercase:
        text = text.lower()
    if tokenizer.mode == "char":
        return [ch for ch in text if not ch.isspace() and ch not in tokenizer.punctuation]
    cleaned = "".join(" " if ch in tokenizer.punctuation else ch for ch in text)
    return cleaned.split()


@dataclass(frozen=True)
class DocFeatures:
    """A fixed-dimension numeric vector for one document from one featurizer."""

    id: str
    source: str  # "lda" | "wordvec" | "docvec:<name>" | "tfidf"
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature values for document {self.id!r}")

    @property
    def dim(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Mapping[str, int]
    idf: np.ndarray
    doc_count: int


def fit_tfidf(token_lists: Sequence[Sequence[str]]) -> TfidfModel:
    """Fit vocabulary and smoothed idf: idf = ln((1 + N) / (1 + df)) + 1."""
    if len(token_lists) == 0:
        raise ValueError("cannot fit tf-idf on an empty corpus")
    df: dict[str, int] = {}
    for tokens in token_lists:
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    vocab = {tok: i for i, tok in enumerate(sorted(df))}
    n = len(token_lists)
    idf = np.empty(len(vocab))
    for tok, i in vocab.items():
        idf[i] = np.log((1.0 + n) / (1.0 + df[tok])) + 1.0
    return TfidfModel(vocabulary=vocab, idf=idf, doc_count=n)


def tfidf_transform(model: TfidfModel, tokens: Sequence[str]) -> np.ndarray:
    """L2-normalized tf-idf vector; out-of-vocabulary tokens are ignored and
    an all-OOV document keeps the zero vector."""
    vec = np.zeros(len(model.vocabulary))
    for tok in tokens:
        idx = model.vocabulary.get(tok)
        if idx is not None:
            vec[idx] += 1.0
    vec *= model.idf
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


# ---------------------------------------------------------------------------
# Topic model (collapsed Gibbs sampling)


@njit(cache=True)
def _splitmix64(state: np.uint64) -> tuple[np.uint64, np.float64]:
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, np.float64(z >> np.uint64(11)) * (2.0**-53)


@njit(cache=True)
def _gibbs_train(doc_ids, word_ids, n_docs, n_topics, n_words, alpha, beta, n_iter, seed):
    doc_topic = np.zeros((n_docs, n_topics), dtype=np.int64)
    topic_word = np.zeros((n_topics, n_words), dtype=np.int64)
    topic_total = np.zeros(n_topics, dtype=np.int64)
    n_tokens = len(word_ids)
    assign = np.empty(n_tokens, dtype=np.int64)
    state = np.uint64(seed) ^ np.uint64(0xD6E8FEB86659FD93)

    for t in range(n_tokens):
        state, u = _splitmix64(state)
        k = int(u * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        assign[t] = k
        doc_topic[doc_ids[t], k] += 1
        topic_word[k, word_ids[t]] += 1
        topic_total[k] += 1

    probs = np.empty(n_topics, dtype=np.float64)
    vbeta = n_words * beta
    for _ in range(n_iter):
        for t in range(n_tokens):
            d = doc_ids[t]
            w = word_ids[t]
            k = assign[t]
            doc_topic[d, k] -= 1
            topic_word[k, w] -= 1
            topic_total[k] -= 1
            total = 0.0
            for j in range(n_topics):
                p = (doc_topic[d, j] + alpha) * (topic_word[j, w] + beta) / (
                    topic_total[j] + vbeta
                )
                probs[j] = p
                total += p
            state, u = _splitmix64(state)
            target = u * total
            acc = 0.0
            k = n_topics - 1
            for j in range(n_topics):
                acc += probs[j]
                if target < acc:
                    k = j
                    break
            assign[t] = k
            doc_topic[d, k] += 1
            topic_word[k, w] += 1
            topic_total[k] += 1
    return doc_topic, topic_word, topic_total


@njit(cache=True)
def _gibbs_infer(word_ids, topic_word, topic_total, n_topics, alpha, beta, n_iter, seed):
    n_words = topic_word.shape[1]
    n_tokens = len(word_ids)
    counts = np.zeros(n_topics, dtype=np.int64)
    assign = np.empty(n_tokens, dtype=np.int64)
    state = np.uint64(seed) ^ np.uint64(0xA3EC647659359ACD)

    for t in range(n_tokens):
        state, u = _splitmix64(state)
        k = int(u * n_topics)
        if k >= n_topics:
            k = n_topics - 1
        assign[t] = k
        counts[k] += 1

    probs = np.empty(n_topics, dtype=np.float64)
    vbeta = n_words * beta
    for _ in range(n_iter):
        for t in range(n_tokens):
            w = word_ids[t]
            k = assign[t]
            counts[k] -= 1
            total = 0.0
            for j in range(n_topics):
                p = (counts[j] + alpha) * (topic_word[j, w] + beta) / (
                    topic_total[j] + vbeta
                )
                probs[j] = p
                total += p
            state, u = _splitmix64(state)
            target = u * total
            acc = 0.0
            k = n_topics - 1
            for j in range(n_topics):
                acc += probs[j]
                if target < acc:
                    k = j
                    break
            assign[t] = k
            counts[k] += 1
    return counts


@dataclass(frozen=True)
class LdaModel:
    n_topics: int
    topic_word: np.ndarray  # (n_topics, vocab) token-assignment counts
    topic_total: np.ndarray
    alpha: float
    beta: float
    vocabulary: Mapping[str, int]
    train_iterations: int
    seed: int

    def topic_word_distributions(self) -> np.ndarray:
        """Smoothed per-topic word distributions (each row sums to 1)."""
        v = self.topic_word.shape[1]
        return (self.topic_word + self.beta) / (
            self.topic_total[:, None] + v * self.beta
        )


def fit_lda(
    token_lists: Sequence[Sequence[str]],
    n_topics: int,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 500,
    seed: int = 0,
) -> LdaModel:
    """Train a topic model by collapsed Gibbs sampling.

    ``alpha`` defaults to 50 / n_topics.  Deterministic given ``seed``.
    """
    if n_topics < 1:
        raise ValueError("n_topics must be >= 1")
    if len(token_lists) == 0:
        raise ValueError("cannot fit a topic model on an empty corpus")
    if alpha is None:
        alpha = 50.0 / n_topics
    vocab: dict[str, int] = {}
    doc_ids: list[int] = []
    word_ids: list[int] = []
    for d, tokens in enumerate(token_lists):
        for tok in tokens:
            idx = vocab.setdefault(tok, len(vocab))
            doc_ids.append(d)
            word_ids.append(idx)
    if not word_ids:
        raise ValueError("corpus contains no tokens")
    _, topic_word, topic_total = _gibbs_train(
        np.asarray(doc_ids, dtype=np.int64),
        np.asarray(word_ids, dtype=np.int64),
        len(token_lists),
        n_topics,
        len(vocab),
        float(alpha),
        float(beta),
        int(iterations),
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
    )
    return LdaModel(
        n_topics=n_topics,
        topic_word=topic_word,
        topic_total=topic_total,
        alpha=float(alpha),
        beta=float(beta),
        vocabulary=vocab,
        train_iterations=iterations,
        seed=seed,
    )


def infer_topics(
    model: LdaModel,
    tokens: Sequence[str],
    iterations: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Topic proportions theta for one document, holding the fitted
    topic-word counts fixed: theta_k = (count_k + alpha) / (len + K*alpha).

    Out-of-vocabulary tokens are dropped; an empty document returns the
    uniform prior.
    """
    word_ids = [model.vocabulary[t] for t in tokens if t in model.vocabulary]
    k = model.n_topics
    if not word_ids:
        return np.full(k, 1.0 / k)
    counts = _gibbs_infer(
        np.asarray(word_ids, dtype=np.int64),
        model.topic_word,
        model.topic_total,
        k,
        model.alpha,
        model.beta,
        int(iterations),
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
    )
    return (counts + model.alpha) / (len(word_ids) + k * model.alpha)


# ---------------------------------------------------------------------------
# Word vectors / document vectors


@dataclass(frozen=True)
class WordVectors:
    dim: int
    table: Mapping[str, np.ndarray]


def load_word_vectors(path: str | Path) -> WordVectors:
    """Read a word-vector text file: header "<count> <dim>", then one
    "<word> v1 ... v_dim" line per word."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: line 1: malformed header (want '<count> <dim>')")
        try:
            _, dim = int(header[0]), int(header[1])
        except ValueError as err:
            raise ValueError(f"{path}: line 1: malformed header") from err
        table: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise ValueError(f"{path}: line {lineno}: malformed line")
            word = parts[0]
            if len(parts) - 1 != dim:
                raise ValueError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}"
                )
            try:
                vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as err:
                raise ValueError(f"{path}: line {lineno}: malformed number") from err
            table[word] = vec
    return WordVectors(dim=dim, table=table)


def avg_embed(vectors: WordVectors, tokens: Sequence[str]) -> np.ndarray:
    """Arithmetic mean of the vectors of in-vocabulary tokens (repeated
    tokens count repeatedly); all-OOV or empty input gives the zero vector."""
    hits = [vectors.table[t] for t in tokens if t in vectors.table]
    if not hits:
        return np.zeros(vectors.dim)
    return np.mean(hits, axis=0)


def load_doc_vectors(
    path: str | Path,
    expected_dim: int,
    require_ids: Sequence[str] | None = None,
) -> dict[str, np.ndarray]:
    """Read a document-vector sidecar: one "<id>\\tv1 v2 ... v_dim" line per
    document.  Checks dimension and finiteness; with ``require_ids``, every
    requested id must be present."""
    path = Path(path)
    out: dict[str, np.ndarray] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                doc_id, rest = line.split("\t", 1)
            except ValueError as err:
                raise ValueError(f"{path}: line {lineno}: malformed line") from err
            parts = rest.split()
            if len(parts) != expected_dim:
                raise ValueError(
                    f"{path}: line {lineno}: document {doc_id!r} has {len(parts)}"
                    f" values, expected {expected_dim}"
                )
            vec = np.asarray([float(x) for x in parts], dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise ValueError(
                    f"{path}: line {lineno}: non-finite value for document {doc_id!r}"
                )
            out[doc_id] = vec
    if require_ids is not None:
        missing = [rid for rid in require_ids if rid not in out]
        if missing:
            raise ValueError(f"{path}: missing document ids: {missing}")
    return out


def save_doc_vectors(path: str | Path, vectors: Mapping[str, np.ndarray]) -> None:
    """Write document vectors in the sidecar format (stable id order)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id in vectors:
            vals = " ".join(repr(float(v)) for v in vectors[doc_id])
            fh.write(f"{doc_id}\t{vals}\n")
