# Train the three model variants (structured-only, text-only, combined) and
# evaluate them with bootstrap confidence intervals: 5 model seeds x 1000
# resamples per metric, plus recall/precision/F1 at fixed rejection counts.

from textcredit.corpus import stratified_split
from textcredit.metrics import ScoredSet, bootstrap, topk_bootstrap
from textcredit.model import MlpConfig, assemble, predict_proba, train
from textcredit.pipeline import scaled_topk
from textcredit.synthgen import generate, planted_config
from textcredit.tabular import encode, fit_binning, fit_woe, impute, select_by_iv
from textcredit.textfeat import DocFeatures, Tokenizer, fit_tfidf, tfidf_transform, tokenize

dataset, _ = generate(planted_config(n=1200, default_rate=0.10, seed=9))
split = stratified_split(dataset, seed=7)
y = dataset.labels()

# structured block
filled = impute(dataset, split.train)
binning = fit_binning(filled, split.train)
table = fit_woe(filled, split.train, binning)
selected = select_by_iv(table, dataset.feature_names)
structured = encode(filled, table, selected)

# text block (tf-idf fitted on training documents only)
tok = Tokenizer()
tokens = [tokenize(tok, r.human_text) for r in dataset.records]
tfidf = fit_tfidf([tokens[i] for i in split.train])
text_docs = [
    DocFeatures(id=r.id, source="tfidf", values=tfidf_transform(tfidf, t))
    for r, t in zip(dataset.records, tokens)
]

config = MlpConfig(hidden=(32,), max_epochs=120, patience=15)
rows = {}
for variant in ("structured", "text", "combined"):
    matrix = assemble(
        variant,
        structured=structured if variant != "text" else structured,
        texts=[text_docs] if variant != "structured" else (),
    )
    runs = []
    for seed in range(5):
        cfg = MlpConfig(hidden=(32,), max_epochs=120, patience=15, seed=seed)
        model, report = train(
            matrix.values[list(split.train)], y[list(split.train)],
            matrix.values[list(split.val)], y[list(split.val)],
            cfg,
        )
        probs = predict_proba(model, matrix.values[list(split.test)])
        runs.append(ScoredSet(
            scores=probs,
            labels=y[list(split.test)],
            ids=tuple(dataset.records[i].id for i in split.test),
        ))
    rows[variant] = runs

print("variant     metric      mean   [95% CI]           n")
for variant, runs in rows.items():
    for metric in ("auc", "ks", "h_measure", "pr_auc"):
        est = bootstrap(metric, runs, n_resamples=1000, master_seed=99)
        print(
            f"{variant:11s} {metric:10s} {est.mean:.3f}  "
            f"[{est.ci_low:.3f}, {est.ci_high:.3f}]  {est.n_estimates}"
        )

# rejection table at the reference counts scaled to this test size
ks_scaled = scaled_topk([70, 100, 120, 150, 165], n_test=len(split.test))
table_combined = topk_bootstrap(rows["combined"], ks_scaled, n_resamples=1000, master_seed=99)
print("\ncombined model, rejection table (k: recall / precision / f1):")
for k in ks_scaled:
    r = table_combined[k]
    print(
        f"  k={k:3d}: {r['recall'].mean:.3f} / {r['precision'].mean:.3f}"
        f" / {r['f1'].mean:.3f}"
    )
