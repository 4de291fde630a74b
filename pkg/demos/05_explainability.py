# Which words and phrases move a scorer's output?  Probe a model by removing
# random unit subsets from one document, fit a local weighted surrogate, and
# aggregate the signed unit weights across the most-improved uncertain cases.

import numpy as np

from textcredit.explain import aggregate_importance, lime_explain, segment, select_uncertain_cases
from textcredit.synthgen import DEFAULT_RISKY_CLAUSES, DEFAULT_SAFE_CLAUSES

# A transparent stand-in scorer: risk rises with the planted risky clauses.
contribution = {t: c for t, c in DEFAULT_RISKY_CLAUSES + DEFAULT_SAFE_CLAUSES}


def score_fn(text: str) -> float:
    z = sum(c for t, c in contribution.items() if t.split()[2] in text)
    return 1.0 / (1.0 + np.exp(-z / 2.0))


document = (
    "The borrower has several overdue credit card payments. "
    "Historical data reflect stable business operations. "
    "Receivables are large and collection is uncertain."
)

for granularity in ("word", "phrase"):
    units = segment(document, granularity).units
    print(f"\n{granularity} units ({len(units)}): {units[:6]} ...")
    attributions = lime_explain(
        score_fn, document, granularity=granularity, n_samples=600, top_k=5, seed=0
    )
    for att in attributions:
        print(f"  {att.weight:+.4f}  {att.unit[:60]!r} (present in {att.support} samples)")

# Case selection: structured-only probability in the uncertain band and the
# combined model moved the prediction toward the truth.
rng = np.random.default_rng(4)
n = 200
labels = rng.integers(0, 2, n)
p_structured = np.clip(0.5 + rng.normal(0, 0.08, n), 0.01, 0.99)
p_combined = np.clip(labels * 0.75 + (1 - labels) * 0.25 + rng.normal(0, 0.1, n), 0.01, 0.99)
cases = select_uncertain_cases(p_structured, p_combined, labels, top_n=25)
print(f"\nselected {len(cases.ids)} uncertain cases; best improvement "
      f"{cases.improvements[0]:.3f}")

# Aggregation across cases: mean signed weight per unit, largest magnitude first.
per_case = [
    lime_explain(score_fn, document, n_samples=300, top_k=10, seed=s)
    for s in range(10)
]
print("\ncross-case importance:")
for unit, weight, count in aggregate_importance(per_case, top=5):
    print(f"  {weight:+.4f}  ({count:2d} cases)  {unit!r}")
