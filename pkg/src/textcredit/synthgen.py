"""Deterministic synthetic loan corpus with planted tabular and text signal.

Each record's default probability is a logistic of an intercept (calibrated
to the target default rate) plus per-feature and per-clause log-odds
contributions; the sidecar records every contribution so pipelines can be
verified against exact ground truth.  A rule-based refiner rewrites each
assessment under the two-part factor template (risk-raising clauses go to
the default-factors section), so refined texts parse through the standard
section parser and are longer for riskier borrowers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, FeatureSpec, LoanRecord
from .refine import compose_variant, parse_sections

_POS_HEADER = "1. Factors supporting the borrower's repayment:"
_NEG_HEADER = "2. Factors that could potentially lead to the borrower's default:"

# (clause text, log-odds contribution); positive raises default risk.  The
# contributions are strong on purpose: desk-scale corpora must separate the
# text-aware model from the structured-only one by more than the width of a
# percentile bootstrap interval.
DEFAULT_RISKY_CLAUSES: tuple[tuple[str, float], ...] = (
    ("the borrower has several overdue credit card payments", 2.6),
    ("the shop inventory is piling up with slow turnover", 2.0),
    ("receivables are large and collection is uncertain", 2.2),
    ("the borrower is involved in a pending lawsuit over unpaid invoices", 2.8),
    ("cash reserves are thin after a recent expansion", 1.7),
    ("sales dropped sharply in the last quarter", 2.4),
    ("the borrower changed business lines twice in two years", 1.5),
    ("a key customer cancelled its standing order", 1.9),
    ("the declared income could not be fully verified", 2.2),
    ("rent arrears were reported by the market manager", 2.6),
)

DEFAULT_SAFE_CLAUSES: tuple[tuple[str, float], ...] = (
    ("the borrower is honest and cooperative during the investigation", -2.2),
    ("historical data reflect stable business operations", -2.4),
    ("previous loan payments were always made on time", -2.8),
    ("the borrower has a wide network of long-standing customers", -1.9),
    ("the credit system shows a clean repayment history", -2.6),
    ("the shop enjoys steady foot traffic and healthy margins", -2.0),
    ("the borrower keeps orderly books and provides full documentation", -1.9),
    ("family members support the business with extra workforce", -1.5),
    ("the supplier offers favourable payment terms", -1.7),
    ("demand for the borrower's products is seasonal but reliable", -1.3),
)


@dataclass(frozen=True)
class SynthConfig:
    n: int = 2460
    default_rate: float = 60 / 2460
    seed: int = 0
    tabular_signal: Mapping[str, float] = field(
        default_factory=lambda: {"debt_ratio": 0.9, "liquidity": -0.8, "firm_age": -0.5}
    )
    categorical_signal: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {
            "region": {"north": 0.4, "south": -0.4, "east": 0.0, "west": 0.2}
        }
    )
    n_noise_continuous: int = 3
    n_noise_categorical: int = 2
    risky_clauses: tuple[tuple[str, float], ...] = DEFAULT_RISKY_CLAUSES
    safe_clauses: tuple[tuple[str, float], ...] = DEFAULT_SAFE_CLAUSES
    clauses_per_text: tuple[int, int] = (3, 7)
    amount_range: tuple[float, float] = (10_000.0, 200_000.0)
    rate_range: tuple[float, float] = (0.03, 0.16)
    missing_rate: float = 0.02
    refine: bool = True
    calibration_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.default_rate < 1.0:
            raise ValueError("default_rate must be in (0, 1)")
        if not self.risky_clauses or not self.safe_clauses:
            raise ValueError("clause banks must be non-empty")
        lo, hi = self.clauses_per_text
        if lo < 1 or hi < lo:
            raise ValueError("clauses_per_text must satisfy 1 <= lo <= hi")


def null_config(n: int = 2000, default_rate: float = 0.10, seed: int = 0) -> SynthConfig:
    """A zero-signal corpus: same shape, every contribution 0."""
    return SynthConfig(
        n=n,
        default_rate=default_rate,
        seed=seed,
        tabular_signal={"debt_ratio": 0.0, "liquidity": 0.0, "firm_age": 0.0},
        categorical_signal={"region": {"north": 0.0, "south": 0.0, "east": 0.0, "west": 0.0}},
        risky_clauses=tuple((text, 0.0) for text, _ in DEFAULT_RISKY_CLAUSES),
        safe_clauses=tuple((text, 0.0) for text, _ in DEFAULT_SAFE_CLAUSES),
    )


def planted_config(n: int = 2000, default_rate: float = 0.10, seed: int = 0) -> SynthConfig:
    """The default mixed tabular+text planted-signal corpus at desk scale."""
    return SynthConfig(n=n, default_rate=default_rate, seed=seed)


def text_only_config(n: int = 2000, default_rate: float = 0.10, seed: int = 0) -> SynthConfig:
    """Signal carried by the text alone; tabular features are pure noise."""
    return SynthConfig(
        n=n,
        default_rate=default_rate,
        seed=seed,
        tabular_signal={"debt_ratio": 0.0, "liquidity": 0.0, "firm_age": 0.0},
        categorical_signal={"region": {"north": 0.0, "south": 0.0, "east": 0.0, "west": 0.0}},
    )


def _calibrate_intercept(contribs: np.ndarray, target: float, tol: float) -> float:
    """Find b with mean(sigmoid(b + contribs)) = target by bisection."""
    lo, hi = -40.0, 40.0

    def mean_p(b: float) -> float:
        return float(np.mean(1.0 / (1.0 + np.exp(-(b + contribs)))))

    if not mean_p(lo) <= target <= mean_p(hi):
        raise ValueError("intercept calibration cannot reach the target rate")
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if mean_p(mid) < target:
            lo = mid
        else:
            hi = mid
        if abs(mean_p(mid) - target) <= tol:
            return mid
    raise ValueError(
        f"intercept calibration did not converge to {target} within tolerance {tol}"
    )


def _refined_sections(
    clauses: Sequence[tuple[str, float]]
) -> tuple[str, str]:
    positive = [text for text, c in clauses if c <= 0]
    negative = [text for text, c in clauses if c > 0]

    def sentence(t: str) -> str:
        return t[0].upper() + t[1:] + "."

    pos_body = " ".join(sentence(t) for t in positive) or (
        "No notable supporting factors were identified."
    )
    neg_parts = [
        sentence(t) + " This may impair timely repayment and warrants close review."
        for t in negative
    ]
    neg_body = " ".join(neg_parts) or "No notable default factors were identified."
    return pos_body, neg_body


def generate(cfg: SynthConfig) -> tuple[Dataset, dict]:
    """Generate a corpus and its ground-truth sidecar, deterministically.

    The sidecar carries the calibrated intercept and, per record, the exact
    log-odds contributions and sampling probability.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n

    cont_signal = list(cfg.tabular_signal)
    cat_signal = list(cfg.categorical_signal)
    noise_cont = [f"noise_c{j}" for j in range(cfg.n_noise_continuous)]
    noise_cat = [f"noise_k{j}" for j in range(cfg.n_noise_categorical)]
    schema = (
        [FeatureSpec(name, "continuous") for name in cont_signal + noise_cont]
        + [FeatureSpec(name, "categorical") for name in cat_signal + noise_cat]
    )

    cont_values = {name: rng.standard_normal(n) for name in cont_signal + noise_cont}
    cat_choices = {name: sorted(cfg.categorical_signal[name]) for name in cat_signal}
    for name in noise_cat:
        cat_choices[name] = ["A", "B", "C", "D"]
    cat_values = {
        name: rng.choice(cat_choices[name], size=n) for name in cat_signal + noise_cat
    }

    bank = list(cfg.risky_clauses) + list(cfg.safe_clauses)
    lo, hi = cfg.clauses_per_text
    clause_counts = rng.integers(lo, hi + 1, size=n)
    record_clauses: list[list[int]] = [
        sorted(rng.choice(len(bank), size=int(c), replace=False).tolist())
        for c in clause_counts
    ]

    contribs = np.zeros(n)
    per_record_feature_contrib: list[dict[str, float]] = []
    for i in range(n):
        fc: dict[str, float] = {}
        for name in cont_signal:
            fc[name] = cfg.tabular_signal[name] * float(cont_values[name][i])
        for name in cat_signal:
            fc[name] = float(cfg.categorical_signal[name][str(cat_values[name][i])])
        clause_sum = float(sum(bank[j][1] for j in record_clauses[i]))
        contribs[i] = sum(fc.values()) + clause_sum
        per_record_feature_contrib.append(fc)

    intercept = _calibrate_intercept(contribs, cfg.default_rate, cfg.calibration_tol)
    probs = 1.0 / (1.0 + np.exp(-(intercept + contribs)))
    labels = (rng.random(n) < probs).astype(int)

    amounts = np.round(rng.uniform(*cfg.amount_range, size=n), 2)
    rates = np.round(rng.uniform(*cfg.rate_range, size=n), 4)
    terms = rng.integers(1, 9, size=n)

    # missing-value injection (ground-truth contributions use drawn values)
    miss_cont = {
        name: rng.random(n) < cfg.missing_rate for name in cont_signal + noise_cont
    }
    miss_cat = {
        name: rng.random(n) < cfg.missing_rate for name in cat_signal + noise_cat
    }

    records = []
    sidecar_records = {}
    for i in range(n):
        rid = f"L{i:05d}"
        features: dict[str, float | str | None] = {}
        for name in cont_signal + noise_cont:
            features[name] = None if miss_cont[name][i] else float(cont_values[name][i])
        for name in cat_signal + noise_cat:
            features[name] = None if miss_cat[name][i] else str(cat_values[name][i])

        clauses = [bank[j] for j in record_clauses[i]]
        human_text = " ".join(t[0].upper() + t[1:] + "." for t, _ in clauses)

        refined: dict[str, str] = {}
        if cfg.refine:
            pos_body, neg_body = _refined_sections(clauses)
            full = f"{_POS_HEADER} {pos_body} {_NEG_HEADER} {neg_body}"
            sections = parse_sections(full)
            refined = {
                "full": full,
                "positive": sections["positive"],
                "negative": sections["negative"],
                "pos_neg": compose_variant(sections, "pos_neg"),
                "neg_pos": compose_variant(sections, "neg_pos"),
            }

        records.append(
            LoanRecord(
                id=rid,
                features=features,
                human_text=human_text,
                label=int(labels[i]),
                loan_amount=float(amounts[i]),
                interest_rate=float(rates[i]),
                term_months=int(terms[i]),
                refined_texts=refined,
            )
        )
        sidecar_records[rid] = {
            "feature_contributions": per_record_feature_contrib[i],
            "clause_contributions": [
                {"clause": bank[j][0], "contribution": bank[j][1]}
                for j in record_clauses[i]
            ],
            "logit": float(intercept + contribs[i]),
            "prob": float(probs[i]),
        }

    sidecar = {
        "intercept": intercept,
        "target_default_rate": cfg.default_rate,
        "realized_default_rate": float(labels.mean()),
        "seed": cfg.seed,
        "clause_bank": [{"clause": t, "contribution": c} for t, c in bank],
        "records": sidecar_records,
    }
    return Dataset(records=tuple(records), schema=tuple(schema)), sidecar


def save_sidecar(path: str | Path, sidecar: dict) -> None:
    Path(path).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
