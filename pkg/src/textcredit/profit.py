"""Profit-based portfolio evaluation.

Each accepted loan contributes D*L*(1+r)*(1-LGD) + (1-D)*L*(1+r) - L, where
D marks a default, L the loan amount, r the interest rate over the loan's
life, and LGD the loss given default.  Rejected borrowers contribute
nothing.  Curves sweep the number of rejections in descending order of the
predicted default probability.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .metrics import ScoredSet


@dataclass(frozen=True)
class EconConfig:
    lgd: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.lgd <= 1.0:
            raise ValueError(f"lgd must be in [0, 1], got {self.lgd}")


def loan_profit(default: int, amount: float, rate: float, cfg: EconConfig) -> float:
    """Profit of one accepted loan."""
    if amount <= 0:
        raise ValueError("loan amount must be positive")
    if rate < 0:
        raise ValueError("interest rate must be non-negative")
    if default not in (0, 1):
        raise ValueError("default flag must be 0 or 1")
    revenue = amount * (1.0 + rate)
    return default * revenue * (1.0 - cfg.lgd) + (1 - default) * revenue - amount


@dataclass(frozen=True)
class ProfitCurve:
    """Total profit of the accepted set as the k riskiest borrowers are
    rejected, k = 0..N.  ``thresholds[k]`` is the score of the k-th rejected
    borrower (+inf at k = 0)."""

    ks: tuple[int, ...]
    profits: tuple[float, ...]
    thresholds: tuple[float, ...]
    rejection_order: tuple[str, ...]  # record ids, riskiest first

    def __len__(self) -> int:
        return len(self.ks)


def profit_curve(
    scores: ScoredSet,
    economics: Mapping[str, tuple[float, float]],
    cfg: EconConfig = EconConfig(),
) -> ProfitCurve:
    """Profit at every rejection depth.

    Borrowers are rejected in descending score order (record id breaks
    ties); the point at k = 0 is the no-rejection portfolio total and the
    point at k = N is 0.
    """
    missing = [rid for rid in scores.ids if rid not in economics]
    if missing:
        raise ValueError(f"missing loan economics for ids: {missing}")
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores.scores[i], scores.ids[i]))
    per_loan = [
        loan_profit(
            int(scores.labels[i]),
            economics[scores.ids[i]][0],
            economics[scores.ids[i]][1],
            cfg,
        )
        for i in range(n)
    ]
    total = float(sum(per_loan))
    profits = [total]
    thresholds = [math.inf]
    running = total
    for k, i in enumerate(order, start=1):
        running -= per_loan[i]
        profits.append(running)
        thresholds.append(float(scores.scores[i]))
    return ProfitCurve(
        ks=tuple(range(n + 1)),
        profits=tuple(profits),
        thresholds=tuple(thresholds),
        rejection_order=tuple(scores.ids[i] for i in order),
    )


def profit_difference(curve_a: ProfitCurve, curve_b: ProfitCurve) -> list[float]:
    """Per-k profit difference (A minus B); positive means model A is more
    profitable at that rejection depth.  Both curves must rank the same
    portfolio."""
    if len(curve_a) != len(curve_b) or set(curve_a.rejection_order) != set(
        curve_b.rejection_order
    ):
        raise ValueError("curves were built on different portfolios")
    return [a - b for a, b in zip(curve_a.profits, curve_b.profits)]


def profit_max_threshold(curve: ProfitCurve) -> tuple[int, float, float]:
    """(k*, score threshold, max profit) where k* is the smallest rejection
    count achieving the maximum profit."""
    if len(curve) == 0:
        raise ValueError("empty profit curve")
    best_k = int(np.argmax(curve.profits))
    return best_k, curve.thresholds[best_k], curve.profits[best_k]


def save_profit_curve(path: str | Path, curve: ProfitCurve) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "threshold", "profit"])
        for k, thr, p in zip(curve.ks, curve.thresholds, curve.profits):
            writer.writerow([k, "inf" if math.isinf(thr) else f"{thr:.6f}", f"{p:.2f}"])


def save_profit_difference(path: str | Path, diffs: Sequence[float]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "diff"])
        for k, d in enumerate(diffs):
            writer.writerow([k, f"{d:.2f}"])
