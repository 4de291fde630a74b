"""Discrimination metrics and the seed-by-resample bootstrap.

All metrics take a scored set (parallel scores, binary labels, record ids)
and treat label 1 as the positive/defaulter class with higher scores
meaning higher predicted risk.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc

_BOOTSTRAP_MAX_REDRAWS = 100


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if len(self.scores) != len(self.labels) or len(self.scores) != len(self.ids):
            raise ValueError("scores, labels, and ids must have equal length")

    def __len__(self) -> int:
        return len(self.scores)


def _check_both_classes(s: ScoredSet, what: str) -> tuple[int, int]:
    n_pos = int(s.labels.sum())
    n_neg = len(s) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"{what} needs both classes present")
    return n_pos, n_neg


def auc(s: ScoredSet) -> float:
    """Area under the ROC curve via the rank-sum (Mann-Whitney) identity;
    tied score pairs count one half."""
    n_pos, n_neg = _check_both_classes(s, "auc")
    ranks = _average_ranks(s.scores)
    rank_sum_pos = float(ranks[s.labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_grouped_sweep(s: ScoredSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (tp, fp) after each distinct score, descending.

    Returns (thresholds, tp, fp) where entry i covers all items with score
    >= thresholds[i]; tied scores enter together.
    """
    order = np.argsort(-s.scores, kind="mergesort")
    scores = s.scores[order]
    labels = s.labels[order]
    distinct = np.flatnonzero(np.diff(scores) != 0)
    ends = np.append(distinct, len(scores) - 1)
    cum_tp = np.cumsum(labels)[ends].astype(np.float64)
    cum_fp = (ends + 1) - cum_tp
    return scores[ends], cum_tp, cum_fp


def ks(s: ScoredSet) -> float:
    """Kolmogorov-Smirnov statistic: max over thresholds of |TPR - FPR|."""
    n_pos, n_neg = _check_both_classes(s, "ks")
    _, tp, fp = _tie_grouped_sweep(s)
    return float(np.max(np.abs(tp / n_pos - fp / n_neg)))


def roc_points(s: ScoredSet) -> list[tuple[float, float]]:
    """(FPR, TPR) per distinct threshold, descending, with the (0, 0) and
    (1, 1) endpoints included."""
    n_pos, n_neg = _check_both_classes(s, "roc_points")
    _, tp, fp = _tie_grouped_sweep(s)
    pts = [(0.0, 0.0)]
    pts.extend((float(f / n_neg), float(t / n_pos)) for f, t in zip(fp, tp))
    return pts


def pr_points(s: ScoredSet) -> list[tuple[float, float]]:
    """(recall, precision) per distinct threshold, descending."""
    n_pos = int(s.labels.sum())
    if n_pos == 0:
        raise ValueError("pr_points needs at least one positive")
    _, tp, fp = _tie_grouped_sweep(s)
    return [(float(t / n_pos), float(t / (t + f))) for t, f in zip(tp, fp)]


def pr_auc(s: ScoredSet) -> float:
    """Average precision: sum of (delta recall) * precision over the
    descending-score prefix points, tied scores grouped."""
    n_pos = int(s.labels.sum())
    if n_pos == 0:
        raise ValueError("pr_auc needs at least one positive")
    _, tp, fp = _tie_grouped_sweep(s)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    deltas = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(deltas * precision))


def _roc_hull(s: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """Upper convex hull of the ROC points, from (0, 0) to (1, 1)."""
    pts = roc_points(s)
    hull: list[tuple[float, float]] = []
    for p in pts:
        hull.append(p)
        while len(hull) >= 3:
            (x1, y1), (x2, y2), (x3, y3) = hull[-3], hull[-2], hull[-1]
            # middle point below or on the chord -> drop it
            cross = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)
            if cross >= -1e-15:
                hull.pop(-2)
            else:
                break
    xs = np.array([p[0] for p in hull])
    ys = np.array([p[1] for p in hull])
    return xs, ys


def _beta_partial_c(alpha: float, beta: float, lo: float, hi: float) -> float:
    """Integral of c * Beta(c; alpha, beta) over [lo, hi]."""
    w = alpha / (alpha + beta)
    return w * (betainc(alpha + 1, beta, hi) - betainc(alpha + 1, beta, lo))


def _beta_partial_1mc(alpha: float, beta: float, lo: float, hi: float) -> float:
    """Integral of (1 - c) * Beta(c; alpha, beta) over [lo, hi]."""
    w = beta / (alpha + beta)
    return w * (betainc(alpha, beta + 1, hi) - betainc(alpha, beta + 1, lo))


def h_measure(
    s: ScoredSet, severity_ratio: float | None = None, beta_2_2: bool = False
) -> float:
    """Hand's H-measure: expected-loss reduction over the trivial classifier
    under a Beta-distributed normalized misclassification cost.

    The default cost distribution is Beta(pi1 + 1, pi0 + 1), whose mode sits
    at the positive prevalence; an explicit ``severity_ratio`` sr shifts the
    mode to sr / (1 + sr).  ``beta_2_2`` switches to the symmetric Beta(2, 2)
    originally proposed.  Computed exactly on the ROC convex hull via
    incomplete-beta segment sums.
    """
    n_pos, n_neg = _check_both_classes(s, "h_measure")
    pi1 = n_pos / len(s)
    pi0 = n_neg / len(s)
    if beta_2_2:
        a, b = 2.0, 2.0
    else:
        if severity_ratio is None:
            c_star = pi1
        else:
            if severity_ratio <= 0:
                raise ValueError("severity_ratio must be positive")
            c_star = severity_ratio / (1.0 + severity_ratio)
        a, b = 1.0 + c_star, 2.0 - c_star

    xs, ys = _roc_hull(s)
    # Cost at which hull vertex i stops being optimal (moving to vertex i+1):
    # c_i = pi1 * dtpr / (pi1 * dtpr + pi0 * dfpr); costs decrease along the hull.
    switches = []
    for i in range(len(xs) - 1):
        df = xs[i + 1] - xs[i]
        dt = ys[i + 1] - ys[i]
        denom = pi1 * dt + pi0 * df
        switches.append(pi1 * dt / denom if denom > 0 else 1.0)
    loss = 0.0
    for i in range(len(xs)):
        hi = 1.0 if i == 0 else switches[i - 1]
        lo = 0.0 if i == len(xs) - 1 else switches[i]
        if hi <= lo:
            continue
        loss += pi0 * xs[i] * _beta_partial_c(a, b, lo, hi)
        loss += pi1 * (1.0 - ys[i]) * _beta_partial_1mc(a, b, lo, hi)

    c_ref = pi1  # all-positive vs all-negative trivial classifier crossover
    loss_ref = pi0 * _beta_partial_c(a, b, 0.0, c_ref) + pi1 * _beta_partial_1mc(
        a, b, c_ref, 1.0
    )
    h = 1.0 - loss / loss_ref
    return float(min(1.0, max(0.0, h)))


@dataclass(frozen=True)
class TopkMetrics:
    recall: float
    precision: float
    f1: float


def _rejection_order(s: ScoredSet) -> np.ndarray:
    """Indices sorted by score descending, record id ascending."""
    ids = np.asarray(s.ids, dtype=object)
    return np.lexsort((ids, -s.scores))


def _topk_from_order(labels_sorted: np.ndarray, n_pos: int, k: int) -> TopkMetrics:
    tp = int(labels_sorted[:k].sum())
    recall = tp / n_pos if n_pos else 0.0
    precision = tp / k
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return TopkMetrics(recall=recall, precision=precision, f1=f1)


def topk_metrics(s: ScoredSet, k: int) -> TopkMetrics:
    """Classification metrics when the k highest-scored records are rejected
    (predicted positive); score ties break by record id for determinism."""
    n = len(s)
    if not 0 < k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    labels_sorted = s.labels[_rejection_order(s)]
    return _topk_from_order(labels_sorted, int(s.labels.sum()), k)


@dataclass(frozen=True)
class MetricEstimate:
    metric: str
    mean: float
    ci_low: float
    ci_high: float
    n_estimates: int
    skipped_resamples: int = 0


_NAMED_METRICS: dict[str, Callable[[ScoredSet], float]] = {
    "auc": auc,
    "ks": ks,
    "h_measure": h_measure,
    "pr_auc": pr_auc,
}


def resolve_metric(metric) -> tuple[str, Callable[[ScoredSet], float]]:
    if callable(metric):
        return getattr(metric, "__name__", "metric"), metric
    if metric in _NAMED_METRICS:
        return metric, _NAMED_METRICS[metric]
    raise ValueError(f"unknown metric {metric!r}")


def _resample_indices(
    n: int, master_seed: int, run_index: int, resample_index: int, labels: np.ndarray
) -> np.ndarray | None:
    """With-replacement index draw for one (run, resample) task, redrawn up
    to a bounded number of times if it loses a class; None when skipped."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index, resample_index))
    )
    for _ in range(_BOOTSTRAP_MAX_REDRAWS):
        idx = rng.integers(0, n, size=n)
        drawn = labels[idx]
        if drawn.min() != drawn.max():
            return idx
    return None


def _bootstrap_one(
    run: ScoredSet, master_seed: int, run_index: int, resample_index: int, fn
) -> float:
    idx = _resample_indices(len(run), master_seed, run_index, resample_index, run.labels)
    if idx is None:
        return math.nan  # degenerate after bounded retries -> skipped
    ids = np.asarray(run.ids, dtype=object)[idx]
    sample = ScoredSet(scores=run.scores[idx], labels=run.labels[idx], ids=tuple(ids))
    return float(fn(sample))


def bootstrap(
    metric,
    runs: Sequence[ScoredSet],
    n_resamples: int = 1000,
    master_seed: int = 0,
    workers: int = 1,
) -> MetricEstimate:
    """Bootstrap a metric over model runs x resamples.

    Every run must score the same record ids.  Each (run, resample) task
    draws ids with replacement from a seed derived from (master_seed,
    run_index, resample_index), so results are independent of execution
    order and worker count.  Single-class resamples are redrawn up to a
    bounded number of times and then skipped (counted).  The estimate is
    the mean with 95% percentile bounds over all collected values.
    """
    if not runs:
        raise ValueError("need at least one run")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    ref_ids = set(runs[0].ids)
    for r in runs[1:]:
        if set(r.ids) != ref_ids:
            raise ValueError("all runs must cover the same record ids")
    name, fn = resolve_metric(metric)

    tasks = [(ri, si) for ri in range(len(runs)) for si in range(n_resamples)]
    values = np.empty(len(tasks), dtype=np.float64)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(
                lambda t: _bootstrap_one(runs[t[0]], master_seed, t[0], t[1], fn), tasks
            )
            for i, v in enumerate(results):
                values[i] = v
    else:
        for i, (ri, si) in enumerate(tasks):
            values[i] = _bootstrap_one(runs[ri], master_seed, ri, si, fn)

    collected = values[~np.isnan(values)]
    skipped = int(np.isnan(values).sum())
    if collected.size == 0:
        raise ValueError("every bootstrap resample was degenerate")
    lo, hi = np.percentile(collected, [2.5, 97.5])
    return MetricEstimate(
        metric=name,
        mean=float(collected.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
        n_estimates=int(collected.size),
        skipped_resamples=skipped,
    )


def topk_bootstrap(
    runs: Sequence[ScoredSet],
    ks: Sequence[int],
    n_resamples: int = 1000,
    master_seed: int = 0,
    workers: int = 1,
) -> dict[int, dict[str, MetricEstimate]]:
    """Bootstrap recall/precision/F1 at several rejection counts at once.

    Resamples are drawn exactly as in :func:`bootstrap` (same per-task seed
    derivation), but each (run, resample) draw is sorted once and reused
    for every k, so a full rejection table costs one pass.
    """
    if not runs:
        raise ValueError("need at least one run")
    for k in ks:
        if not 0 < k <= len(runs[0]):
            raise ValueError(f"k must be in 1..{len(runs[0])}, got {k}")
    ref_ids = set(runs[0].ids)
    for r in runs[1:]:
        if set(r.ids) != ref_ids:
            raise ValueError("all runs must cover the same record ids")

    fields = ("recall", "precision", "f1")
    tasks = [(ri, si) for ri in range(len(runs)) for si in range(n_resamples)]
    values = np.full((len(tasks), len(ks), 3), np.nan)

    id_arrays = [np.asarray(r.ids, dtype=object) for r in runs]

    def one(task_index: int) -> None:
        ri, si = tasks[task_index]
        run = runs[ri]
        idx = _resample_indices(len(run), master_seed, ri, si, run.labels)
        if idx is None:
            return
        sample = ScoredSet(
            scores=run.scores[idx],
            labels=run.labels[idx],
            ids=tuple(id_arrays[ri][idx]),
        )
        labels_sorted = sample.labels[_rejection_order(sample)]
        n_pos = int(sample.labels.sum())
        for kj, k in enumerate(ks):
            m = _topk_from_order(labels_sorted, n_pos, k)
            values[task_index, kj] = (m.recall, m.precision, m.f1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(len(tasks))))
    else:
        for t in range(len(tasks)):
            one(t)

    out: dict[int, dict[str, MetricEstimate]] = {}
    for kj, k in enumerate(ks):
        out[k] = {}
        for fj, field in enumerate(fields):
            col = values[:, kj, fj]
            collected = col[~np.isnan(col)]
            skipped = int(np.isnan(col).sum())
            if collected.size == 0:
                raise ValueError("every bootstrap resample was degenerate")
            lo, hi = np.percentile(collected, [2.5, 97.5])
            out[k][field] = MetricEstimate(
                metric=f"{field}@{k}",
                mean=float(collected.mean()),
                ci_low=float(lo),
                ci_high=float(hi),
                n_estimates=int(collected.size),
                skipped_resamples=skipped,
            )
    return out
