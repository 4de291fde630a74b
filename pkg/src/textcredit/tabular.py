"""Structured-feature preprocessing: imputation, WoE encoding, IV and VIF selection.

Weight of evidence turns each bin of a feature into the log ratio of the
non-defaulter share to the defaulter share in that bin; a large negative
value marks a high-default-risk bin.  Information value summarises a
feature's overall strength, and the variance inflation factor screens the
encoded matrix for multicollinearity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, LoanRecord


@dataclass(frozen=True)
class BinningSpec:
    """Per-feature bin assignment rules fitted on training data.

    Continuous features use strictly increasing interior edges: k edges
    give k+1 half-open bins [lo, hi) with unbounded tails.  Categorical
    features map each training-time category to a bin id; unseen categories
    fall into a reserved bin.
    """

    continuous_edges: Mapping[str, np.ndarray]
    categorical_levels: Mapping[str, Mapping[str, int]]

    def n_bins(self, feature: str) -> int:
        if feature in self.continuous_edges:
            return len(self.continuous_edges[feature]) + 1
        return len(self.categorical_levels[feature])

    def unseen_bin(self, feature: str) -> int:
        """Reserved bin id for categories unseen at fit time."""
        return len(self.categorical_levels[feature])

    def assign(self, feature: str, value) -> int:
        if feature in self.continuous_edges:
            if value is None or not isinstance(value, (int, float)):
                raise ValueError(
                    f"cannot bin non-numeric value {value!r} for feature {feature!r};"
                    " impute before encoding"
                )
            return int(np.searchsorted(self.continuous_edges[feature], value, side="right"))
        if feature in self.categorical_levels:
            if value is None:
                raise ValueError(
                    f"cannot bin missing categorical value for feature {feature!r};"
                    " impute before encoding"
                )
            return self.categorical_levels[feature].get(str(value), self.unseen_bin(feature))
        raise ValueError(f"feature {feature!r} not covered by the binning spec")


@dataclass(frozen=True)
class FeatureWoe:
    bin_good: np.ndarray  # per-bin non-defaulter counts
    bin_bad: np.ndarray  # per-bin defaulter counts
    woe: np.ndarray
    iv: float


@dataclass(frozen=True)
class WoeTable:
    """Fitted tabular encoder: per-feature bin counts, WoE values, and IV."""

    features: Mapping[str, FeatureWoe]
    binning: BinningSpec
    total_good: int
    total_bad: int
    smoothing: float

    def order(self, schema_names: Sequence[str]) -> list[str]:
        return [n for n in schema_names if n in self.features]


@dataclass(frozen=True)
class EncodedMatrix:
    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # shape (len(ids), len(columns)), float64, all finite

    def __post_init__(self):
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise ValueError(
                f"matrix shape {self.values.shape} does not match"
                f" {len(self.ids)} ids x {len(self.columns)} columns"
            )
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("encoded matrix contains non-finite entries")


def impute(dataset: Dataset, train_indices: Sequence[int]) -> Dataset:
    """Fill missing values: continuous with the train-set mean, categorical
    with the literal category ``"MISSING"``.  All rows are filled with
    statistics computed on the training rows only."""
    if len(train_indices) == 0:
        raise ValueError("train_indices must be non-empty")
    means: dict[str, float] = {}
    for spec in dataset.schema:
        if spec.kind != "continuous":
            continue
        vals = [
            dataset.records[i].features[spec.name]
            for i in train_indices
            if dataset.records[i].features[spec.name] is not None
        ]
        if not vals:
            raise ValueError(
                f"feature {spec.name!r} is missing in every training row"
            )
        means[spec.name] = float(np.mean(vals))

    new_records = []
    for rec in dataset.records:
        feats = dict(rec.features)
        changed = False
        for spec in dataset.schema:
            if feats[spec.name] is None:
                feats[spec.name] = (
                    means[spec.name] if spec.kind == "continuous" else "MISSING"
                )
                changed = True
        if changed:
            rec = LoanRecord(
                id=rec.id,
                features=feats,
                human_text=rec.human_text,
                label=rec.label,
                loan_amount=rec.loan_amount,
                interest_rate=rec.interest_rate,
                term_months=rec.term_months,
                refined_texts=rec.refined_texts,
            )
        new_records.append(rec)
    return Dataset(records=tuple(new_records), schema=dataset.schema)


def fit_binning(
    dataset: Dataset, train_indices: Sequence[int], n_bins: int = 5
) -> BinningSpec:
    """Quantile binning for continuous features (``n_bins`` equal-frequency
    bins on training data, duplicate edges dropped); identity binning for
    categorical features with a reserved unseen bin."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    cont_edges: dict[str, np.ndarray] = {}
    cat_levels: dict[str, dict[str, int]] = {}
    for spec in dataset.schema:
        values = [dataset.records[i].features[spec.name] for i in train_indices]
        if spec.kind == "continuous":
            arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
            if arr.size == 0:
                raise ValueError(f"no training values to bin for {spec.name!r}")
            qs = np.quantile(arr, np.linspace(0, 1, n_bins + 1)[1:-1])
            edges = np.unique(qs)
            cont_edges[spec.name] = edges
        else:
            levels = sorted({str(v) for v in values if v is not None})
            cat_levels[spec.name] = {lvl: i for i, lvl in enumerate(levels)}
    return BinningSpec(continuous_edges=cont_edges, categorical_levels=cat_levels)


def fit_woe(
    dataset: Dataset,
    train_indices: Sequence[int],
    binning: BinningSpec,
    smoothing: float = 0.5,
) -> WoeTable:
    """Fit WoE values on the training rows.

    woe_b = ln(((g_b + s) / (G + s*n_bins)) / ((b_b + s) / (B + s*n_bins)))
    with additive smoothing ``s`` keeping every value finite.  The reserved
    unseen-category bin is excluded from the table (it encodes to 0).
    """
    labels = dataset.labels(train_indices)
    total_bad = int(labels.sum())
    total_good = int(len(labels) - total_bad)
    if total_good == 0 or total_bad == 0:
        raise ValueError("training set must contain both labels to fit WoE")

    features: dict[str, FeatureWoe] = {}
    for spec in dataset.schema:
        nb = binning.n_bins(spec.name)
        good = np.zeros(nb, dtype=np.float64)
        bad = np.zeros(nb, dtype=np.float64)
        for i in train_indices:
            rec = dataset.records[i]
            b = binning.assign(spec.name, rec.features[spec.name])
            if b >= nb:  # unseen bin cannot occur for training rows
                raise ValueError(
                    f"training value fell into the unseen bin for {spec.name!r}"
                )
            if rec.label == 1:
                bad[b] += 1
            else:
                good[b] += 1
        woe = _smoothed_woe(good, bad, total_good, total_bad, smoothing)
        iv = _information_value(good, bad, total_good, total_bad, smoothing, woe)
        features[spec.name] = FeatureWoe(bin_good=good, bin_bad=bad, woe=woe, iv=iv)
    return WoeTable(
        features=features,
        binning=binning,
        total_good=total_good,
        total_bad=total_bad,
        smoothing=smoothing,
    )


def _smoothed_proportions(counts, total, smoothing, n_bins):
    return (counts + smoothing) / (total + smoothing * n_bins)


def _smoothed_woe(good, bad, total_good, total_bad, smoothing):
    nb = len(good)
    pg = _smoothed_proportions(good, total_good, smoothing, nb)
    pb = _smoothed_proportions(bad, total_bad, smoothing, nb)
    return np.log(pg / pb)


def _information_value(good, bad, total_good, total_bad, smoothing, woe):
    nb = len(good)
    pg = _smoothed_proportions(good, total_good, smoothing, nb)
    pb = _smoothed_proportions(bad, total_bad, smoothing, nb)
    return float(np.sum((pg - pb) * woe))


def information_value(table: WoeTable, feature: str) -> float:
    """IV = sum over bins of (good share - bad share) * woe, using the same
    smoothed proportions as the WoE fit.  Always >= 0."""
    if feature not in table.features:
        raise ValueError(f"feature {feature!r} was not fitted")
    fw = table.features[feature]
    return _information_value(
        fw.bin_good, fw.bin_bad, table.total_good, table.total_bad, table.smoothing, fw.woe
    )


def select_by_iv(
    table: WoeTable, schema_names: Sequence[str], lo: float = 0.01, hi: float = 0.50
) -> list[str]:
    """Retain features with ``lo < IV < hi`` (strict), in schema order."""
    out = []
    for name in schema_names:
        if name not in table.features:
            continue
        iv = table.features[name].iv
        if lo < iv < hi:
            out.append(name)
    return out


def _vif(values: np.ndarray, k: int) -> float:
    """VIF of column k against the remaining columns plus an intercept."""
    y = values[:, k]
    others = np.delete(values, k, axis=1)
    X = np.column_stack([np.ones(len(y)), others])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-12:  # constant column duplicates the intercept
        return math.inf
    r2 = 1.0 - ss_res / ss_tot
    if r2 >= 1.0 - 1e-12:
        return math.inf
    return 1.0 / (1.0 - r2)


def vif_filter(matrix: EncodedMatrix, threshold: float = 10.0) -> list[str]:
    """Iteratively drop the column with the largest VIF above ``threshold``;
    survivors are returned in their original order.  Exact collinearity
    (R^2 = 1) counts as infinite VIF."""
    n_rows, n_cols = matrix.values.shape
    if n_cols < 2:
        return list(matrix.columns)
    if n_rows < n_cols:
        raise ValueError(
            f"need at least as many rows ({n_rows}) as columns ({n_cols}) for VIF"
        )
    keep = list(range(n_cols))
    while len(keep) >= 2:
        sub = matrix.values[:, keep]
        vifs = [_vif(sub, j) for j in range(len(keep))]
        worst = int(np.argmax(vifs))
        if vifs[worst] > threshold:
            keep.pop(worst)
        else:
            break
    return [matrix.columns[j] for j in keep]


def encode(
    dataset: Dataset, table: WoeTable, selected: Sequence[str]
) -> EncodedMatrix:
    """WoE-encode the selected features for every record.

    Each cell holds the WoE of the record's bin; categories unseen at fit
    time encode to 0 (neutral evidence).
    """
    for name in selected:
        if name not in table.features:
            raise ValueError(f"feature {name!r} was not fitted")
    n = len(dataset)
    values = np.zeros((n, len(selected)), dtype=np.float64)
    for j, name in enumerate(selected):
        fw = table.features[name]
        nb = len(fw.woe)
        for i, rec in enumerate(dataset.records):
            b = table.binning.assign(name, rec.features[name])
            values[i, j] = fw.woe[b] if b < nb else 0.0
    return EncodedMatrix(ids=tuple(dataset.ids()), columns=tuple(selected), values=values)


def woe_table_to_json(table: WoeTable) -> str:
    """Serialize the fitted encoder for audit (feature -> bins/counts/woe/iv)."""
    payload = {
        "smoothing": table.smoothing,
        "total_good": table.total_good,
        "total_bad": table.total_bad,
        "features": {
            name: {
                "good": fw.bin_good.tolist(),
                "bad": fw.bin_bad.tolist(),
                "woe": fw.woe.tolist(),
                "iv": fw.iv,
            }
            for name, fw in table.features.items()
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)
