"""Loan corpus data model: ingestion, stratified splitting, text length stats.

A dataset is a flat list of loan records.  Each record carries structured
features (continuous or categorical, possibly missing), the loan officer's
free text, optional machine-refined text variants, the default label, and
the loan economics needed for profit evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

REFINED_TAGS = ("full", "positive", "negative", "pos_neg", "neg_pos")

FEATURE_KINDS = ("continuous", "categorical")


class DatasetError(ValueError):
    """Base class for corpus ingestion/validation failures."""


class SchemaMismatch(DatasetError):
    """A record's feature keys do not match the schema."""


class DuplicateId(DatasetError):
    """Two records share the same id."""


class InvalidLabel(DatasetError):
    """Label outside {0, 1}."""


class DegenerateSplit(DatasetError):
    """A split produced an empty set or a single-class training set."""


class MissingText(DatasetError):
    """A record lacks the text selected for an operation."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "continuous" | "categorical"

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise DatasetError(f"unknown feature kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class LoanRecord:
    """One borrower.

    ``features`` maps feature name to a float (continuous), a str
    (categorical), or None (missing).  ``label`` is 1 for defaulters.
    ``interest_rate`` is the dimensionless rate over the life of the loan.
    """

    id: str
    features: Mapping[str, float | str | None]
    human_text: str
    label: int
    loan_amount: float
    interest_rate: float
    term_months: int
    refined_texts: Mapping[str, str] = field(default_factory=dict)

    def text(self, selector: str) -> str:
        """Return the selected text: ``"human"`` or a refined-variant tag."""
        if selector == "human":
            return self.human_text
        if selector in REFINED_TAGS:
            return self.refined_texts.get(selector, "")
        raise MissingText(f"unknown text selector {selector!r}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[LoanRecord, ...]
    schema: tuple[FeatureSpec, ...]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def feature_names(self) -> list[str]:
        return [s.name for s in self.schema]

    def kind_of(self, name: str) -> str:
        for s in self.schema:
            if s.name == name:
                return s.kind
        raise KeyError(name)

    def labels(self, indices: Sequence[int] | None = None) -> np.ndarray:
        idx = range(len(self.records)) if indices is None else indices
        return np.array([self.records[i].label for i in idx], dtype=np.int64)

    def ids(self, indices: Sequence[int] | None = None) -> list[str]:
        idx = range(len(self.records)) if indices is None else indices
        return [self.records[i].id for i in idx]


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    seed: int


def load_schema(path: str | Path) -> tuple[FeatureSpec, ...]:
    """Read a schema file: a JSON list of ``{"name": ..., "kind": ...}``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"schema file not found: {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    return tuple(FeatureSpec(entry["name"], entry["kind"]) for entry in raw)


def save_schema(path: str | Path, schema: Sequence[FeatureSpec]) -> None:
    payload = [{"name": s.name, "kind": s.kind} for s in schema]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _parse_feature(name: str, kind: str, value, lineno: int):
    if value is None or (isinstance(value, str) and value == ""):
        return None
    if kind == "continuous":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DatasetError(
                f"line {lineno}: feature {name!r} expects a number, got {value!r}"
            )
        return float(value)
    return str(value)


def load_dataset(path: str | Path, schema: Sequence[FeatureSpec]) -> Dataset:
    """Load a JSON-lines corpus file against ``schema``.

    One record per line.  Continuous fields must be numeric or null/empty
    (null becomes missing); records must carry exactly the schema's feature
    keys; ids must be unique; labels must be 0 or 1; unknown refined-text
    tags are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    names = [s.name for s in schema]
    kinds = {s.name: s.kind for s in schema}
    records: list[LoanRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"line {lineno}: invalid JSON ({err})") from err
            rid = str(raw["id"])
            if rid in seen:
                raise DuplicateId(f"line {lineno}: duplicate record id {rid!r}")
            seen.add(rid)
            label = raw["label"]
            if label not in (0, 1):
                raise InvalidLabel(f"line {lineno}: label {label!r} not in {{0, 1}}")
            feats_raw = raw.get("features", {})
            extra = set(feats_raw) - set(names)
            missing = set(names) - set(feats_raw)
            if extra or missing:
                raise SchemaMismatch(
                    f"line {lineno}: feature keys do not match schema"
                    f" (missing={sorted(missing)}, extra={sorted(extra)})"
                )
            features = {
                name: _parse_feature(name, kinds[name], feats_raw[name], lineno)
                for name in names
            }
            refined = raw.get("refined_texts", {}) or {}
            for tag in refined:
                if tag not in REFINED_TAGS:
                    raise DatasetError(f"line {lineno}: unknown refined-text tag {tag!r}")
            records.append(
                LoanRecord(
                    id=rid,
                    features=features,
                    human_text=str(raw.get("human_text", "")),
                    label=int(label),
                    loan_amount=float(raw["loan_amount"]),
                    interest_rate=float(raw["interest_rate"]),
                    term_months=int(raw["term_months"]),
                    refined_texts={t: str(v) for t, v in refined.items()},
                )
            )
    return Dataset(records=tuple(records), schema=tuple(schema))


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write a dataset in the JSON-lines corpus format (stable field order)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in dataset.records:
            row = {
                "id": rec.id,
                "label": rec.label,
                "loan_amount": rec.loan_amount,
                "interest_rate": rec.interest_rate,
                "term_months": rec.term_months,
                "features": {s.name: rec.features[s.name] for s in dataset.schema},
                "human_text": rec.human_text,
                "refined_texts": {
                    t: rec.refined_texts[t] for t in REFINED_TAGS if t in rec.refined_texts
                },
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def _ceil_snapped(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def _allocate_counts(raw: list[float], total: int, sizes: list[int]) -> list[int]:
    """Largest-remainder allocation of ``total`` across strata.

    Initial counts are half-up rounds of ``raw``; the difference to
    ``total`` is settled on fractional remainders, preferring the smaller
    stratum (minority first) when adding and the larger when removing.
    """
    k = len(raw)
    counts = [min(_round_half_up(r), size) for r, size in zip(raw, sizes)]
    rem = [r - math.floor(r + 1e-9) for r in raw]
    need = total - sum(counts)
    if need > 0:
        order = sorted(range(k), key=lambda i: (-rem[i], sizes[i], -i))
        j = 0
        while need > 0 and any(counts[i] < sizes[i] for i in range(k)):
            i = order[j % k]
            if counts[i] < sizes[i]:
                counts[i] += 1
                need -= 1
            j += 1
    elif need < 0:
        order = sorted(range(k), key=lambda i: (rem[i], -sizes[i], i))
        j = 0
        while need < 0 and any(c > 0 for c in counts):
            i = order[j % k]
            if counts[i] > 0:
                counts[i] -= 1
                need += 1
            j += 1
    return counts


def stratified_split(
    dataset: Dataset,
    train_frac: float = 0.7,
    val_frac_of_train: float = 0.2,
    seed: int = 0,
) -> SplitIndices:
    """Stratified train/validation/test split.

    Test counts per label are half-up rounds of ``stratum * (1 -
    train_frac)`` corrected to the total by largest remainder.  The
    validation count is ``ceil(val_frac_of_train * train_pool)`` allocated
    across strata by largest remainder (minority stratum wins ties, and the
    validation set keeps at least one defaulter whenever the pool has one).
    Deterministic given ``seed``.
    """
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    if not 0 <= val_frac_of_train < 1:
        raise ValueError(f"val_frac_of_train must be in [0, 1), got {val_frac_of_train}")
    n = len(dataset)
    labels = dataset.labels()
    strata = sorted(set(labels.tolist()))
    if len(strata) < 2:
        raise DegenerateSplit("dataset must contain both labels")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for lab in strata:
        idx = np.flatnonzero(labels == lab)
        rng.shuffle(idx)
        by_label[lab] = idx.tolist()

    sizes = [len(by_label[lab]) for lab in strata]
    test_frac = 1.0 - train_frac
    test_total = min(_round_half_up(n * test_frac), n)
    test_counts = _allocate_counts([s * test_frac for s in sizes], test_total, sizes)

    pool_sizes = [s - t for s, t in zip(sizes, test_counts)]
    pool_total = sum(pool_sizes)
    val_total = min(_ceil_snapped(val_frac_of_train * pool_total), pool_total)
    val_counts = _allocate_counts(
        [p * val_frac_of_train for p in pool_sizes], val_total, pool_sizes
    )
    # Keep a defaulter in validation when the pool has one to give.
    minority = int(np.argmin(sizes))
    if (
        val_total >= 1
        and strata[minority] == 1
        and pool_sizes[minority] >= 1
        and val_counts[minority] == 0
    ):
        donor = int(np.argmax(val_counts))
        if val_counts[donor] > 0:
            val_counts[donor] -= 1
            val_counts[minority] += 1

    train_idx: list[int] = []
    val_idx: list[int] = []
    test_idx: list[int] = []
    for lab, t_count, v_count in zip(strata, test_counts, val_counts):
        order = by_label[lab]
        test_idx.extend(order[:t_count])
        val_idx.extend(order[t_count : t_count + v_count])
        train_idx.extend(order[t_count + v_count :])

    if not train_idx or not test_idx:
        raise DegenerateSplit("train or test set is empty")
    if val_frac_of_train > 0 and not val_idx:
        raise DegenerateSplit("validation set is empty but val_frac_of_train > 0")
    if len(set(labels[train_idx].tolist())) < 2:
        raise DegenerateSplit("training set is single-class")
    return SplitIndices(
        train=tuple(sorted(train_idx)),
        val=tuple(sorted(val_idx)),
        test=tuple(sorted(test_idx)),
        seed=seed,
    )


@dataclass(frozen=True)
class LengthStats:
    count: int
    mean: float
    sd: float


def text_length_stats(
    dataset: Dataset, text_selector: str, tokenizer
) -> dict[int, LengthStats]:
    """Per-label token-count statistics of the selected text.

    ``sd`` is the sample standard deviation (n-1 denominator); a single
    observation reports sd 0 so downstream reports stay total.
    """
    from .textfeat import tokenize

    counts: dict[int, list[int]] = {}
    for rec in dataset.records:
        text = rec.text(text_selector)
        if not text:
            raise MissingText(f"record {rec.id!r} has no {text_selector!r} text")
        counts.setdefault(rec.label, []).append(len(tokenize(tokenizer, text)))
    out = {}
    for label, lens in sorted(counts.items()):
        arr = np.asarray(lens, dtype=np.float64)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        out[label] = LengthStats(count=len(arr), mean=float(arr.mean()), sd=sd)
    return out


def economics(dataset: Dataset) -> dict[str, tuple[float, float]]:
    """Map record id to (loan_amount, interest_rate) for profit evaluation."""
    return {rec.id: (rec.loan_amount, rec.interest_rate) for rec in dataset.records}


def subset(dataset: Dataset, indices: Iterable[int]) -> Dataset:
    return Dataset(
        records=tuple(dataset.records[i] for i in indices), schema=dataset.schema
    )
