"""Perturbation-based local text attribution at word and phrase granularity.

A black-box scorer is probed with copies of one document from which random
subsets of units (words, or punctuation-delimited phrases) were removed; a
weighted ridge surrogate fit to the scores assigns each unit a signed
weight.  Positive weight means the unit's presence raises the predicted
default probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .textfeat import Tokenizer, tokenize


@dataclass(frozen=True)
class Segmentation:
    granularity: str  # "word" | "phrase"
    units: tuple[str, ...]
    _lead: str = ""
    _tails: tuple[str, ...] = ()

    def reconstruct(self, mask: Sequence[int]) -> str:
        """Render the text with only the units where ``mask`` is nonzero.

        Word mode joins kept words with single spaces; phrase mode keeps
        each phrase's original trailing punctuation.
        """
        if len(mask) != len(self.units):
            raise ValueError("mask length does not match unit count")
        if self.granularity == "word":
            return " ".join(u for u, m in zip(self.units, mask) if m)
        kept = [
            unit + tail
            for unit, tail, m in zip(self.units, self._tails, mask)
            if m
        ]
        return (self._lead + "".join(kept)).strip() if kept else ""


def segment(text: str, granularity: str, tokenizer: Tokenizer | None = None) -> Segmentation:
    """Split ``text`` into attribution units.

    Word mode uses the tokenizer's tokens; phrase mode takes maximal runs
    between punctuation marks (ASCII and full-width), dropping empties.
    """
    if granularity not in ("word", "phrase"):
        raise ValueError(f"unknown granularity {granularity!r}")
    tokenizer = tokenizer or Tokenizer()
    if not text or not text.strip():
        raise ValueError("cannot segment empty text")
    if granularity == "word":
        units = tokenize(tokenizer, text)
        if not units:
            raise ValueError("text has no attributable units")
        return Segmentation(granularity="word", units=tuple(units))

    punct = tokenizer.punctuation
    units: list[str] = []
    tails: list[str] = []
    lead = ""
    i = 0
    n = len(text)
    # leading separator run (kept verbatim so all-ones reconstructs the text)
    while i < n and (text[i] in punct or text[i].isspace()):
        i += 1
    lead = text[:i]
    while i < n:
        j = i
        while j < n and text[j] not in punct:
            j += 1
        # text[i] is never whitespace/punctuation here, so the stripped
        # phrase is a prefix of the chunk text[i:k].
        unit = text[i:j].strip()
        k = j
        while k < n and (text[k] in punct or text[k].isspace()):
            k += 1
        if unit:
            units.append(unit)
            tails.append(text[i:k][len(unit) :])
        i = k
    if not units:
        raise ValueError("text has no attributable units")
    return Segmentation(
        granularity="phrase", units=tuple(units), _lead=lead, _tails=tuple(tails)
    )


@dataclass(frozen=True)
class Attribution:
    unit: str
    weight: float
    support: int  # perturbations in which the unit was present


def _mask_distance(mask: np.ndarray) -> float:
    """Cosine distance between a binary mask and the all-ones mask."""
    ones = mask.sum()
    m = len(mask)
    if ones == 0:
        return 1.0
    return 1.0 - float(np.sqrt(ones / m))


def lime_explain(
    score_fn: Callable[[str], float],
    text: str,
    granularity: str = "word",
    tokenizer: Tokenizer | None = None,
    n_samples: int = 1000,
    kernel_width: float | None = None,
    ridge: float = 1.0,
    top_k: int = 15,
    seed: int = 0,
) -> list[Attribution]:
    """Fit a local surrogate to ``score_fn`` around ``text``.

    Masks: the all-ones mask plus ``n_samples - 1`` random masks whose
    removal count is uniform on 1..m with removed positions uniform without
    replacement.  Proximity weights are exp(-d^2 / kernel_width^2) with d
    the cosine distance to the all-ones mask (default width 0.75 * sqrt(m)).
    A ridge-penalized weighted regression of scores on mask bits plus an
    unpenalized intercept yields the unit weights; the ``top_k`` units by
    absolute weight are returned, deterministically for a given seed.
    """
    seg = segment(text, granularity, tokenizer)
    m = len(seg.units)
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(m)
    rng = np.random.default_rng(seed)

    masks = np.ones((n_samples, m), dtype=np.int64)
    for i in range(1, n_samples):
        k = int(rng.integers(1, m + 1))
        removed = rng.choice(m, size=k, replace=False)
        masks[i, removed] = 0
    if np.unique(masks, axis=0).shape[0] < 2:
        raise ValueError("degenerate perturbation design: all masks identical")

    scores = np.array([float(score_fn(seg.reconstruct(mask))) for mask in masks])
    dists = np.array([_mask_distance(mask) for mask in masks])
    weights = np.exp(-(dists**2) / (kernel_width**2))

    X = np.column_stack([np.ones(n_samples), masks.astype(np.float64)])
    W = weights[:, None]
    lhs = X.T @ (W * X)
    penalty = np.eye(m + 1) * ridge
    penalty[0, 0] = 0.0  # intercept stays unpenalized
    lhs += penalty
    rhs = X.T @ (weights * scores)
    try:
        coefs = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        coefs, _, _, _ = np.linalg.lstsq(lhs, rhs, rcond=None)
    unit_coefs = coefs[1:]

    support = masks.sum(axis=0)
    order = sorted(range(m), key=lambda j: (-abs(unit_coefs[j]), j))
    return [
        Attribution(unit=seg.units[j], weight=float(unit_coefs[j]), support=int(support[j]))
        for j in order[:top_k]
    ]


@dataclass(frozen=True)
class CaseSelection:
    indices: tuple[int, ...]
    ids: tuple[str, ...]
    structured_probs: tuple[float, ...]
    combined_probs: tuple[float, ...]
    improvements: tuple[float, ...]


def select_uncertain_cases(
    structured_probs: Sequence[float],
    combined_probs: Sequence[float],
    labels: Sequence[int],
    ids: Sequence[str] | None = None,
    band: tuple[float, float] = (0.40, 0.60),
    top_n: int = 250,
) -> CaseSelection:
    """Pick the cases the text helped most.

    Candidates have a structured-only probability inside ``band`` and a
    positive improvement, where improvement is the absolute-error reduction
    |p_structured - label| - |p_combined - label|.  The top ``top_n`` by
    improvement are returned.
    """
    ps = np.asarray(structured_probs, dtype=np.float64)
    pc = np.asarray(combined_probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if not (len(ps) == len(pc) == len(y)):
        raise ValueError("probability and label arrays must align")
    if ids is None:
        ids = [str(i) for i in range(len(ps))]
    improvement = np.abs(ps - y) - np.abs(pc - y)
    candidates = [
        i
        for i in range(len(ps))
        if band[0] <= ps[i] <= band[1] and improvement[i] > 0
    ]
    candidates.sort(key=lambda i: (-improvement[i], ids[i]))
    chosen = candidates[: min(top_n, len(candidates))]
    return CaseSelection(
        indices=tuple(chosen),
        ids=tuple(ids[i] for i in chosen),
        structured_probs=tuple(float(ps[i]) for i in chosen),
        combined_probs=tuple(float(pc[i]) for i in chosen),
        improvements=tuple(float(improvement[i]) for i in chosen),
    )


def aggregate_importance(
    case_attributions: Sequence[Sequence[Attribution]], top: int = 15
) -> list[tuple[str, float, int]]:
    """Cross-case unit importance: mean signed weight over the cases where
    the unit received a weight, ranked by absolute mean, top ``top`` kept."""
    if not case_attributions:
        raise ValueError("need at least one case")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for attributions in case_attributions:
        for att in attributions:
            sums[att.unit] = sums.get(att.unit, 0.0) + att.weight
            counts[att.unit] = counts.get(att.unit, 0) + 1
    rows = [(unit, sums[unit] / counts[unit], counts[unit]) for unit in sums]
    rows.sort(key=lambda r: (-abs(r[1]), r[0]))
    return rows[:top]
