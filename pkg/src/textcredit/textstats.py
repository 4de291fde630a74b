"""Statistical comparison of two text corpora.

Covers vector cosine similarity, the Mann-Whitney U test (exact for small
samples, tie-corrected normal approximation otherwise), a two-proportion
Welch t statistic for category frequencies, and dictionary-based semantic
category profiles with Bonferroni-adjusted significance flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

_EXACT_ENUMERATION_CAP = 200_000


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float  # U statistic for the first sample: #(x > y) + 0.5 #(x = y)
    p_two_sided: float
    method: str  # "exact" | "normal"


def _pairwise_u(a: np.ndarray, b: np.ndarray) -> float:
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _exact_p(pooled: np.ndarray, na: int, u_obs: float) -> float:
    """Exact conditional two-sided p by enumerating which pooled positions
    form the first sample (handles ties)."""
    n = len(pooled)
    # t[i] = #(pooled[i] > pooled[j], j != i) + 0.5 #(==); per-subset U then
    # needs only a sum minus the constant within-subset pair mass.
    t = np.empty(n)
    for i in range(n):
        others = np.delete(pooled, i)
        t[i] = float((pooled[i] > others).sum()) + 0.5 * float(
            (pooled[i] == others).sum()
        )
    within = na * (na - 1) / 2.0
    at_most = 0
    at_least = 0
    total = 0
    for subset in combinations(range(n), na):
        u = sum(t[i] for i in subset) - within
        total += 1
        if u <= u_obs + 1e-9:
            at_most += 1
        if u >= u_obs - 1e-9:
            at_least += 1
    p = 2.0 * min(at_most, at_least) / total
    return min(1.0, p)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """Mann-Whitney U for sample ``a``: U = #(x > y) + 0.5 #(x = y).

    The two-sided p-value is exact (subset enumeration, tie-aware) when the
    smaller sample has at most 8 observations and the enumeration stays
    under a fixed budget; otherwise it uses the normal approximation with
    tie-corrected variance and continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    n, m = len(a), len(b)
    u = _pairwise_u(a, b)

    small = min(n, m)
    if small <= 8 and math.comb(n + m, small) <= _EXACT_ENUMERATION_CAP:
        pooled = np.concatenate([a, b])
        if n <= m:
            p = _exact_p(pooled, n, u)
        else:
            # enumerate the smaller sample, using U_b = nm - U_a
            p = _exact_p(pooled, m, n * m - u)
        return MannWhitneyResult(u=u, p_two_sided=p, method="exact")

    mu = n * m / 2.0
    pooled = np.concatenate([a, b])
    _, tie_counts = np.unique(pooled, return_counts=True)
    big_n = n + m
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (big_n * (big_n - 1))
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0:
        return MannWhitneyResult(u=u, p_two_sided=1.0, method="normal")
    diff = u - mu
    cc = 0.5 if diff > 0 else (-0.5 if diff < 0 else 0.0)
    z = (diff - cc) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MannWhitneyResult(u=u, p_two_sided=min(1.0, p), method="normal")


def welch_proportion_t(f1: float, n1: int, f2: float, n2: int) -> float:
    """Two-proportion Welch t: (f2 - f1) / sqrt(f1(1-f1)/N1 + f2(1-f2)/N2).

    Positive means increased use in the second corpus.
    """
    for f in (f1, f2):
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"proportions must lie in [0, 1], got {f}")
    for n in (n1, n2):
        if n < 1:
            raise ValueError("token totals must be >= 1")
    var = f1 * (1.0 - f1) / n1 + f2 * (1.0 - f2) / n2
    if var == 0.0:
        raise ValueError("zero variance: both proportions are degenerate")
    return (f2 - f1) / math.sqrt(var)


@dataclass(frozen=True)
class CategoryDictionary:
    """Semantic categories, each a list of exact tokens or prefix patterns
    ending in '*'."""

    categories: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        for cat, entries in self.categories.items():
            if not entries:
                raise ValueError(f"category {cat!r} has no entries")
            for e in entries:
                stars = e.count("*")
                if stars > 1 or (stars == 1 and not e.endswith("*")):
                    raise ValueError(
                        f"category {cat!r}: pattern {e!r} may only end in a single '*'"
                    )

    def matchers(self) -> dict[str, tuple[frozenset, tuple[str, ...]]]:
        out = {}
        for cat, entries in self.categories.items():
            exact = frozenset(e for e in entries if not e.endswith("*"))
            prefixes = tuple(e[:-1] for e in entries if e.endswith("*"))
            out[cat] = (exact, prefixes)
        return out


def load_category_dictionary(path: str | Path) -> CategoryDictionary:
    """Read a dictionary file: ``%category <name>`` header lines, one entry
    per following line; blank lines and ``#`` comments are ignored."""
    categories: dict[str, list[str]] = {}
    current: str | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("%category"):
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: '%category' needs a name")
            current = parts[1].strip()
            categories.setdefault(current, [])
        else:
            if current is None:
                raise ValueError(f"line {lineno}: entry before any '%category' header")
            categories[current].append(line)
    return CategoryDictionary(
        categories={c: tuple(es) for c, es in categories.items()}
    )


def category_frequencies(
    token_lists: Sequence[Sequence[str]], dictionary: CategoryDictionary
) -> dict[str, float]:
    """Per-category relative frequency: matched tokens over total tokens.

    A token matches a category when it equals an exact entry or starts with
    a prefix pattern; one token may count toward several categories.
    """
    total = sum(len(toks) for toks in token_lists)
    if total == 0:
        raise ValueError("corpus has no tokens")
    matchers = dictionary.matchers()
    counts = dict.fromkeys(dictionary.categories, 0)
    for tokens in token_lists:
        for tok in tokens:
            for cat, (exact, prefixes) in matchers.items():
                if tok in exact or any(tok.startswith(p) for p in prefixes):
                    counts[cat] += 1
    return {cat: counts[cat] / total for cat in dictionary.categories}


_STAR_ALPHAS = (0.1, 0.05, 0.01)


@dataclass(frozen=True)
class CategoryComparison:
    category: str
    f1: float
    f2: float
    n1: int
    n2: int
    t: float
    significance: Mapping[float, bool]  # alpha -> |t| beyond the alpha/M level

    @property
    def stars(self) -> str:
        return "*" * sum(self.significance[a] for a in _STAR_ALPHAS)


def compare_corpora(
    corpus1: Sequence[Sequence[str]],
    corpus2: Sequence[Sequence[str]],
    dictionary: CategoryDictionary,
    m_tests: int | None = None,
) -> list[CategoryComparison]:
    """Per-category frequency comparison of two corpora with Welch t values
    and Bonferroni-adjusted two-sided normal significance flags at alpha in
    {0.1, 0.05, 0.01}, each divided by ``m_tests`` (defaults to the number
    of categories)."""
    freqs1 = category_frequencies(corpus1, dictionary)
    freqs2 = category_frequencies(corpus2, dictionary)
    n1 = sum(len(t) for t in corpus1)
    n2 = sum(len(t) for t in corpus2)
    m = m_tests if m_tests is not None else len(dictionary.categories)
    if m < 1:
        raise ValueError("m_tests must be >= 1")
    out = []
    for cat in dictionary.categories:
        f1, f2 = freqs1[cat], freqs2[cat]
        t = 0.0 if f1 == f2 else welch_proportion_t(f1, n1, f2, n2)
        flags = {}
        for alpha in _STAR_ALPHAS:
            critical = float(ndtri(1.0 - (alpha / m) / 2.0))
            flags[alpha] = abs(t) > critical
        out.append(
            CategoryComparison(
                category=cat, f1=f1, f2=f2, n1=n1, n2=n2, t=t, significance=flags
            )
        )
    return out
