"""Kruskal-Wallis omnibus test with Dunn post-hoc comparisons and Benjamini-Hochberg FDR control."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc, gammaincc

from .core import EmptyInputError


class DegenerateDataWarning(UserWarning):
    """All observations are tied; rank tests carry no information."""


@dataclass(frozen=True)
class PairwiseComparison:
    group_a: str
    group_b: str
    z: float
    raw_p: float
    adjusted_p: float


@dataclass(frozen=True)
class StatTestResult:
    h_statistic: float
    p_value: float
    pairwise: tuple[PairwiseComparison, ...] = ()
    degenerate: bool = False
    labels: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "h_statistic": self.h_statistic,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
            "groups": list(self.labels),
            "pairwise": [
                {"a": c.group_a, "b": c.group_b, "z": c.z, "raw_p": c.raw_p, "adjusted_p": c.adjusted_p}
                for c in self.pairwise
            ],
        }


def _split(groups) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(groups, Mapping):
        labels = [str(k) for k in groups]
        data = [np.asarray(v, dtype=float).ravel() for v in groups.values()]
    else:
        data = [np.asarray(v, dtype=float).ravel() for v in groups]
        labels = [str(i) for i in range(len(data))]
    if len(data) < 2:
        raise ValueError("need at least two groups")
    if any(d.size == 0 for d in data):
        raise EmptyInputError("every group needs at least one observation")
    return labels, data


def midranks(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-based ranks with ties averaged, plus the size of every tie block."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    ranks = np.empty(len(values))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks, ends - starts


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def _pooled(data):
    pooled = np.concatenate(data)
    ranks, ties = midranks(pooled)
    bounds = np.cumsum([0] + [len(d) for d in data])
    mean_ranks = np.array([ranks[bounds[i]:bounds[i + 1]].mean() for i in range(len(data))])
    sizes = np.array([len(d) for d in data], dtype=float)
    tie_sum = float(((ties.astype(float) ** 3) - ties).sum())
    return len(pooled), mean_ranks, sizes, tie_sum


def kruskal_wallis(groups) -> StatTestResult:
    """Rank-based H statistic (tie-corrected) and its chi-square p-value."""
    labels, data = _split(groups)
    n, mean_ranks, sizes, tie_sum = _pooled(data)
    correction = 1.0 - tie_sum / (n ** 3 - n) if n > 1 else 0.0
    if correction <= 0:
        warnings.warn("all observations are identical", DegenerateDataWarning, stacklevel=2)
        return StatTestResult(0.0, 1.0, degenerate=True, labels=tuple(labels))
    h = (12.0 / (n * (n + 1)) * float((sizes * mean_ranks ** 2).sum()) - 3.0 * (n + 1)) / correction
    h = max(h, 0.0)
    return StatTestResult(h, chi2_sf(h, len(data) - 1), labels=tuple(labels))


def benjamini_hochberg(pvalues: Sequence[float]) -> np.ndarray:
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return p
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adjusted, 1.0)
    return out


def dunn_fdr(groups) -> StatTestResult:
    """Kruskal-Wallis plus Dunn's pairwise z tests, BH-adjusted across all pairs."""
    omnibus = kruskal_wallis(groups)
    labels, data = _split(groups)
    n, mean_ranks, sizes, tie_sum = _pooled(data)
    var_unit = n * (n + 1) / 12.0 - (tie_sum / (12.0 * (n - 1)) if n > 1 else 0.0)
    pairs = list(itertools.combinations(range(len(data)), 2))
    zs, raw = [], []
    for i, j in pairs:
        se = np.sqrt(max(var_unit, 0.0) * (1.0 / sizes[i] + 1.0 / sizes[j]))
        z = (mean_ranks[i] - mean_ranks[j]) / se if se > 0 else 0.0
        zs.append(float(z))
        raw.append(float(erfc(abs(z) / np.sqrt(2.0))))
    adjusted = benjamini_hochberg(raw)
    comparisons = tuple(
        PairwiseComparison(labels[i], labels[j], z, p, float(max(a, p)))
        for (i, j), z, p, a in zip(pairs, zs, raw, adjusted))
    return StatTestResult(omnibus.h_statistic, omnibus.p_value, comparisons, omnibus.degenerate, tuple(labels))
