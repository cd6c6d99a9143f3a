"""Strategy inference: per-task agglomerative clustering of demo trait aggregations."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DegenerateInputError, DemonstrationSet, DimensionError, EmptyInputError, aggregate_traits

LINKAGES = ("average", "complete", "single")
NORMALIZATIONS = ("none", "z_score", "min_max")


@dataclass(frozen=True)
class ClusteringConfig:
    """How demo aggregations are grouped into strategies.

    With neither ``distance_threshold`` nor ``n_clusters`` set, the dendrogram is
    cut at its largest relative gap (auto mode).
    """

    linkage: str = "average"
    distance_threshold: float | None = None
    n_clusters: int | None = None
    normalization: str = "z_score"
    max_clusters: int = 10
    min_gap: float = 0.5
    noise_floor: float = 0.1

    def __post_init__(self):
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}, got {self.linkage!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")
        if self.distance_threshold is not None and self.n_clusters is not None:
            raise ValueError("set at most one of distance_threshold and n_clusters")
        if self.distance_threshold is not None and self.distance_threshold < 0:
            raise ValueError("distance_threshold must be nonnegative")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.max_clusters < 1:
            raise ValueError("max_clusters must be >= 1")
        if not 0.0 <= self.noise_floor < 1.0:
            raise ValueError("noise_floor must be in [0, 1)")

    @property
    def mode(self) -> str:
        if self.distance_threshold is not None:
            return "threshold"
        if self.n_clusters is not None:
            return "fixed"
        return "auto"


@dataclass(frozen=True, eq=False)
class StrategyLibrary:
    """Per-task strategy requirement vectors and the cluster sizes behind them.

    ``strategies[m]`` is a (P_m x U) array whose rows are alternative trait
    requirements for task ``m``.
    """

    strategies: tuple[np.ndarray, ...]
    sizes: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        mats = []
        for m, s in enumerate(self.strategies):
            a = np.array(s, dtype=float)
            if a.ndim == 1:
                a = a[None, :]
            if a.ndim != 2 or a.shape[0] < 1:
                raise ValueError(f"task {m} must have at least one strategy")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"task {m} has negative or non-finite requirements")
            a.setflags(write=False)
            mats.append(a)
        if not mats:
            raise EmptyInputError("strategy library has no tasks")
        if len({a.shape[1] for a in mats}) != 1:
            raise DimensionError("all strategies must share the trait dimension")
        sizes = tuple(tuple(int(v) for v in s) for s in self.sizes) or tuple((1,) * a.shape[0] for a in mats)
        if len(sizes) != len(mats) or any(len(s) != a.shape[0] for s, a in zip(sizes, mats)):
            raise DimensionError("cluster sizes do not match the strategies")
        object.__setattr__(self, "strategies", tuple(mats))
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_tasks(self) -> int:
        return len(self.strategies)

    @property
    def n_traits(self) -> int:
        return self.strategies[0].shape[1]

    @property
    def counts(self) -> tuple[int, ...]:
        """Number of strategies per task."""
        return tuple(a.shape[0] for a in self.strategies)

    def __getitem__(self, m) -> np.ndarray:
        return self.strategies[m]

    def __eq__(self, other):
        if not isinstance(other, StrategyLibrary):
            return NotImplemented
        return self.sizes == other.sizes and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.strategies, other.strategies))

    def select(self, task_map: Sequence[int]) -> "StrategyLibrary":
        """Library for a mission whose task ``k`` reuses library task ``task_map[k]``."""
        return StrategyLibrary(tuple(self.strategies[m] for m in task_map),
                               tuple(self.sizes[m] for m in task_map))

    def scaled(self, c: float) -> "StrategyLibrary":
        return StrategyLibrary(tuple(a * c for a in self.strategies), self.sizes)

    def to_dict(self) -> dict:
        return {"tasks": [{"strategies": a.tolist(), "sizes": list(s)}
                          for a, s in zip(self.strategies, self.sizes)]}

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyLibrary":
        tasks = d["tasks"]
        return cls(tuple(np.array(t["strategies"], dtype=float) for t in tasks),
                   tuple(tuple(t.get("sizes") or [1] * len(t["strategies"])) for t in tasks))


def demo_aggregations(demos: DemonstrationSet, task: int) -> np.ndarray:
    """Aggregated traits of every demo's coalition for ``task`` (N x U)."""
    if len(demos) == 0:
        raise EmptyInputError("no demonstrations")
    if not 0 <= task < demos.n_tasks:
        raise IndexError(f"task {task} out of range for {demos.n_tasks} tasks")
    return np.array([aggregate_traits(d.team, d.assignment[task]) for d in demos.demos])


def normalize(points: np.ndarray, method: str) -> np.ndarray:
    """Per-trait rescaling used for clustering distances only."""
    p = np.asarray(points, dtype=float)
    if method == "none":
        return p.copy()
    if method == "z_score":
        centre, spread = p.mean(axis=0), p.std(axis=0)
    elif method == "min_max":
        centre, spread = p.min(axis=0), np.ptp(p, axis=0)
    else:
        raise ValueError(f"unknown normalization {method!r}")
    spread = np.where(spread > 0, spread, 1.0)
    return (p - centre) / spread


def _pairwise(p: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def dendrogram(points, config: ClusteringConfig = ClusteringConfig()) -> np.ndarray:
    """Full agglomerative merge history.

    Returns an (n-1) x 4 array of ``(cluster_a, cluster_b, distance, new_size)``
    rows in merge order.  Singletons are clusters ``0..n-1`` and the cluster
    formed by merge ``k`` gets id ``n + k``; ``cluster_a < cluster_b``.  Among
    equally close pairs the lowest ``(a, b)`` id pair merges first.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2:
        raise DimensionError(f"points must be 2-D, got shape {p.shape}")
    n = p.shape[0]
    if n < 2:
        raise DegenerateInputError("a dendrogram needs at least two points")
    d = _pairwise(normalize(p, config.normalization))
    np.fill_diagonal(d, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = np.empty((n - 1, 4))
    for k in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], d, np.inf)
        best = masked.min()
        ii, jj = np.nonzero(masked == best)
        keep = ii < jj
        ii, jj = ii[keep], jj[keep]
        a_ids = np.minimum(ids[ii], ids[jj])
        b_ids = np.maximum(ids[ii], ids[jj])
        pick = np.lexsort((b_ids, a_ids))[0]
        i, j = ii[pick], jj[pick]
        merges[k] = (a_ids[pick], b_ids[pick], best, sizes[i] + sizes[j])
        # Lance-Williams update into slot i; slot j retires
        if config.linkage == "average":
            row = (sizes[i] * d[i] + sizes[j] * d[j]) / (sizes[i] + sizes[j])
        elif config.linkage == "complete":
            row = np.maximum(d[i], d[j])
        else:
            row = np.minimum(d[i], d[j])
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        ids[i] = n + k
    return merges


def _labels_after(merges: np.ndarray, n: int, n_merges: int) -> list[list[int]]:
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for k in range(n_merges):
        a, b = int(merges[k, 0]), int(merges[k, 1])
        members[n + k] = members.pop(a) + members.pop(b)
    return sorted((sorted(v) for v in members.values()), key=lambda c: c[0])


def gap_cut(distances: np.ndarray, n: int, max_clusters: int = 10, min_gap: float = 0.5,
            noise_floor: float = 0.1) -> int:
    """Number of merges to apply under the largest-relative-gap rule.

    Cutting after ``j`` merges leaves ``n - j`` clusters and scores
    ``(d[j] - low) / d[j]`` with ``low = max(d[j-1], noise_floor * d.max())``
    (and ``d[-1] = 0``): the fraction of the next merge height above the last
    applied one.  The floor keeps merges of near-duplicate points from
    counting as a perfect gap.  Only cuts leaving at most ``max_clusters``
    clusters compete; if none scores ``min_gap``, all points merge into one
    cluster.  Equal scores favour fewer clusters.
    """
    d = np.sort(np.asarray(distances, dtype=float))
    floor = noise_floor * d[-1] if d.size else 0.0
    best_j, best_score = n - 1, -1.0
    for j in range(max(0, n - max_clusters), n - 1):
        upper = d[j]
        lower = max(d[j - 1] if j > 0 else 0.0, floor)
        score = max(upper - lower, 0.0) / upper if upper > 0 else 0.0
        if score >= best_score:
            best_j, best_score = j, score
    if best_score < min_gap:
        return n - 1
    return best_j


def cluster_task(points, config: ClusteringConfig = ClusteringConfig()) -> list[list[int]]:
    """Partition aggregation vectors into clusters of member indices.

    Clusters are returned ordered by their smallest member index.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise EmptyInputError("no aggregation vectors to cluster")
    n = p.shape[0]
    if n == 1:
        return [[0]]
    merges = dendrogram(p, config)
    if config.mode == "threshold":
        n_merges = int(np.sum(merges[:, 2] <= config.distance_threshold))
    elif config.mode == "fixed":
        n_merges = n - min(config.n_clusters, n)
    else:
        n_merges = gap_cut(merges[:, 2], n, config.max_clusters, config.min_gap, config.noise_floor)
    return _labels_after(merges, n, n_merges)


def centroids(points, clusters: Sequence[Sequence[int]]) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return np.array([p[list(c)].mean(axis=0) for c in clusters])


def infer_strategies(demos: DemonstrationSet, config: ClusteringConfig = ClusteringConfig()) -> StrategyLibrary:
    """Cluster each task's demo aggregations and average every cluster.

    Distances may use normalized coordinates, but the centroids are always in
    the original trait units.
    """
    if len(demos) == 0:
        raise EmptyInputError("no demonstrations")
    strategies, sizes = [], []
    for m in range(demos.n_tasks):
        agg = demo_aggregations(demos, m)
        clusters = cluster_task(agg, config)
        strategies.append(centroids(agg, clusters))
        sizes.append(tuple(len(c) for c in clusters))
    return StrategyLibrary(tuple(strategies), tuple(sizes))


def write_dendrogram_csv(merges: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["idx_a", "idx_b", "distance", "new_size"])
        for a, b, dist, size in merges:
            w.writerow([int(a), int(b), repr(float(dist)), int(size)])
