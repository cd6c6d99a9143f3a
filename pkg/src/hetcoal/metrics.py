"""Per-task evaluation metrics for an allocation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import DimensionError, EmptyInputError, TeamSpec, aggregate_traits


class NormalizationError(ValueError):
    """A strategy has zero norm, so relative mismatch is undefined."""


def _prepare(strategies, team, task_row):
    ys = np.atleast_2d(np.asarray(strategies, dtype=float))
    if ys.shape[0] == 0:
        raise EmptyInputError("need at least one strategy")
    agg = aggregate_traits(team, task_row)
    if ys.shape[1] != agg.shape[0]:
        raise DimensionError(f"strategies have {ys.shape[1]} traits, coalition has {agg.shape[0]}")
    norms = np.linalg.norm(ys, axis=1)
    if np.any(norms == 0):
        raise NormalizationError("zero-norm strategy")
    return ys, agg, norms


def dominates(aggregate, requirement, tol: float = 1e-9) -> bool:
    y = np.asarray(requirement, dtype=float)
    return bool(np.all(np.asarray(aggregate) >= y - tol * np.maximum(1.0, np.abs(y))))


def e_min(strategies, team, task_row, tol: float = 1e-9) -> float:
    """Relative shortfall against the closest strategy; surplus is not penalized.

    Zero as soon as the coalition dominates any strategy.
    """
    ys, agg, norms = _prepare(strategies, team, task_row)
    if any(dominates(agg, y, tol) for y in ys):
        return 0.0
    shortfall = np.linalg.norm(np.maximum(ys - agg, 0.0), axis=1)
    return float(np.min(shortfall / norms))


def e_exact(strategies, team, task_row) -> float:
    """Relative distance to the closest strategy, penalizing surplus and shortfall alike."""
    ys, agg, norms = _prepare(strategies, team, task_row)
    return float(np.min(np.linalg.norm(ys - agg, axis=1) / norms))


def utilization(assignment, team: TeamSpec, task: int) -> float:
    """Share of the whole team recruited for ``task``."""
    x = np.asarray(assignment)
    if x.ndim != 2 or x.shape[1] != team.n_species:
        raise DimensionError(f"assignment shape {x.shape} does not match {team.n_species} species")
    total = team.total_robots
    if total == 0:
        raise ValueError("team has no robots")
    return float(x[task].sum() / total)


def success_rate(outcomes) -> float:
    """Percentage of successful runs."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInputError("no outcomes")
    return 100.0 * sum(bool(o) for o in outcomes) / len(outcomes)


@dataclass(frozen=True)
class EvaluationRecord:
    method: str
    team_id: int
    task_id: int
    e_min: float
    e_exact: float
    utilization: float
    success: bool
    wall_time_s: float
    status: str

    def as_row(self) -> dict:
        return asdict(self)
