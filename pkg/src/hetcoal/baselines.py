"""Comparison allocators: no heterogeneity (NH), no context (NC), no abstraction (NA)
and random allocation (RA)."""

from __future__ import annotations

import time
from enum import Enum
from typing import Sequence

import numpy as np

from .core import DemonstrationSet, EmptyInputError, TeamSpec
from .inference import StrategyLibrary, demo_aggregations
from .solver import AllocationResult, SolverConfig, solve, solve_fixed_strategy, trait_mismatch


class BaselineKind(str, Enum):
    NH = "nh"
    NC = "nc"
    NA = "na"
    RA = "ra"


METHODS = ("ours",) + tuple(k.value for k in BaselineKind)


def _task_map(demos: DemonstrationSet, task_map):
    return tuple(range(demos.n_tasks)) if task_map is None else tuple(task_map)


def nh_requirements(demos: DemonstrationSet) -> list[np.ndarray]:
    """Mean demo aggregation per task, ignoring that strategies may differ."""
    if len(demos) == 0:
        raise EmptyInputError("no demonstrations")
    return [demo_aggregations(demos, m).mean(axis=0) for m in range(demos.n_tasks)]


def nh_allocate(demos: DemonstrationSet, team: TeamSpec, config: SolverConfig = SolverConfig(),
                task_map: Sequence[int] | None = None) -> AllocationResult:
    reqs = nh_requirements(demos)
    return solve_fixed_strategy([reqs[m] for m in _task_map(demos, task_map)], team, config, method="nh")


def nc_allocate(library: StrategyLibrary, team: TeamSpec, config: SolverConfig = SolverConfig(),
                seed: int = 0) -> AllocationResult:
    """Pick each task's strategy uniformly at random, then allocate against it."""
    rng = np.random.default_rng(seed)
    picks = tuple(int(rng.integers(p)) for p in library.counts)
    res = solve_fixed_strategy([library[m][r] for m, r in enumerate(picks)], team, config, method="nc")
    return AllocationResult(
        assignment=res.assignment,
        selection=picks,
        strategy_counts=library.counts,
        per_task_error=res.per_task_error,
        objective=res.objective,
        status=res.status,
        wall_time=res.wall_time,
        nodes_explored=res.nodes_explored,
        method="nc",
        trace=res.trace,
    )


def na_library(demos: DemonstrationSet, task_map: Sequence[int] | None = None) -> StrategyLibrary:
    """Every demonstration's aggregation becomes its own strategy."""
    if len(demos) == 0:
        raise EmptyInputError("no demonstrations")
    lib = StrategyLibrary(tuple(demo_aggregations(demos, m) for m in range(demos.n_tasks)))
    return lib.select(_task_map(demos, task_map))


def na_allocate(demos: DemonstrationSet, team: TeamSpec, config: SolverConfig = SolverConfig(),
                task_map: Sequence[int] | None = None) -> AllocationResult:
    return solve(na_library(demos, task_map), team, config, method="na")


def ra_allocate(team: TeamSpec, n_tasks: int, seed: int = 0, library: StrategyLibrary | None = None,
                idle_fraction: float = 0.0) -> AllocationResult:
    """Send every robot to a uniformly random task (or idle, with ``idle_fraction``).

    Selectors are filled in afterwards with each task's closest strategy so the
    result reports like the other methods; without a library they are empty
    and the errors are NaN.
    """
    if n_tasks < 1:
        raise ValueError("need at least one task")
    if not 0.0 <= idle_fraction < 1.0:
        raise ValueError("idle_fraction must be in [0, 1)")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    probs = np.append(np.full(n_tasks, (1.0 - idle_fraction) / n_tasks), idle_fraction)
    x = np.array([rng.multinomial(int(n), probs)[:n_tasks] for n in team.counts], dtype=np.int64).T
    if library is None:
        sel, counts, errors = (-1,) * n_tasks, (0,) * n_tasks, (np.nan,) * n_tasks
    else:
        errs = [[trait_mismatch(y, team, x[m]) for y in library[m]] for m in range(n_tasks)]
        sel = tuple(int(np.argmin(e)) for e in errs)
        counts = library.counts
        errors = tuple(float(e[r]) for e, r in zip(errs, sel))
    return AllocationResult(
        assignment=x,
        selection=sel,
        strategy_counts=counts,
        per_task_error=errors,
        objective=float(sum(errors)),
        status="relaxed_optimal",
        wall_time=time.perf_counter() - t0,
        method="ra",
    )
