"""Joint strategy selection and integer robot assignment.

The program minimizes the summed squared trait mismatch over integer
assignments ``x_m`` and one-hot strategy selectors ``z_m``, subject to the
team budget (``sum_m x_m <= N``) and, when possible, to every coalition
dominating the requirements of its chosen strategy.  If no assignment can
dominate, the domination constraints are dropped and the mismatch alone is
minimized (the "relaxed" statuses).

Search layout
-------------
1. For every task and strategy, solve the single-task integer problem with the
   whole team available.  Its optimum is a lower bound on that task's error in
   any joint solution.
2. Visit strategy combinations in increasing order of the summed per-task
   bounds.  A combination whose per-task optima fit the budget together is
   solved outright; otherwise a joint branch-and-bound runs with the global
   incumbent as cutoff.  The visit stops once the next combination's bound
   reaches the incumbent.

Each integer problem is solved by best-first branch-and-bound on continuous
QP relaxations (:mod:`hetcoal._qp`), branching on the most fractional
variable and switching to depth-first when the open list grows too large.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._qp import RelaxedProblem
from .core import DimensionError, EmptyInputError, TeamSpec, aggregate_traits
from .inference import StrategyLibrary

STATUSES = ("optimal", "time_limit_incumbent", "relaxed_optimal", "relaxed_incumbent", "infeasible")
INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float = 1800.0
    node_limit: int | None = None
    feasibility_tolerance: float = 1e-6
    parallel_strategy_combos: bool = False
    seed: int = 0
    trace: bool = False
    max_open_nodes: int = 200_000

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.feasibility_tolerance < 0:
            raise ValueError("feasibility_tolerance must be nonnegative")


@dataclass(frozen=True)
class TraceRow:
    node_id: int
    depth: int
    bound: float
    incumbent: float
    timestamp: float
    phase: int


@dataclass(frozen=True, eq=False)
class AllocationResult:
    """Assignment, chosen strategies and per-task squared mismatch."""

    assignment: np.ndarray
    selection: tuple[int, ...]
    strategy_counts: tuple[int, ...]
    per_task_error: tuple[float, ...]
    objective: float
    status: str
    wall_time: float
    nodes_explored: int = 0
    method: str = "ours"
    trace: tuple[TraceRow, ...] = field(default=(), repr=False)

    @property
    def selectors(self) -> list[np.ndarray]:
        """One-hot strategy selector per task."""
        return [one_hot(r, p) for r, p in zip(self.selection, self.strategy_counts)]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "objective": _json_float(self.objective),
            "per_task_error": [_json_float(e) for e in self.per_task_error],
            "assignment": self.assignment.tolist(),
            "selectors": [z.tolist() for z in self.selectors],
            "selection": list(self.selection),
            "wall_time": self.wall_time,
            "nodes_explored": self.nodes_explored,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationResult":
        sel = [list(z) for z in d["selectors"]]
        return cls(
            assignment=np.array(d["assignment"], dtype=np.int64),
            selection=tuple(int(np.argmax(z)) if len(z) else -1 for z in sel),
            strategy_counts=tuple(len(z) for z in sel),
            per_task_error=tuple(np.nan if e is None else float(e) for e in d["per_task_error"]),
            objective=np.nan if d["objective"] is None else float(d["objective"]),
            status=d["status"],
            wall_time=float(d["wall_time"]),
            nodes_explored=int(d["nodes_explored"]),
            method=d.get("method", "ours"),
        )


def _json_float(v: float):
    return None if v is None or not np.isfinite(v) else float(v)


def one_hot(index: int, size: int) -> np.ndarray:
    z = np.zeros(size, dtype=np.int64)
    if index >= 0:
        z[index] = 1
    return z


def trait_mismatch(strategy, team, task_row) -> float:
    """Squared Euclidean distance between a requirement and a coalition's traits."""
    y = np.asarray(strategy, dtype=float)
    agg = aggregate_traits(team, task_row)
    if y.shape != agg.shape:
        raise DimensionError(f"strategy has {y.shape} traits, coalition has {agg.shape}")
    return float(((y - agg) ** 2).sum())


def net_error(selectors: Sequence, mismatches: Sequence) -> list[float]:
    """Mismatch of the selected strategy for each task (``z_m . e_m``)."""
    if len(selectors) != len(mismatches):
        raise DimensionError(f"{len(selectors)} selectors for {len(mismatches)} tasks")
    out = []
    for m, (z, e) in enumerate(zip(selectors, mismatches)):
        z = np.asarray(z)
        e = np.asarray(e, dtype=float)
        if z.shape != e.shape:
            raise DimensionError(f"task {m}: selector length {z.shape} != error length {e.shape}")
        if z.sum() != 1 or not np.all((z == 0) | (z == 1)):
            raise ValueError(f"task {m}: selector is not one-hot")
        out.append(float(z @ e))
    return out


# --------------------------------------------------------------------------
# integer search

class _Budget:
    """Shared wall-clock deadline, node counter and trace sink for one phase."""

    def __init__(self, config: SolverConfig, phase: int, t0: float):
        self.config = config
        self.phase = phase
        self.t0 = t0
        self.deadline = time.perf_counter() + config.time_limit
        self.nodes = 0
        self.trace: list[TraceRow] = []
        self.incumbent = np.inf
        self._lock = threading.Lock()

    def exhausted(self) -> bool:
        if self.config.node_limit is not None and self.nodes >= self.config.node_limit:
            return True
        return time.perf_counter() >= self.deadline

    def visit(self, depth: int, bound: float):
        with self._lock:
            self.nodes += 1
            if self.config.trace:
                self.trace.append(TraceRow(self.nodes, depth, float(bound), float(self.incumbent),
                                           time.perf_counter() - self.t0, self.phase))


@dataclass
class _Outcome:
    x: np.ndarray | None
    value: float
    lower: float
    complete: bool


def _slack(constant: float) -> float:
    return 1e-10 * (1.0 + constant)


class _IntegerProgram:
    """Branch-and-bound for fixed targets (one strategy per task)."""

    def __init__(self, Q: np.ndarray, budget: np.ndarray, targets: np.ndarray, enforce_min: bool, tol: float):
        self.Q = Q
        self.N = budget
        self.targets = np.atleast_2d(targets)
        self.floors = self.targets - tol * np.maximum(1.0, self.targets) if enforce_min else None
        self.relaxed = RelaxedProblem(Q, self.targets, budget, self.floors)
        self.slack = _slack(self.relaxed.constant)

    def value(self, x: np.ndarray) -> float:
        return float(((x @ self.Q - self.targets) ** 2).sum())

    def feasible(self, x: np.ndarray) -> bool:
        if np.any(x.sum(axis=0) > self.N):
            return False
        return self.floors is None or bool(np.all(x @ self.Q >= self.floors))

    def run(self, budget: _Budget, ub0: np.ndarray, cutoff: float = np.inf, lower: float = 0.0,
            seed_x: np.ndarray | None = None) -> _Outcome:
        M, S = self.targets.shape[0], self.Q.shape[0]
        best_x, best_val = None, np.inf
        if seed_x is not None and self.feasible(seed_x):
            best_x, best_val = seed_x, self.value(seed_x)

        def limit():
            return min(cutoff, best_val)

        def offer(x):
            nonlocal best_x, best_val
            if not self.feasible(x):
                return
            v = self.value(x)
            if v < best_val - self.slack or (v <= best_val + self.slack and best_x is not None
                                             and _tie_key(x) < _tie_key(best_x)):
                best_x, best_val = x, v

        lb0 = np.zeros((M, S))
        root = self.relaxed.solve(lb0, ub0)
        if root.status == "infeasible":
            return _Outcome(None, np.inf, np.inf, True)
        root_bound = max(lower, root.objective if root.status == "solved" else lower)
        counter = itertools.count()
        heap = [(root_bound, next(counter), 0, lb0, ub0.astype(float), root.x)]
        stack: list = []
        complete = True
        while heap or stack:
            if budget.exhausted():
                complete = False
                break
            node = stack.pop() if stack else heapq.heappop(heap)
            bound, _, depth, lb, ub, x = node
            if bound >= limit() - self.slack:
                continue
            budget.visit(depth, bound)
            if best_val <= self.slack:
                break
            if x is None:
                widths = ub - lb
                if widths.max() <= 0:
                    offer(lb.astype(np.int64))
                    continue
                k = int(np.argmax(widths))
                split = np.floor((lb.flat[k] + ub.flat[k]) / 2.0)
            else:
                nearest = np.round(x)
                frac = np.abs(x - nearest)
                if frac.max() <= INTEGRALITY_TOL:
                    offer(nearest.astype(np.int64))
                    continue
                for cand in (nearest, np.ceil(x - INTEGRALITY_TOL), np.floor(x + INTEGRALITY_TOL)):
                    offer(np.clip(cand, lb, ub).astype(np.int64))
                k = int(np.argmax(frac))
                split = np.floor(x.flat[k])
            for side in (0, 1):
                clb, cub = lb.copy(), ub.copy()
                if side == 0:
                    cub.flat[k] = split
                else:
                    clb.flat[k] = split + 1
                if clb.flat[k] > cub.flat[k]:
                    continue
                rel = self.relaxed.solve(clb, cub)
                if rel.status == "infeasible":
                    continue
                cbound = max(bound, rel.objective) if rel.status == "solved" else bound
                if cbound >= limit() - self.slack:
                    continue
                item = (cbound, next(counter), depth + 1, clb, cub, rel.x)
                if len(heap) >= budget.config.max_open_nodes:
                    stack.append(item)
                else:
                    heapq.heappush(heap, item)
        if complete:
            low = best_val
        else:
            pending = [n[0] for n in heap] + [n[0] for n in stack]
            low = min([best_val] + pending)
        return _Outcome(best_x, best_val, low, complete)


def _tie_key(x: np.ndarray):
    return (int(x.sum()), tuple(x.ravel().tolist()))


@dataclass
class _SearchResult:
    x: np.ndarray | None
    selection: tuple[int, ...] | None
    value: float
    complete: bool
    nodes: int
    trace: list


def _search(Q: np.ndarray, N: np.ndarray, strategies: Sequence[np.ndarray], enforce_min: bool,
            config: SolverConfig, phase: int, t0: float) -> _SearchResult:
    M, S = len(strategies), Q.shape[0]
    budget = _Budget(config, phase, t0)
    tol = config.feasibility_tolerance
    complete = True

    best = {"x": None, "sel": None, "val": np.inf}
    if not enforce_min:
        # all-idle assignment is always admissible once domination is dropped
        sel = tuple(int(np.argmin((s ** 2).sum(axis=1))) for s in strategies)
        best.update(x=np.zeros((M, S), dtype=np.int64), sel=sel,
                    val=float(sum((strategies[m][r] ** 2).sum() for m, r in enumerate(sel))))
    budget.incumbent = best["val"]

    def offer(x, sel, val, slack):
        if val < best["val"] - slack or (
                val <= best["val"] + slack and best["x"] is not None
                and (_tie_key(x)[0], sel, _tie_key(x)[1]) < (_tie_key(best["x"])[0], best["sel"], _tie_key(best["x"])[1])):
            best.update(x=x, sel=sel, val=val)
            budget.incumbent = min(budget.incumbent, val)

    # per-task, per-strategy bounds with the whole team available
    ub_single = N[None, :].astype(float)
    cache: dict[bytes, _Outcome] = {}
    jobs = []
    for m in range(M):
        for r in range(strategies[m].shape[0]):
            key = strategies[m][r].tobytes()
            if key not in cache:
                cache[key] = None
                jobs.append(key)

    def single(key):
        target = np.frombuffer(key, dtype=float)[None, :]
        prog = _IntegerProgram(Q, N, target, enforce_min, tol)
        return prog.run(budget, ub_single)

    if config.parallel_strategy_combos and len(jobs) > 1:
        with ThreadPoolExecutor() as pool:
            outcomes = list(pool.map(single, jobs))
    else:
        outcomes = []
        for key in jobs:
            outcomes.append(single(key))
    for key, out in zip(jobs, outcomes):
        cache[key] = out
        complete &= out.complete

    singles = [[cache[strategies[m][r].tobytes()] for r in range(strategies[m].shape[0])] for m in range(M)]
    orders = []
    for m in range(M):
        lows = [o.lower for o in singles[m]]
        orders.append([r for r in sorted(range(len(lows)), key=lambda r: (lows[r], r)) if np.isfinite(lows[r])])

    if all(orders):
        def combo_bound(pos):
            return sum(singles[m][orders[m][p]].lower for m, p in enumerate(pos))

        start = (0,) * M
        heap = [(combo_bound(start), tuple(orders[m][0] for m in range(M)), start)]
        seen = {start}
        while heap:
            if budget.exhausted():
                complete = False
                break
            lower, sel, pos = heapq.heappop(heap)
            for m in range(M):
                nxt = pos[:m] + (pos[m] + 1,) + pos[m + 1:]
                if nxt[m] < len(orders[m]) and nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (combo_bound(nxt), tuple(orders[k][nxt[k]] for k in range(M)), nxt))
            targets = np.array([strategies[m][r] for m, r in enumerate(sel)])
            prog = _IntegerProgram(Q, N, targets, enforce_min, tol)
            if lower >= best["val"] - prog.slack:
                break
            parts = [singles[m][r] for m, r in enumerate(sel)]
            stacked = None
            if all(p.x is not None for p in parts):
                stacked = np.vstack([p.x for p in parts])
                if all(p.complete for p in parts) and np.all(stacked.sum(axis=0) <= N):
                    offer(stacked, sel, prog.value(stacked), prog.slack)
                    continue
            out = prog.run(budget, np.repeat(N[None, :], M, axis=0).astype(float),
                           cutoff=best["val"], lower=lower,
                           seed_x=stacked if stacked is not None and np.all(stacked.sum(axis=0) <= N) else None)
            complete &= out.complete
            if out.x is not None:
                offer(out.x, sel, out.value, prog.slack)
    return _SearchResult(best["x"], best["sel"], best["val"], complete, budget.nodes, budget.trace)


# --------------------------------------------------------------------------
# public solvers

def _check_inputs(library: StrategyLibrary, team: TeamSpec):
    if library is None or library.n_tasks == 0:
        raise EmptyInputError("strategy library is empty")
    if library.n_traits != team.n_traits:
        raise DimensionError(f"library has {library.n_traits} traits, team has {team.n_traits}")


def _result(library, team, x, sel, status, t0, nodes, trace, method="ours") -> AllocationResult:
    errors = tuple(trait_mismatch(library[m][r], team, x[m]) for m, r in enumerate(sel))
    return AllocationResult(
        assignment=x,
        selection=tuple(int(r) for r in sel),
        strategy_counts=library.counts,
        per_task_error=errors,
        objective=float(sum(errors)),
        status=status,
        wall_time=time.perf_counter() - t0,
        nodes_explored=nodes,
        method=method,
        trace=tuple(trace),
    )


def solve(library: StrategyLibrary, team: TeamSpec, config: SolverConfig = SolverConfig(), *,
          enforce_min: bool = True, fallback: bool = True, method: str = "ours") -> AllocationResult:
    """Choose one strategy per task and an integer coalition for each.

    First tries to dominate the chosen requirements on every task; if that
    is impossible for every strategy combination, retries without the
    domination constraints.  Each phase gets its own ``time_limit``.
    """
    _check_inputs(library, team)
    t0 = time.perf_counter()
    Q, N = team.Q, team.counts
    strategies = library.strategies
    nodes, trace = 0, []
    if enforce_min:
        first = _search(Q, N, strategies, True, config, 1, t0)
        nodes += first.nodes
        trace += first.trace
        if first.x is not None:
            status = "optimal" if first.complete else "time_limit_incumbent"
            return _result(library, team, first.x, first.selection, status, t0, nodes, trace, method)
        if not fallback:
            if not first.complete:
                raise TimeoutError("time limit reached before feasibility was decided")
            x = np.zeros((library.n_tasks, team.n_species), dtype=np.int64)
            return _result(library, team, x, (0,) * library.n_tasks, "infeasible", t0, nodes, trace, method)
    second = _search(Q, N, strategies, False, config, 2, t0)
    status = "relaxed_optimal" if second.complete else "relaxed_incumbent"
    return _result(library, team, second.x, second.selection, status, t0,
                   nodes + second.nodes, trace + second.trace, method)


def solve_fixed_strategy(requirements: Sequence, team: TeamSpec, config: SolverConfig = SolverConfig(),
                         enforce_min: bool = True, *, fallback: bool = True, method: str = "ours") -> AllocationResult:
    """Allocate against exactly one requirement vector per task."""
    reqs = [np.atleast_2d(np.asarray(r, dtype=float)) for r in requirements]
    if not reqs:
        raise EmptyInputError("no requirements")
    library = StrategyLibrary(tuple(reqs))
    return solve(library, team, config, enforce_min=enforce_min, fallback=fallback, method=method)


def write_trace_csv(result: AllocationResult, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "depth", "bound", "incumbent", "timestamp", "phase"])
        for row in result.trace:
            w.writerow([row.node_id, row.depth, repr(row.bound), repr(row.incumbent),
                        f"{row.timestamp:.6f}", row.phase])
