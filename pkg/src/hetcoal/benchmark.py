"""Run every allocation method over a scenario's test teams and score the results."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import METHODS, na_allocate, nc_allocate, nh_allocate, ra_allocate
from .inference import ClusteringConfig, StrategyLibrary, infer_strategies
from .metrics import EvaluationRecord, e_exact, e_min, success_rate, utilization
from .scenarios import GroundTruthScenario
from .solver import AllocationResult, SolverConfig, solve
from .stats import dunn_fdr

log = logging.getLogger(__name__)

CSV_COLUMNS = tuple(f.name for f in fields(EvaluationRecord))
METRICS = ("e_min", "e_exact", "utilization", "wall_time_s")


@dataclass(frozen=True)
class BenchmarkSettings:
    methods: Sequence[str] = METHODS
    solver: SolverConfig = SolverConfig()
    clustering: ClusteringConfig | None = None  # None: the scenario's own suggestion
    seed: int = 0
    threads: int = 1
    ra_idle_fraction: float = 0.0
    teams: Sequence[int] | None = None


def allocate(method: str, scenario: GroundTruthScenario, library: StrategyLibrary, team, team_id: int,
             settings: BenchmarkSettings) -> AllocationResult:
    """One allocation; ``library`` is the inferred mission library used by ours, NC and RA."""
    cfg = settings.solver
    tasks = scenario.mission_tasks
    seed = settings.seed * 100003 + team_id
    if method == "ours":
        return solve(library, team, cfg)
    if method == "nh":
        return nh_allocate(scenario.demos, team, cfg, tasks)
    if method == "nc":
        return nc_allocate(library, team, cfg, seed)
    if method == "na":
        return na_allocate(scenario.demos, team, cfg, tasks)
    if method == "ra":
        return ra_allocate(team, len(tasks), seed, library, settings.ra_idle_fraction)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def score(result: AllocationResult, scenario: GroundTruthScenario, team, team_id: int) -> list[EvaluationRecord]:
    """Per-task records measured against the ground-truth strategies."""
    truth = scenario.mission_library
    oracle = scenario.oracle
    x = result.assignment
    return [
        EvaluationRecord(
            method=result.method,
            team_id=team_id,
            task_id=m,
            e_min=e_min(truth[m], team, x[m]),
            e_exact=e_exact(truth[m], team, x[m]),
            utilization=utilization(x, team, m),
            success=oracle.judge(team, x, m),
            wall_time_s=result.wall_time,
            status=result.status,
        )
        for m in range(scenario.n_mission_tasks)
    ]


def run_benchmark(scenario: GroundTruthScenario, settings: BenchmarkSettings = BenchmarkSettings(),
                  sink=None) -> list[EvaluationRecord]:
    """Records in (team, method, task) order; each team's rows go to ``sink`` as soon as they are ready."""
    unknown = set(settings.methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    clustering = settings.clustering or scenario.clustering
    library = infer_strategies(scenario.demos, clustering).select(scenario.mission_tasks)
    log.info("inferred strategies per task: %s", library.counts)
    team_ids = range(len(scenario.test_teams)) if settings.teams is None else settings.teams

    def one_team(i):
        team = scenario.test_teams[i]
        rows = []
        for method in settings.methods:
            res = allocate(method, scenario, library, team, i, settings)
            log.debug("team %d %s: %s in %.3fs", i, method, res.status, res.wall_time)
            rows += score(res, scenario, team, i)
        return rows

    records = []
    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as pool:
        # map yields in submission order, which keeps the output deterministic
        for i, rows in zip(team_ids, pool.map(one_team, team_ids)):
            log.info("team %d done", i)
            records += rows
            if sink is not None:
                sink(rows)
    return records


class CsvSink:
    """Appends records to a CSV file, flushing after every batch."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=CSV_COLUMNS)
        self._writer.writeheader()
        self._fh.flush()

    def __call__(self, rows: Iterable[EvaluationRecord]) -> None:
        for r in rows:
            self._writer.writerow(_csv_row(r))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _csv_row(r: EvaluationRecord) -> dict:
    row = r.as_row()
    row["success"] = int(r.success)
    for k in ("e_min", "e_exact", "utilization", "wall_time_s"):
        row[k] = repr(float(row[k]))
    return row


def read_results_csv(path) -> list[EvaluationRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                out.append(EvaluationRecord(
                    method=row["method"], team_id=int(row["team_id"]), task_id=int(row["task_id"]),
                    e_min=float(row["e_min"]), e_exact=float(row["e_exact"]),
                    utilization=float(row["utilization"]), success=bool(int(row["success"])),
                    wall_time_s=float(row["wall_time_s"]), status=row["status"]))
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}:{line}: {e}") from e
    return out


def by_method(records: Sequence[EvaluationRecord], metric: str) -> dict[str, np.ndarray]:
    """Metric values grouped by method, in first-appearance order.

    Wall time is one value per (method, team) since every task of a solve shares it.
    """
    groups: dict[str, list] = {}
    for r in records:
        if metric == "wall_time_s" and r.task_id != 0:
            continue
        groups.setdefault(r.method, []).append(float(getattr(r, metric)))
    return {k: np.array(v) for k, v in groups.items()}


def summarize(records: Sequence[EvaluationRecord]) -> list[dict]:
    rows = []
    for method in dict.fromkeys(r.method for r in records):
        recs = [r for r in records if r.method == method]
        row = {"method": method, "runs": len({r.team_id for r in recs})}
        for metric in METRICS:
            vals = by_method(recs, metric)[method]
            row[f"median_{metric}"] = float(np.median(vals))
            row[f"mean_{metric}"] = float(np.mean(vals))
        row["success_rate"] = success_rate(r.success for r in recs)
        rows.append(row)
    return rows


def statistics(records: Sequence[EvaluationRecord], metrics: Sequence[str] = METRICS) -> dict:
    """Kruskal-Wallis with Dunn/BH pairwise comparisons for each metric."""
    report = {}
    for metric in metrics:
        groups = by_method(records, metric)
        if len(groups) < 2:
            continue
        report[metric] = dunn_fdr(groups).to_dict()
    return report


def write_summary_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
