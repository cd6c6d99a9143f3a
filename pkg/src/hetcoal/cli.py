"""Command-line entry point: generate, infer, allocate, benchmark, stats."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import METHODS, na_allocate, nc_allocate, nh_allocate, ra_allocate
from .benchmark import (BenchmarkSettings, CsvSink, read_results_csv, run_benchmark, statistics, summarize,
                        write_summary_csv)
from .core import TeamSpec, dump_json, load_dataset, load_json
from .inference import ClusteringConfig, StrategyLibrary, dendrogram, demo_aggregations, infer_strategies, \
    write_dendrogram_csv
from .scenarios import PRESETS, GroundTruthScenario, named_scenario, preset_scenarios
from .solver import SolverConfig, solve, write_trace_csv

log = logging.getLogger("hetcoal")

EXIT_OK, EXIT_INCUMBENT, EXIT_ERROR = 0, 2, 3
_EXIT_BY_STATUS = {"optimal": EXIT_OK, "relaxed_optimal": EXIT_OK,
                   "time_limit_incumbent": EXIT_INCUMBENT, "relaxed_incumbent": EXIT_INCUMBENT}


def write_manifest(out: Path, args: argparse.Namespace, inputs=(), methods=(), solver: SolverConfig | None = None):
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else list(args.argv),
        "inputs": [str(p) for p in inputs],
        "methods": list(methods),
        "seed": args.seed,
        "threads": args.threads,
        "solver": asdict(solver) if solver else None,
        "out": str(out),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    dump_json(manifest, out / "manifest.json")


def load_scenario(ref: str, seed: int) -> GroundTruthScenario:
    """A scenario file path or a built-in fixture name."""
    if Path(ref).exists():
        return GroundTruthScenario.load(ref)
    return named_scenario(ref, seed)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(time_limit=args.time_limit, trace=getattr(args, "trace", False),
                        parallel_strategy_combos=args.threads > 1, seed=args.seed)


def _clustering(args, default: ClusteringConfig) -> ClusteringConfig:
    kw = {}
    if args.clusters is not None:
        kw["n_clusters"] = args.clusters
    if args.threshold is not None:
        kw["distance_threshold"] = args.threshold
    if args.linkage:
        kw["linkage"] = args.linkage
    if args.normalization:
        kw["normalization"] = args.normalization
    if not kw:
        return default
    if "n_clusters" in kw or "distance_threshold" in kw:
        kw.setdefault("n_clusters", None)
        kw.setdefault("distance_threshold", None)
    return ClusteringConfig(**{**asdict(default), **kw})


# --------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.no_classify and args.preset in ("numerical-default", "sweep"):
        from .scenarios import ScenarioParams, generate_benchmark, sweep_params
        if args.preset == "numerical-default":
            scenarios = [generate_benchmark(ScenarioParams(seed=args.seed, classify=False), "numerical-default")]
        else:
            scenarios = [generate_benchmark(p, f"sweep-{p.n_species}x{p.n_tasks}")
                         for p in sweep_params(args.seed, classify=False)]
    else:
        scenarios = preset_scenarios(args.preset, args.seed)
    for sc in scenarios:
        path = out / f"{sc.name}.json"
        sc.save(path)
        mix = {k: sc.labels.count(k) for k in dict.fromkeys(sc.labels)}
        log.info("wrote %s: %d demos, %d test teams%s", path, len(sc.demos), len(sc.test_teams),
                 f", resource mix {mix}" if mix else "")
    write_manifest(out, args)
    return EXIT_OK


def cmd_infer(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    default = ClusteringConfig()
    if Path(args.dataset).exists():
        raw = load_json(args.dataset)
        demos = load_dataset(args.dataset)
        if "truth" in raw:
            default = GroundTruthScenario.from_dict(raw).clustering
    else:
        sc = named_scenario(args.dataset, args.seed)
        demos, default = sc.demos, sc.clustering
    config = _clustering(args, default)
    library = infer_strategies(demos, config)
    dump_json(library.to_dict(), out / "library.json")
    for m in range(demos.n_tasks):
        agg = demo_aggregations(demos, m)
        if len(agg) >= 2:
            write_dendrogram_csv(dendrogram(agg, config), out / f"dendrogram_task{m}.csv")
        print(f"task {m}: P = {library.counts[m]}")
    write_manifest(out, args, inputs=[args.dataset])
    return EXIT_OK


def cmd_allocate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _solver_config(args)
    inputs = []
    demos = library = None
    if args.scenario:
        sc = load_scenario(args.scenario, args.seed)
        team = sc.test_teams[args.team_index]
        demos = sc.demos
        tasks = sc.mission_tasks
        library = infer_strategies(demos, sc.clustering).select(tasks)
        inputs.append(args.scenario)
    else:
        if not args.team or not (args.library or args.demos):
            raise ValueError("give --scenario, or --team with --library/--demos")
        team = TeamSpec.from_dict(load_json(args.team))
        inputs.append(args.team)
        if args.library:
            library = StrategyLibrary.from_dict(load_json(args.library))
            inputs.append(args.library)
        if args.demos:
            demos = load_dataset(args.demos)
            inputs.append(args.demos)
        tasks = tuple(int(t) for t in args.tasks.split(",")) if args.tasks else None
        if library is not None and tasks is not None:
            library = library.select(tasks)
        if tasks is None:
            tasks = tuple(range(library.n_tasks if library is not None else demos.n_tasks))
    method = args.method
    if method in ("nh", "na") and demos is None:
        raise ValueError(f"--method {method} needs demonstrations (--demos)")
    if method in ("ours", "nc") and library is None:
        if demos is None:
            raise ValueError(f"--method {method} needs --library or --demos")
        library = infer_strategies(demos).select(tasks)
    if method == "ours":
        res = solve(library, team, config)
    elif method == "nh":
        res = nh_allocate(demos, team, config, tasks)
    elif method == "na":
        res = na_allocate(demos, team, config, tasks)
    elif method == "nc":
        res = nc_allocate(library, team, config, args.seed)
    else:
        res = ra_allocate(team, len(tasks), args.seed, library, args.ra_idle_fraction)
    dump_json(res.to_dict(), out / "result.json")
    if args.trace:
        write_trace_csv(res, out / "trace.csv")
    write_manifest(out, args, inputs=inputs, methods=[method], solver=config)
    print(f"{method}: {res.status}, objective {res.objective:.6g}")
    return _EXIT_BY_STATUS.get(res.status, EXIT_ERROR)


def cmd_benchmark(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = load_scenario(args.scenario, args.seed)
    methods = tuple(args.methods.split(",")) if args.methods else METHODS
    config = _solver_config(args)
    teams = None
    if args.teams is not None:
        teams = range(min(args.teams, len(sc.test_teams)))
    settings = BenchmarkSettings(methods=methods, solver=config, seed=args.seed, threads=args.threads,
                                 ra_idle_fraction=args.ra_idle_fraction, teams=teams)
    write_manifest(out, args, inputs=[args.scenario], methods=methods, solver=config)
    with CsvSink(out / "results.csv") as sink:
        records = run_benchmark(sc, settings, sink)
    summary = summarize(records)
    write_summary_csv(summary, out / "summary.csv")
    dump_json(statistics(records), out / "stats.json")
    for row in summary:
        print(f"{row['method']:>5}  median e_min {row['median_e_min']:.4f}  median e_exact "
              f"{row['median_e_exact']:.4f}  SR {row['success_rate']:.1f}%  "
              f"median time {row['median_wall_time_s']:.3f}s")
    return EXIT_OK


def cmd_stats(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_results_csv(args.results)
    report = statistics(records)
    dump_json(report, out / "stats.json")
    write_summary_csv(summarize(records), out / "summary.csv")
    write_manifest(out, args, inputs=[args.results])
    for metric, r in report.items():
        print(f"{metric}: H = {r['h_statistic']:.4f}, p = {r['p_value']:.3g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--verbose", "-v", action="count", default=0)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--time-limit", type=float, default=1800.0, help="seconds per solver phase")
    solver.add_argument("--ra-idle-fraction", type=float, default=0.0)

    parser = argparse.ArgumentParser(prog="hetcoal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write scenario files")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--no-classify", action="store_true", help="skip resource-class labels for test teams")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("infer", parents=[common], help="learn a strategy library from demonstrations")
    p.add_argument("dataset", help="dataset/scenario JSON or fixture name")
    p.add_argument("--clusters", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--linkage", choices=("average", "complete", "single"))
    p.add_argument("--normalization", choices=("none", "z_score", "min_max"))
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("allocate", parents=[common, solver], help="allocate one team")
    p.add_argument("--method", choices=METHODS, default="ours")
    p.add_argument("--scenario", help="scenario JSON or fixture name")
    p.add_argument("--team-index", type=int, default=0)
    p.add_argument("--team", help="team JSON (species, Q, counts)")
    p.add_argument("--library", help="strategy library JSON")
    p.add_argument("--demos", help="demonstration dataset JSON")
    p.add_argument("--tasks", help="comma-separated library task per mission task")
    p.add_argument("--trace", action="store_true", help="write the branch-and-bound trace")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("benchmark", parents=[common, solver], help="compare methods over test teams")
    p.add_argument("scenario", help="scenario JSON or fixture name")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--teams", type=int, help="only the first N test teams")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("stats", parents=[common], help="statistics for an existing results CSV")
    p.add_argument("results")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, IndexError) as e:
        log.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
