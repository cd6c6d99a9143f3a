"""Benchmark scenarios: synthetic generators, the StarCraft II and Robotarium
fixtures, and the dominance-based task success oracle."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import (Demonstration, DemonstrationSet, SpeciesTraitMatrix, TeamSpec, aggregate_traits,
                   dump_json, load_json)
from .inference import ClusteringConfig, StrategyLibrary
from .metrics import dominates
from .solver import SolverConfig, solve

SWEEP_SPECIES = (2, 4, 6, 8, 10)
SWEEP_TASKS = (2, 3, 4, 5)
MIN_SEPARATION = 0.35


@dataclass(frozen=True, eq=False)
class SuccessOracle:
    """A task succeeds when its coalition dominates any ground-truth strategy."""

    true_strategies: StrategyLibrary
    tol: float = 1e-9

    def judge(self, team, assignment, task: int) -> bool:
        agg = aggregate_traits(team, np.asarray(assignment)[task])
        return any(dominates(agg, y, self.tol) for y in self.true_strategies[task])


def judge_success(oracle: SuccessOracle, team, assignment, task: int) -> bool:
    return oracle.judge(team, assignment, task)


@dataclass(frozen=True)
class ScenarioParams:
    n_species: int = 4
    n_traits: int = 3
    n_tasks: int = 3
    n_strategies: int = 3
    n_demos: int = 240
    n_test_teams: int = 60
    count_range: tuple[int, int] = (6, 33)
    pool_size: int | None = None
    strategy_species: int = 2
    coalition_range: tuple[int, int] = (4, 9)
    noise: float = 0.2
    seed: int = 0
    max_retries: int = 1000
    classify: bool = True
    classify_time_limit: float = 60.0

    @property
    def pool(self) -> int:
        return self.pool_size if self.pool_size is not None else self.n_species + 2


@dataclass(frozen=True, eq=False)
class GroundTruthScenario:
    """Demonstrations, unseen test teams, and the strategies that generated them.

    ``mission_tasks[k]`` names the demonstrated task that mission task ``k``
    repeats; test teams are evaluated on the mission.
    """

    name: str
    demos: DemonstrationSet
    test_teams: tuple[TeamSpec, ...]
    true_strategies: StrategyLibrary
    mission_tasks: tuple[int, ...]
    labels: tuple[str, ...] = ()
    species_pool: SpeciesTraitMatrix | None = None
    params: dict = field(default_factory=dict)
    # suggested inference settings for this scenario's demos
    clustering: ClusteringConfig = ClusteringConfig()

    @property
    def n_mission_tasks(self) -> int:
        return len(self.mission_tasks)

    @property
    def mission_library(self) -> StrategyLibrary:
        return self.true_strategies.select(self.mission_tasks)

    @property
    def oracle(self) -> SuccessOracle:
        return SuccessOracle(self.mission_library)

    def to_dict(self) -> dict:
        d = {"name": self.name}
        d.update(self.demos.to_dict())
        labels = self.labels or ("",) * len(self.test_teams)
        d["test_teams"] = [dict(t.to_dict(), label=lab) for t, lab in zip(self.test_teams, labels)]
        truth = {
            "strategies": self.true_strategies.to_dict()["tasks"],
            "mission_tasks": list(self.mission_tasks),
            "params": self.params,
            "clustering": asdict(self.clustering),
        }
        if self.species_pool is not None:
            truth["species_pool"] = {"species": list(self.species_pool.species),
                                     "Q": self.species_pool.values.tolist()}
        d["truth"] = truth
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthScenario":
        if "truth" not in d:
            raise ValueError("scenario has no 'truth' section")
        truth = d["truth"]
        pool = truth.get("species_pool")
        return cls(
            name=d.get("name", "scenario"),
            demos=DemonstrationSet.from_dict(d),
            test_teams=tuple(TeamSpec.from_dict(t) for t in d.get("test_teams", [])),
            true_strategies=StrategyLibrary.from_dict({"tasks": truth["strategies"]}),
            mission_tasks=tuple(truth.get("mission_tasks", range(d["tasks"]))),
            labels=tuple(t.get("label", "") for t in d.get("test_teams", [])),
            species_pool=None if pool is None else SpeciesTraitMatrix(np.array(pool["Q"]), tuple(pool["species"])),
            params=truth.get("params", {}),
            clustering=ClusteringConfig(**truth.get("clustering", {})),
        )

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "GroundTruthScenario":
        try:
            return cls.from_dict(load_json(path))
        except (KeyError, ValueError) as e:
            raise ValueError(f"{path}: {e}") from e


# --------------------------------------------------------------------------
# synthetic benchmark

def _species_pool(rng, n: int, n_traits: int) -> SpeciesTraitMatrix:
    q = rng.uniform(0.2, 2.0, (n, n_traits))
    # each species specializes in one trait so strategies built from different species differ in shape
    q[np.arange(n), np.arange(n) % n_traits] += rng.uniform(2.0, 5.0, n)
    return SpeciesTraitMatrix(np.round(q, 2), tuple(f"sp{s}" for s in range(n)))


def _task_strategies(rng, params: ScenarioParams, n_species: int):
    """Integer coalitions (P x S) whose aggregations serve as one task's strategies."""
    k = min(params.strategy_species, n_species)
    subsets = list(itertools.combinations(range(n_species), k))
    rng.shuffle(subsets)
    lo, hi = params.coalition_range
    out = np.zeros((params.n_strategies, n_species), dtype=np.int64)
    for r in range(params.n_strategies):
        cols = list(subsets[r % len(subsets)])
        out[r, cols] = rng.integers(lo, hi + 1, len(cols))
    return out


def _distinct(strats: np.ndarray) -> bool:
    """No strategy is dominated by the task's mean, and all are well apart."""
    if len(strats) == 1:
        return True
    mean = strats.mean(axis=0)
    if any(np.all(s <= mean) for s in strats):
        return False
    scale = np.linalg.norm(strats, axis=1).max()
    gaps = [np.linalg.norm(a - b) for a, b in itertools.combinations(strats, 2)]
    return not gaps or min(gaps) >= MIN_SEPARATION * scale


def _perturb(rng, x: np.ndarray, counts: np.ndarray, noise: float) -> np.ndarray:
    """Nudge each nonzero count by +/-1 with probability ``1 - exp(-noise)``."""
    if noise <= 0:
        return x
    p = 1.0 - np.exp(-noise)
    x = x.copy()
    for m, s in zip(*np.nonzero(x)):
        if rng.random() >= p:
            continue
        step = 1 if rng.random() < 0.5 else -1
        if step > 0 and x[:, s].sum() >= counts[s]:
            continue
        x[m, s] += step
    return x


def classify_team(library: StrategyLibrary, team: TeamSpec, time_limit: float = 60.0) -> str:
    """``under`` if no assignment dominates some strategy on every task at once,
    ``over`` if one still does with one robot fewer of every species, else ``sufficient``.
    ``unknown`` when the exact solver times out."""
    config = SolverConfig(time_limit=time_limit)
    fewer = TeamSpec(team.traits, np.maximum(team.counts - 1, 0))
    try:
        # any incumbent proves feasibility, so optimality is not needed here
        if solve(library, team, config, fallback=False).status == "infeasible":
            return "under"
        return "sufficient" if solve(library, fewer, config, fallback=False).status == "infeasible" else "over"
    except TimeoutError:
        return "unknown"


def generate_benchmark(params: ScenarioParams = ScenarioParams(), name: str = "numerical") -> GroundTruthScenario:
    """Synthetic demonstrations and test teams with known strategies.

    Demo teams use the first ``n_species`` species of a random pool; each
    strategy is the aggregation of an integer coalition of those species, so
    the generating coalition is a zero-error expert assignment whenever the
    demo team can field it (otherwise the team is resampled).  Count noise is
    applied afterwards.  Test teams draw ``n_species`` species from the whole
    pool, so they may include species never seen in a demonstration.
    """
    rng = np.random.default_rng(params.seed)
    S, U, M = params.n_species, params.n_traits, params.n_tasks
    pool = _species_pool(rng, params.pool, U)
    demo_traits = SpeciesTraitMatrix(pool.values[:S], pool.species[:S])
    coalitions = []
    for _ in range(M):
        for _attempt in range(params.max_retries):
            k = _task_strategies(rng, params, S)
            if _distinct(k @ demo_traits.values):
                break
        else:
            raise RuntimeError("could not draw distinct strategies; widen coalition_range")
        coalitions.append(k)
    truth = StrategyLibrary(tuple(k @ demo_traits.values for k in coalitions))

    lo, hi = params.count_range
    demos = []
    for _ in range(params.n_demos):
        picks = [int(rng.integers(params.n_strategies)) for _ in range(M)]
        x = np.array([coalitions[m][r] for m, r in enumerate(picks)])
        # leave room for every +1 nudge so the count noise stays unbiased
        need = x.sum(axis=0) + (x > 0).sum(axis=0) * (params.noise > 0)
        for _attempt in range(params.max_retries):
            counts = rng.integers(lo, hi + 1, S)
            if np.all(need <= counts):
                break
        else:
            raise RuntimeError("no demo team can field the sampled strategies; raise count_range")
        x = _perturb(rng, x, counts, params.noise)
        demos.append(Demonstration(x, TeamSpec(demo_traits, counts)))
    dataset = DemonstrationSet(tuple(demos), tuple(f"trait{u}" for u in range(U)), M)

    teams = []
    for _ in range(params.n_test_teams):
        idx = np.sort(rng.choice(params.pool, size=S, replace=False))
        traits = SpeciesTraitMatrix(pool.values[idx], tuple(pool.species[i] for i in idx))
        teams.append(TeamSpec(traits, rng.integers(lo, hi + 1, S)))
    labels = tuple(classify_team(truth, t, params.classify_time_limit) for t in teams) if params.classify else ()
    p = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(params).items()}
    # every trait shares one scale here, and z-scoring would inflate count noise
    # along traits where the strategies happen to agree
    clustering = ClusteringConfig(normalization="none")
    return GroundTruthScenario(name, dataset, tuple(teams), truth, tuple(range(M)), labels, pool, p, clustering)


def sweep_params(seed: int = 0, **overrides) -> list[ScenarioParams]:
    """One parameter set per (species, tasks) pair of the sweep grid."""
    return [_sweep_point(s, m, seed + 100 * i, **overrides)
            for i, (s, m) in enumerate(itertools.product(SWEEP_SPECIES, SWEEP_TASKS))]


def _sweep_point(n_species: int, n_tasks: int, seed: int, **overrides) -> ScenarioParams:
    # with few species every task draws on the same ones, so coalitions must
    # shrink for all tasks to fit inside the largest team
    base = ScenarioParams()
    hi = min(base.coalition_range[1], (base.count_range[1] - n_tasks) // n_tasks)
    kw = dict(n_species=n_species, n_tasks=n_tasks, seed=seed, coalition_range=(2, hi))
    kw.update(overrides)
    return ScenarioParams(**kw)


# --------------------------------------------------------------------------
# StarCraft II fixture

STARCRAFT_TRAITS = ("armor", "health", "shield", "attack_ground", "attack_air", "dps_ground", "dps_air",
                    "attack_rate", "speed", "range", "sight")
# raw unit stats; the fourth-from-last column is weapon cooldown in seconds, speed is movement speed
STARCRAFT_UNITS = {
    "zealot": (1, 100, 50, 8, 0, 18.6, 0, 0.86, 3.15, 0, 9),
    "stalker": (1, 80, 80, 13, 13, 9.7, 9.7, 1.34, 4.13, 6, 10),
    "marine": (0, 45, 0, 6, 6, 9.8, 9.8, 0.61, 3.15, 5, 9),
    "marauder": (1, 125, 0, 5, 0, 9.3, 0, 1.07, 3.15, 6, 10),
    "roach": (1, 145, 16, 16, 0, 11.2, 0, 1.43, 3.15, 4, 9),
}
SPEED_THRESHOLD = 4.0
# battle strategies against 10 stalkers + 15 zealots, rounded to two decimals
STARCRAFT_TABLE = np.array([
    [28.67, 2566.67, 1883.33, 304.33, 195, 399.7, 145.5, 27.09, 15, 90, 273],
    [0, 2010, 0, 268, 268, 223.33, 437.73, 73.22, 0, 223.33, 402],
    [30, 3225, 1050, 213, 0, 474.3, 0, 32.83, 0, 54, 279],
])
# unit compositions (zealot, stalker, marine, marauder) of the three demos behind each strategy
STARCRAFT_DEMOS = (
    ((13, 15, 0, 0), (14, 15, 0, 0), (14, 15, 0, 0)),
    ((0, 0, 44, 0), (0, 0, 45, 0), (0, 0, 45, 0)),
    ((21, 0, 0, 9), (21, 0, 0, 9), (21, 0, 0, 9)),
)
STARCRAFT_DEMO_SPECIES = ("zealot", "stalker", "marine", "marauder")


def starcraft_species(names: Sequence[str] = tuple(STARCRAFT_UNITS)) -> SpeciesTraitMatrix:
    """Unit traits made cumulative: cooldown becomes attacks per second and
    speed becomes 1 above the threshold, else 0."""
    rows = []
    for name in names:
        raw = np.array(STARCRAFT_UNITS[name], dtype=float)
        raw[7] = 1.0 / raw[7]
        raw[8] = 1.0 if raw[8] > SPEED_THRESHOLD else 0.0
        rows.append(raw)
    return SpeciesTraitMatrix(np.array(rows), tuple(names))


def starcraft_demos(noise: float = 0.0, seed: int = 0) -> DemonstrationSet:
    traits = starcraft_species(STARCRAFT_DEMO_SPECIES)
    rng = np.random.default_rng(seed)
    demos = []
    for group in STARCRAFT_DEMOS:
        for comp in group:
            x = np.array([comp], dtype=np.int64)
            counts = np.full(len(comp), 60)
            demos.append(Demonstration(_perturb(rng, x, counts, noise), TeamSpec(traits, counts)))
    return DemonstrationSet(tuple(demos), STARCRAFT_TRAITS, 1)


def starcraft_fixture(noise: float = 0.0, seed: int = 0):
    """Five-species trait matrix, the three battle strategies, and nine demos.

    The strategies are the exact means of the demo compositions; they agree
    with :data:`STARCRAFT_TABLE` to its printed precision except for the
    ground DPS of strategy 2, which the table misprints.
    """
    demos = starcraft_demos(noise, seed)
    traits = starcraft_species()
    q = traits.values[: len(STARCRAFT_DEMO_SPECIES)]
    strategies = np.array([np.mean([np.array(c) @ q for c in group], axis=0) for group in STARCRAFT_DEMOS])
    library = StrategyLibrary((strategies,), ((3, 3, 3),))
    return traits, library, demos


def starcraft_scenario(n_battles: int = 4, n_test_teams: int = 10, seed: int = 0,
                       count_range: tuple[int, int] = (10, 80), noise: float = 0.0) -> GroundTruthScenario:
    """Concurrent battles against the same enemy, tested on random subsets of the five species."""
    traits, library, demos = starcraft_fixture(noise, seed)
    rng = np.random.default_rng(seed)
    teams = []
    for _ in range(n_test_teams):
        k = int(rng.integers(3, len(traits.species) + 1))
        idx = np.sort(rng.choice(len(traits.species), size=k, replace=False))
        sub = SpeciesTraitMatrix(traits.values[idx], tuple(traits.species[i] for i in idx))
        teams.append(TeamSpec(sub, rng.integers(count_range[0], count_range[1] + 1, k)))
    params = {"n_battles": n_battles, "n_test_teams": n_test_teams, "seed": seed,
              "count_range": list(count_range), "noise": noise}
    return GroundTruthScenario("starcraft-2s3z", demos, tuple(teams), library, (0,) * n_battles,
                               species_pool=traits, params=params)


# --------------------------------------------------------------------------
# Robotarium fixture

ROBOTARIUM_TRAITS = ("coverage_area", "ground_robots", "payload", "miniature", "aerial_robots")
# per-robot capabilities; the smallest values consistent with every strategy row
ROBOTARIUM_SPECIES = {
    "ground": (2, 1, 10, 0, 0),
    "aerial": (2, 0, 10, 0, 1),
    "mini_ground": (2, 1, 0, 1, 0),
    "mini_aerial": (1, 0, 0, 1, 1),
}
ROBOTARIUM_TEAM = (5, 4, 3, 1)
ROBOTARIUM_STRATEGIES = (
    ((0, 0, 50, 0, 5), (0, 5, 50, 0, 0)),   # move debris
    ((8, 4, 0, 0, 0), (8, 0, 0, 0, 4)),     # search
    ((6, 3, 0, 3, 0), (6, 0, 0, 6, 6)),     # retrieve from narrow passage
)


def robotarium_library() -> StrategyLibrary:
    return StrategyLibrary(tuple(np.array(s, dtype=float) for s in ROBOTARIUM_STRATEGIES))


def robotarium_team() -> TeamSpec:
    traits = SpeciesTraitMatrix(np.array(list(ROBOTARIUM_SPECIES.values()), dtype=float),
                                tuple(ROBOTARIUM_SPECIES))
    return TeamSpec(traits, np.array(ROBOTARIUM_TEAM))


def robotarium_demos(copies: int = 3) -> DemonstrationSet:
    """Demos whose aggregations are exactly the strategy rows.

    Each demo team is one unit species per trait (identity trait matrix), so
    the assignment row equals the aggregated requirement.  Demo ``i`` follows
    strategy ``i % 2`` on every task.
    """
    U = len(ROBOTARIUM_TRAITS)
    traits = SpeciesTraitMatrix(np.eye(U), tuple(f"unit_{t}" for t in ROBOTARIUM_TRAITS))
    team = TeamSpec(traits, np.full(U, 100))
    demos = []
    for i in range(2 * copies):
        x = np.array([task[i % 2] for task in ROBOTARIUM_STRATEGIES], dtype=np.int64)
        demos.append(Demonstration(x, team))
    return DemonstrationSet(tuple(demos), ROBOTARIUM_TRAITS, len(ROBOTARIUM_STRATEGIES))


def robotarium_fixture():
    """(test team, strategy library, success oracle) for the emergency-response mission."""
    library = robotarium_library()
    return robotarium_team(), library, SuccessOracle(library)


def robotarium_scenario() -> GroundTruthScenario:
    team, library, _ = robotarium_fixture()
    return GroundTruthScenario("robotarium", robotarium_demos(), (team,), library,
                               tuple(range(library.n_tasks)), species_pool=team.traits)


# --------------------------------------------------------------------------
# presets

PRESETS = ("numerical-default", "sweep", "starcraft", "robotarium")


def preset_scenarios(preset: str, seed: int = 0) -> list[GroundTruthScenario]:
    if preset == "numerical-default":
        return [generate_benchmark(ScenarioParams(seed=seed), "numerical-default")]
    if preset == "sweep":
        return [generate_benchmark(p, f"sweep-{p.n_species}x{p.n_tasks}")
                for p in sweep_params(seed, classify_time_limit=5.0)]
    if preset == "starcraft":
        return [starcraft_scenario(seed=seed)]
    if preset == "robotarium":
        return [robotarium_scenario()]
    raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")


def named_scenario(name: str, seed: int = 0) -> GroundTruthScenario:
    """Build a fixture by name: numerical-default, sweep-SxM, starcraft-2s3z, robotarium."""
    if name == "numerical-default":
        return generate_benchmark(ScenarioParams(seed=seed), name)
    if name in ("starcraft-2s3z", "starcraft"):
        return starcraft_scenario(seed=seed)
    if name == "robotarium":
        return robotarium_scenario()
    if name.startswith("sweep-"):
        try:
            s, m = (int(v) for v in name[len("sweep-"):].split("x"))
        except ValueError:
            raise ValueError(f"sweep fixture names look like sweep-4x3, got {name!r}") from None
        return generate_benchmark(_sweep_point(s, m, seed, classify_time_limit=5.0), name)
    raise ValueError(f"unknown fixture {name!r}")
