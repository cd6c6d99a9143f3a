import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetcoal.baselines import nh_allocate
from hetcoal.core import TeamSpec, aggregate_traits
from hetcoal.inference import demo_aggregations, infer_strategies
from hetcoal.metrics import e_min
from hetcoal.scenarios import (STARCRAFT_DEMOS, STARCRAFT_TABLE, STARCRAFT_TRAITS, GroundTruthScenario,
                               ScenarioParams, SuccessOracle, classify_team, generate_benchmark, judge_success,
                               named_scenario, robotarium_demos, robotarium_fixture, starcraft_fixture,
                               starcraft_scenario, starcraft_species, sweep_params)
from hetcoal.solver import SolverConfig, solve


def quick(**kw):
    return generate_benchmark(ScenarioParams(classify=False, **kw))


def test_default_sizes():
    sc = quick()
    assert len(sc.demos) == 240 and len(sc.test_teams) == 60
    assert sc.true_strategies.counts == (3, 3, 3)
    lo, hi = ScenarioParams().count_range
    for t in sc.test_teams:
        assert t.n_species == 4 and np.all((t.counts >= lo) & (t.counts <= hi))


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    quick(seed=3).save(a)
    quick(seed=3).save(b)
    assert a.read_bytes() == b.read_bytes()
    quick(seed=4).save(b)
    assert a.read_bytes() != b.read_bytes()


def test_teams_come_from_the_species_pool():
    sc = quick(seed=1)
    pool = {tuple(r) for r in sc.species_pool.values}
    for t in sc.test_teams:
        assert all(tuple(r) in pool for r in t.Q)
    for d in sc.demos:
        assert all(tuple(r) in pool for r in d.team.Q)


def test_noiseless_demos_hit_their_strategies():
    sc = quick(seed=2, noise=0.0)
    for m in range(3):
        truth = sc.true_strategies[m]
        for y in demo_aggregations(sc.demos, m):
            assert np.min(np.abs(truth - y).max(axis=1)) < 1e-9


def test_noiseless_inference_recovers_generating_strategies():
    sc = quick(seed=5, noise=0.0)
    lib = infer_strategies(sc.demos, sc.clustering)
    for m in range(3):
        got = sorted(map(tuple, np.round(lib[m], 9)))
        want = sorted(map(tuple, np.round(sc.true_strategies[m], 9)))
        assert got == want


def test_sweep_grid():
    params = sweep_params()
    assert len(params) == 20
    assert {(p.n_species, p.n_tasks) for p in params} == {(s, m) for s in (2, 4, 6, 8, 10) for m in (2, 3, 4, 5)}
    sc = named_scenario("sweep-2x5")
    assert sc.demos.n_tasks == 5


def test_resource_labels_are_consistent():
    sc = generate_benchmark(ScenarioParams(seed=0, n_test_teams=6, n_demos=30, count_range=(3, 33)))
    assert len(sc.labels) == 6
    cfg = SolverConfig(time_limit=30)
    for team, label in zip(sc.test_teams, sc.labels):
        res = solve(sc.true_strategies, team, cfg, fallback=False)
        if label in ("over", "sufficient"):
            assert res.status == "optimal"
            assert all(e_min(sc.true_strategies[m], team, res.assignment[m]) == 0 for m in range(3))
        elif label == "under":
            assert res.status == "infeasible"
    assert classify_team(sc.true_strategies, TeamSpec(sc.test_teams[0].traits, np.zeros(4, dtype=int))) == "under"


def test_scenario_round_trip(tmp_path):
    sc = generate_benchmark(ScenarioParams(seed=0, n_test_teams=3, n_demos=12, count_range=(3, 30)))
    path = tmp_path / "s.json"
    sc.save(path)
    back = GroundTruthScenario.load(path)
    assert back.to_dict() == json.loads(path.read_text())
    assert back.labels == sc.labels and back.clustering == sc.clustering
    assert back.true_strategies == sc.true_strategies


def test_scenario_without_truth_is_rejected(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps(quick().demos.to_dict()))
    with pytest.raises(ValueError, match="truth"):
        GroundTruthScenario.load(path)


# --------------------------------------------------------------------------
# StarCraft II

def test_zealot_and_stalker_rows():
    q = starcraft_species()
    zealot = q.values[q.species.index("zealot")]
    assert zealot.tolist() == pytest.approx([1, 100, 50, 8, 0, 18.6, 0, 1 / 0.86, 0, 0, 9])
    stalker = q.values[q.species.index("stalker")]
    assert stalker[STARCRAFT_TRAITS.index("speed")] == 1.0
    assert q.n_species == 5 and q.n_traits == 11


def test_starcraft_demos_and_round_trip():
    traits, library, demos = starcraft_fixture()
    assert len(demos) == 9 and library.counts == (3,)
    inferred = infer_strategies(demos)
    assert inferred.counts == (3,)
    assert np.allclose(inferred[0], library[0], rtol=0, atol=1e-9)


def test_starcraft_strategies_match_printed_table():
    _, library, _ = starcraft_fixture()
    diff = np.abs(library[0] - STARCRAFT_TABLE)
    misprint = (1, STARCRAFT_TRAITS.index("dps_ground"))
    mask = np.ones_like(diff, dtype=bool)
    mask[misprint] = False
    assert np.all(diff[mask] <= 0.005 + 1e-9)
    # the printed value repeats the strategy's range entry instead of its ground DPS
    assert STARCRAFT_TABLE[misprint] == STARCRAFT_TABLE[1, STARCRAFT_TRAITS.index("range")]
    assert library[0][misprint] == pytest.approx(library[0][1, STARCRAFT_TRAITS.index("dps_air")])


def test_starcraft_strategy_three_values():
    _, library, _ = starcraft_fixture()
    armor, health, shield = library[0][2, :3]
    assert (armor, health, shield) == (30, 3225, 1050)
    assert sum(len(g) for g in STARCRAFT_DEMOS) == 9


def test_noisy_starcraft_still_three_strategies():
    for seed in range(5):
        _, _, demos = starcraft_fixture(noise=0.2, seed=seed)
        assert infer_strategies(demos).counts == (3,)


def test_starcraft_mission_scenario():
    sc = starcraft_scenario()
    assert sc.mission_tasks == (0, 0, 0, 0) and len(sc.test_teams) == 10
    assert sc.mission_library.counts == (3, 3, 3, 3)


# --------------------------------------------------------------------------
# Robotarium

def test_robotarium_library_shape():
    team, lib, _ = robotarium_fixture()
    assert lib.counts == (2, 2, 2) and lib.n_traits == 5
    assert lib[1].tolist() == [[8, 4, 0, 0, 0], [8, 0, 0, 0, 4]]
    assert team.counts.tolist() == [5, 4, 3, 1]


def test_four_ground_robots_cover_search_strategy():
    team, lib, _ = robotarium_fixture()
    agg = aggregate_traits(team, [4, 0, 0, 0])
    assert agg[:2].tolist() == [8, 4]
    assert np.all(agg >= lib[1][0])


def test_every_fixture_strategy_is_reachable():
    team, lib, _ = robotarium_fixture()
    big = TeamSpec(team.traits, np.full(4, 50))
    for m in range(3):
        for y in lib[m]:
            res = solve(lib.__class__((y[None, :],)), big)
            assert res.status == "optimal"
            assert e_min(y[None, :], big, res.assignment[0]) == 0.0


def test_success_oracle():
    team, lib, oracle = robotarium_fixture()
    exact = np.zeros((3, 4), dtype=int)
    exact[2] = [0, 0, 3, 0]
    assert judge_success(oracle, team, exact, 2)
    assert not judge_success(oracle, team, np.zeros((3, 4), dtype=int), 0)


def test_nh_fails_every_robotarium_task():
    team, _, oracle = robotarium_fixture()
    res = nh_allocate(robotarium_demos(), team)
    assert not any(oracle.judge(team, res.assignment, m) for m in range(3))


@given(st.lists(st.integers(0, 6), min_size=4, max_size=4), st.integers(0, 2))
def test_oracle_agrees_with_zero_shortfall(row, task):
    team, lib, oracle = robotarium_fixture()
    x = np.zeros((3, 4), dtype=int)
    x[task] = row
    assert oracle.judge(team, x, task) == (e_min(lib[task], team, x[task]) == 0.0)


def test_oracle_needs_strategies():
    with pytest.raises(ValueError):
        SuccessOracle(None).judge(None, np.zeros((1, 1)), 0)
