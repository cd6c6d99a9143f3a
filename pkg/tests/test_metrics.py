import math

import numpy as np
import pytest

from hetcoal.core import EmptyInputError, SpeciesTraitMatrix, TeamSpec
from hetcoal.metrics import EvaluationRecord, NormalizationError, e_exact, e_min, success_rate, utilization

EYE2 = np.eye(2)


def test_e_min_examples():
    assert e_min([[3, 4]], EYE2, [3, 4]) == 0.0
    assert e_min([[3, 4], [1, 1]], EYE2, [5, 5]) == 0.0
    assert e_min([[4, 0]], EYE2, [1, 5]) == pytest.approx(0.75)


def test_e_exact_examples():
    assert e_exact([[3, 4], [9, 9]], EYE2, [3, 4]) == 0.0
    assert e_exact([[4, 0]], EYE2, [1, 5]) == pytest.approx(math.sqrt(34) / 4)
    assert e_exact([[6, 8]], EYE2, [7, 9]) == pytest.approx(math.sqrt(2) / 10)


def test_e_exact_penalizes_surplus_but_e_min_does_not():
    assert e_min([[2, 2]], EYE2, [2, 2]) == e_min([[2, 2]], EYE2, [5, 5]) == 0.0
    assert e_exact([[2, 2]], EYE2, [5, 5]) > e_exact([[2, 2]], EYE2, [2, 2])


def test_zero_norm_strategy_rejected():
    with pytest.raises(NormalizationError):
        e_min([[0, 0]], EYE2, [1, 1])
    with pytest.raises(EmptyInputError):
        e_exact(np.zeros((0, 2)), EYE2, [1, 1])


def test_utilization_examples():
    team = TeamSpec(SpeciesTraitMatrix(EYE2), np.array([5, 5]))
    assert utilization(np.array([[0, 0], [5, 5]]), team, 0) == 0.0
    assert utilization(np.array([[0, 0], [5, 5]]), team, 1) == 1.0
    assert utilization(np.array([[2, 3]]), team, 0) == 0.5
    with pytest.raises(ValueError):
        utilization(np.array([[0, 0]]), TeamSpec(SpeciesTraitMatrix(EYE2), np.array([0, 0])), 0)


def test_success_rate():
    assert success_rate([True] * 4) == 100.0
    assert success_rate([False] * 3) == 0.0
    assert success_rate([True] * 197 + [False] * 803) == pytest.approx(19.7)
    with pytest.raises(EmptyInputError):
        success_rate([])


def test_record_row_keeps_column_order():
    r = EvaluationRecord("ours", 0, 1, 0.0, 0.1, 0.2, True, 0.01, "optimal")
    assert list(r.as_row()) == ["method", "team_id", "task_id", "e_min", "e_exact", "utilization", "success",
                                "wall_time_s", "status"]
