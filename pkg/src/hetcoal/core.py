"""Domain types and the trait-aggregation algebra.

A team is described by a species-trait matrix ``Q`` (species x traits) and a
vector of robot counts per species.  An assignment ``X`` (tasks x species)
says how many robots of each species go to each task; the traits a coalition
brings to task ``m`` are ``Q.T @ X[m]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree."""


class EmptyInputError(ValueError):
    """An operation received an empty collection it cannot work with."""


class DegenerateInputError(ValueError):
    """Input is well-formed but too small or too uniform for the operation."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_trait_vector(values, n_traits: int | None = None) -> np.ndarray:
    """Validate and return a read-only float vector of nonnegative traits."""
    v = np.array(values, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"trait vector must be 1-D, got shape {v.shape}")
    if n_traits is not None and v.shape[0] != n_traits:
        raise DimensionError(f"expected {n_traits} traits, got {v.shape[0]}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("trait values must be finite and nonnegative")
    return _frozen(v)


def as_assignment(values, n_species: int | None = None) -> np.ndarray:
    """Validate and return a read-only (tasks x species) integer matrix."""
    a = np.asarray(values)
    if a.ndim != 2:
        raise DimensionError(f"assignment must be 2-D, got shape {a.shape}")
    if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
        raise ValueError("assignment entries must be integers")
    a = np.array(a, dtype=np.int64)
    if np.any(a < 0):
        raise ValueError("assignment entries must be nonnegative")
    if n_species is not None and a.shape[1] != n_species:
        raise DimensionError(f"assignment has {a.shape[1]} species columns, expected {n_species}")
    return _frozen(a)


@dataclass(frozen=True, eq=False)
class SpeciesTraitMatrix:
    """Per-species trait vectors, one row per species."""

    values: np.ndarray
    species: tuple[str, ...] = ()

    def __post_init__(self):
        q = np.array(self.values, dtype=float)
        if q.ndim != 2 or q.shape[0] < 1 or q.shape[1] < 1:
            raise DimensionError(f"species-trait matrix must be S x U with S, U >= 1, got {q.shape}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("species traits must be finite and nonnegative")
        names = tuple(self.species) or tuple(f"species{s}" for s in range(q.shape[0]))
        if len(names) != q.shape[0]:
            raise DimensionError(f"{len(names)} species names for {q.shape[0]} rows")
        object.__setattr__(self, "values", _frozen(q))
        object.__setattr__(self, "species", names)

    @property
    def n_species(self) -> int:
        return self.values.shape[0]

    @property
    def n_traits(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SpeciesTraitMatrix):
            return NotImplemented
        return self.species == other.species and np.array_equal(self.values, other.values)

    def scaled(self, c: float) -> "SpeciesTraitMatrix":
        return SpeciesTraitMatrix(self.values * c, self.species)


@dataclass(frozen=True, eq=False)
class TeamSpec:
    traits: SpeciesTraitMatrix
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.shape[0] != self.traits.n_species:
            raise DimensionError(f"counts shape {c.shape} does not match {self.traits.n_species} species")
        if c.size and not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("robot counts must be integers")
        c = np.array(c, dtype=np.int64)
        if np.any(c < 0):
            raise ValueError("robot counts must be nonnegative")
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def Q(self) -> np.ndarray:
        return self.traits.values

    @property
    def n_species(self) -> int:
        return self.traits.n_species

    @property
    def n_traits(self) -> int:
        return self.traits.n_traits

    @property
    def total_robots(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, TeamSpec):
            return NotImplemented
        return self.traits == other.traits and np.array_equal(self.counts, other.counts)

    def to_dict(self) -> dict:
        return {
            "species": list(self.traits.species),
            "Q": self.traits.values.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeamSpec":
        return cls(SpeciesTraitMatrix(np.array(d["Q"], dtype=float), tuple(d["species"])),
                   np.array(d["counts"], dtype=np.int64))


def validate_assignment(assignment, team: TeamSpec) -> np.ndarray:
    """Return the assignment as an array, raising if it overdraws the team."""
    x = as_assignment(assignment, team.n_species)
    over = x.sum(axis=0) > team.counts
    if np.any(over):
        raise ValueError(f"assignment recruits more robots than available for species "
                         f"{[team.traits.species[s] for s in np.flatnonzero(over)]}")
    return x


@dataclass(frozen=True, eq=False)
class Demonstration:
    assignment: np.ndarray
    team: TeamSpec

    def __post_init__(self):
        object.__setattr__(self, "assignment", validate_assignment(self.assignment, self.team))

    @property
    def n_tasks(self) -> int:
        return self.assignment.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Demonstration):
            return NotImplemented
        return self.team == other.team and np.array_equal(self.assignment, other.assignment)


@dataclass(frozen=True)
class DemonstrationSet:
    demos: tuple[Demonstration, ...]
    trait_names: tuple[str, ...]
    n_tasks: int = field(default=-1)

    def __post_init__(self):
        demos = tuple(self.demos)
        names = tuple(self.trait_names)
        n_tasks = self.n_tasks
        if n_tasks < 0:
            if not demos:
                raise EmptyInputError("cannot infer the task count of an empty demonstration set")
            n_tasks = demos[0].n_tasks
        for i, d in enumerate(demos):
            if d.n_tasks != n_tasks:
                raise DimensionError(f"demo {i} has {d.n_tasks} tasks, expected {n_tasks}")
            if d.team.n_traits != len(names):
                raise DimensionError(f"demo {i} has {d.team.n_traits} traits, expected {len(names)}")
        object.__setattr__(self, "demos", demos)
        object.__setattr__(self, "trait_names", names)
        object.__setattr__(self, "n_tasks", n_tasks)

    def __len__(self):
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)

    @property
    def n_traits(self) -> int:
        return len(self.trait_names)

    def to_dict(self) -> dict:
        return {
            "traits": list(self.trait_names),
            "tasks": self.n_tasks,
            "demos": [
                {
                    "species": list(d.team.traits.species),
                    "Q": d.team.Q.tolist(),
                    "X": d.assignment.tolist(),
                    "counts": d.team.counts.tolist(),
                }
                for d in self.demos
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DemonstrationSet":
        for key in ("traits", "tasks", "demos"):
            if key not in d:
                raise ValueError(f"dataset is missing the '{key}' field")
        demos = []
        for i, raw in enumerate(d["demos"]):
            try:
                team = TeamSpec(SpeciesTraitMatrix(np.array(raw["Q"], dtype=float), tuple(raw["species"])),
                                np.array(raw["counts"]))
                demos.append(Demonstration(np.array(raw["X"]), team))
            except KeyError as e:
                raise ValueError(f"demos[{i}] is missing field {e}") from None
            except ValueError as e:
                raise ValueError(f"demos[{i}]: {e}") from e
        return cls(tuple(demos), tuple(d["traits"]), int(d["tasks"]))


def aggregate_traits(team, task_row) -> np.ndarray:
    """Traits a coalition brings to a task: ``Q.T @ x``.

    ``team`` may be a :class:`SpeciesTraitMatrix`, a :class:`TeamSpec` or a raw
    (species x traits) array.
    """
    q = _q(team)
    x = np.asarray(task_row)
    if x.ndim != 1 or x.shape[0] != q.shape[0]:
        raise DimensionError(f"task row of shape {x.shape} does not match {q.shape[0]} species")
    return q.T @ x


def aggregate_all(assignment, team) -> np.ndarray:
    """Task-trait matrix: one aggregated trait row per task."""
    q = _q(team)
    x = np.asarray(assignment)
    if x.ndim != 2 or x.shape[1] != q.shape[0]:
        raise DimensionError(f"assignment of shape {x.shape} does not match {q.shape[0]} species")
    return x @ q


def _q(team) -> np.ndarray:
    if isinstance(team, TeamSpec):
        return team.Q
    if isinstance(team, SpeciesTraitMatrix):
        return team.values
    q = np.asarray(team, dtype=float)
    if q.ndim != 2:
        raise DimensionError(f"species-trait matrix must be 2-D, got shape {q.shape}")
    return q


def load_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_dataset(path) -> DemonstrationSet:
    try:
        return DemonstrationSet.from_dict(load_json(path))
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from e
