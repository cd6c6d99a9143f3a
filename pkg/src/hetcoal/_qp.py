"""Continuous relaxation of the coalition least-squares program.

    min  sum_m ||Q.T x_m - y_m||^2
    s.t. lb <= x <= ub,  sum_m x_m <= N,  [Q.T x_m >= y_m - tol]

Solved with Clarabel's interior-point method.  Only used to bound and guide
the integer search in :mod:`hetcoal.solver`.
"""

from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
from scipy import sparse

_SETTINGS = clarabel.DefaultSettings()
_SETTINGS.verbose = False
_SETTINGS.tol_gap_abs = 1e-10
_SETTINGS.tol_gap_rel = 1e-10
_SETTINGS.tol_feas = 1e-10
_SETTINGS.max_iter = 200

_SOLVED = {clarabel.SolverStatus.Solved, clarabel.SolverStatus.AlmostSolved}
_INFEASIBLE = {clarabel.SolverStatus.PrimalInfeasible, clarabel.SolverStatus.AlmostPrimalInfeasible}


@dataclass
class Relaxation:
    status: str  # "solved" | "infeasible" | "failed"
    objective: float = np.inf
    x: np.ndarray | None = None


class RelaxedProblem:
    """Fixed data (Q, targets, budget); solved repeatedly under varying bounds."""

    def __init__(self, Q: np.ndarray, targets: np.ndarray, budget: np.ndarray, floors: np.ndarray | None):
        self.Q = np.asarray(Q, dtype=float)
        self.targets = np.asarray(targets, dtype=float)  # M x U
        self.budget = np.asarray(budget, dtype=float)
        self.floors = floors  # M x U lower bounds on aggregated traits, or None
        M, S, U = self.targets.shape[0], self.Q.shape[0], self.Q.shape[1]
        self.shape = (M, S)
        n = M * S
        gram = 2.0 * self.Q @ self.Q.T
        self._P = sparse.triu(sparse.block_diag([gram] * M), format="csc")
        self._c = np.concatenate([-2.0 * self.Q @ y for y in self.targets])
        self._const = float((self.targets ** 2).sum())
        rows = [sparse.kron(np.ones((1, M)), sparse.eye(S))]
        rhs = [self.budget]
        if floors is not None:
            rows.append(sparse.block_diag([-self.Q.T] * M))
            rhs.append(-np.asarray(floors, dtype=float).ravel())
        rows += [-sparse.eye(n), sparse.eye(n)]
        self._A = sparse.vstack(rows, format="csc")
        self._rhs_fixed = np.concatenate(rhs)
        self.constant = self._const

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> Relaxation:
        b = np.concatenate([self._rhs_fixed, -lb.ravel().astype(float), ub.ravel().astype(float)])
        solver = clarabel.DefaultSolver(self._P, self._c, self._A, b,
                                        [clarabel.NonnegativeConeT(b.shape[0])], _SETTINGS)
        sol = solver.solve()
        if sol.status in _SOLVED:
            x = np.clip(np.array(sol.x), lb.ravel(), ub.ravel()).reshape(self.shape)
            return Relaxation("solved", max(sol.obj_val + self._const, 0.0), x)
        if sol.status in _INFEASIBLE:
            return Relaxation("infeasible")
        return Relaxation("failed")
