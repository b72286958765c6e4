"""Discrete-discrete Kantorovich solver used as an independent oracle.

Solves the transport linear program between two weighted point clouds
exactly (HiGHS dual simplex), returning the optimal plan, its cost, and
dual potentials. Deliberately favors correctness over speed: it is the
ground truth that the semi-discrete solver is checked against on small
instances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .geometry import DiscreteTargetMeasure, GeometryError, MassMismatchError

_FEAS_TOL = 1e-9


class SizeLimitExceededError(GeometryError):
    """Cost matrix would exceed the oracle's size cap."""


@dataclass(eq=False)
class DualPotentials:
    """Feasible dual pair: phi on the source, psi on the target support."""

    phi: np.ndarray
    psi: np.ndarray

    def objective(self, source_weights, target_weights) -> float:
        return float(self.phi @ source_weights + self.psi @ target_weights)

    def max_violation(self, cost: np.ndarray) -> float:
        return float((self.phi[:, None] + self.psi[None, :] - cost).max())


@dataclass(eq=False)
class TransportPlan:
    """Nonnegative coupling with stored marginals."""

    matrix: np.ndarray          # (m, n)
    row_marginals: np.ndarray   # (m,)
    col_marginals: np.ndarray   # (n,)
    dual: DualPotentials | None = None


@dataclass(frozen=True)
class PlanFeasibility:
    feasible: bool
    max_row_violation: float
    max_col_violation: float
    min_entry: float


def cost_matrix(source_points, target_points, exponent: int = 2) -> np.ndarray:
    """Pairwise cost: half squared distance (exponent 2) or distance (1)."""
    X = np.atleast_2d(np.asarray(source_points, dtype=float))
    Y = np.atleast_2d(np.asarray(target_points, dtype=float))
    d2 = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=2)
    if exponent == 2:
        return 0.5 * d2
    if exponent == 1:
        return np.sqrt(d2)
    raise ValueError("cost_exponent must be 1 or 2")


def c_transform(phi, cost: np.ndarray) -> np.ndarray:
    """Tightest dual partner of phi: psi_b = min_a (c_ab - phi_a)."""
    phi = np.asarray(phi, dtype=float)
    return np.min(cost - phi[:, None], axis=0)


def solve_lp(source_points, source_weights, target: DiscreteTargetMeasure,
             cost_exponent: int = 2, size_limit: int = 10**6):
    """Exact optimal transport plan between empirical source and target.

    Returns ``(plan, cost)``; the plan carries dual potentials repaired by
    a c-transform so dual feasibility holds exactly.
    """
    X = np.atleast_2d(np.asarray(source_points, dtype=float))
    a = np.asarray(source_weights, dtype=float).reshape(-1)
    if len(a) != len(X):
        raise GeometryError("source weights and points disagree in length")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise GeometryError("source weights must be positive and finite")
    b = target.weights
    m, n = len(X), target.n
    if m * n > size_limit:
        raise SizeLimitExceededError(f"{m} x {n} exceeds the size cap {size_limit}")
    if abs(a.sum() - b.sum()) > _FEAS_TOL * (1.0 + b.sum()):
        raise MassMismatchError(
            f"source mass {a.sum():.12g} != target mass {b.sum():.12g}")

    cost = cost_matrix(X, target.points, cost_exponent)
    A_rows = sparse.kron(sparse.eye(m, format="csr"), np.ones((1, n)), format="csr")
    A_cols = sparse.kron(np.ones((1, m)), sparse.eye(n, format="csr"), format="csr")
    A_eq = sparse.vstack([A_rows, A_cols], format="csr")
    b_eq = np.concatenate([a, b])

    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs-ds")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")

    matrix = res.x.reshape(m, n)
    phi = np.asarray(res.eqlin.marginals[:m], dtype=float)
    psi = c_transform(phi, cost)
    plan = TransportPlan(matrix, matrix.sum(axis=1), matrix.sum(axis=0),
                         dual=DualPotentials(phi, psi))
    return plan, float(res.fun)


def verify_plan(plan: TransportPlan, cost: np.ndarray):
    """Recompute the plan's cost and marginal feasibility."""
    matrix = plan.matrix
    rows = matrix.sum(axis=1)
    cols = matrix.sum(axis=0)
    max_row = float(np.abs(rows - plan.row_marginals).max())
    max_col = float(np.abs(cols - plan.col_marginals).max())
    min_entry = float(matrix.min())
    feasible = max_row <= _FEAS_TOL and max_col <= _FEAS_TOL and min_entry >= -_FEAS_TOL
    value = float(np.sum(matrix * cost))
    return value, PlanFeasibility(feasible, max_row, max_col, min_entry)


def write_plan_csv(plan: TransportPlan, path) -> None:
    """Sparse CSV export: one row per positive plan entry."""
    with open(path, "w") as fh:
        fh.write("source_index,target_index,mass\n")
        for i, j in zip(*np.nonzero(plan.matrix > 0)):
            fh.write(f"{int(i)},{int(j)},{repr(float(plan.matrix[i, j]))}\n")


def write_cost_csv(cost: np.ndarray, path) -> None:
    """Dense CSV export of a cost matrix, one source row per line."""
    with open(path, "w") as fh:
        for row in cost:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
