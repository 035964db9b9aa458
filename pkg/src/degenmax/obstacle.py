"""Unilateral obstacle problems min{Au - f, u - psi} = 0 by projected SOR.

The discrete operator comes from :mod:`degenmax.fd_solver`, so Dirichlet data
sits on the non-degenerate boundary only. Sweeps visit nodes in lexicographic
order, which is part of the result: a different ordering gives a different
(equally valid) iterate sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .fd_solver import DiscreteOperator, ParabolicPlan, check_m_matrix


class ObstacleNonConvergence(RuntimeError):
    def __init__(self, message: str, solution: "ObstacleSolution"):
        super().__init__(message)
        self.solution = solution


@dataclass
class ObstacleProblem:
    op: DiscreteOperator
    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).reshape(self.op.size)
        dmask = self.op.dirichlet
        bad = np.flatnonzero(dmask & (self.psi > self.op.g + 1e-14 * np.maximum(1.0, np.abs(self.op.g))))
        if bad.size:
            raise ValueError(f"obstacle exceeds the Dirichlet data at nodes {bad[:10].tolist()}")


@dataclass
class ObstacleSolution:
    u: np.ndarray
    psi: np.ndarray
    active_set: np.ndarray
    complementarity_residual: float
    iterations: int
    converged: bool
    final_change: float
    warnings: list[str] = field(default_factory=list)


def complementarity_residual(op: DiscreteOperator, psi: np.ndarray, u: np.ndarray, one_sided: bool = False) -> float:
    """max |min(Au - f, u - psi)| over free rows.

    Each row residual is divided by its diagonal entry so both arguments of
    the min are in units of u, the same units as the sweep stopping test.
    With ``one_sided`` the supersolution test is used instead: the largest
    violation of Au - f >= 0 and u - psi >= 0.
    """
    free = ~op.dirichlet
    r = ((op.matrix @ u - op.rhs) / op.matrix.diagonal())[free]
    gap = (u - psi)[free]
    if not free.any():
        return 0.0
    if one_sided:
        return float(max(0.0, -r.min(), -gap.min()))
    return float(np.max(np.abs(np.minimum(r, gap))))


def _psor(op: DiscreteOperator, rhs: np.ndarray, psi: np.ndarray, u0, omega, tol, max_iter):
    indptr, indices, data = _kernels.as_csr_arrays(op.matrix)
    diag = np.ascontiguousarray(op.matrix.diagonal(), dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    psi_eff = psi.copy()
    psi_eff[op.dirichlet] = -np.inf  # Dirichlet rows are identity rows; never projected
    u = np.ascontiguousarray(np.maximum(u0, psi_eff), dtype=np.float64)
    change = np.inf
    it = 0
    while it < max_iter:
        change = _kernels.psor_sweep(indptr, indices, data, diag, rhs, psi_eff, u, omega)
        it += 1
        if change < tol:
            return u, it, change, True
    return u, it, change, False


def _polish(op: DiscreteOperator, rhs: np.ndarray, psi: np.ndarray, u: np.ndarray, tol: float) -> np.ndarray:
    """One active-set step from a converged PSOR iterate.

    The sweep stopping test bounds the last update, not the error, which can
    be larger by the inverse spectral gap. Freezing the contact set and solving
    the remaining linear system removes that lag. The result is kept only if
    it is feasible and complementary; otherwise the sweep iterate stands.
    """
    free = ~op.dirichlet
    contact = free & (u - psi <= 10 * tol)
    solve_rows = free & ~contact
    if not solve_rows.any():
        return u
    fixed = np.where(contact, psi, u)
    A = op.matrix.tocsr()
    idx = np.flatnonzero(solve_rows)
    sub = A[idx][:, idx].tocsc()
    b = rhs[idx] - A[idx] @ np.where(solve_rows, 0.0, fixed)
    try:
        x = spla.spsolve(sub, b)
    except RuntimeError:
        return u
    cand = fixed.copy()
    cand[idx] = x
    if not np.all(np.isfinite(cand)):
        return u
    r = (A @ cand - rhs) / A.diagonal()
    if np.all(cand[free] >= psi[free] - tol) and np.all(r[contact] >= -tol) and np.abs(cand - u).max() < 1e3 * tol:
        return cand
    return u


def _finish(op, psi, u, it, change, ok, tol, notes):
    active = np.flatnonzero((~op.dirichlet) & (u - psi <= 10 * tol))
    sol = ObstacleSolution(u, psi, active, complementarity_residual(op, psi, u), it, ok, float(change), notes)
    if not ok:
        raise ObstacleNonConvergence(f"projected SOR stopped after {it} sweeps with change {change:.3e}", sol)
    return sol


def solve_obstacle_elliptic(
    problem: ObstacleProblem,
    omega: float = 1.5,
    tol: float = 1e-8,
    max_iter: int = 200_000,
    u0: np.ndarray | None = None,
) -> ObstacleSolution:
    """Projected SOR from ``u0`` (default: the obstacle, with g on Dirichlet rows)."""
    if not 0 < omega < 2:
        raise ValueError("omega must lie in (0, 2)")
    op = problem.op
    notes = [] if check_m_matrix(op).ok else ["assembled system is not an M-matrix; convergence is not guaranteed"]
    psi = problem.psi
    if u0 is None:
        u0 = np.where(op.dirichlet, op.g, psi)
    u, it, change, ok = _psor(op, op.rhs, psi, np.asarray(u0, dtype=float), omega, tol, max_iter)
    if ok:
        u = _polish(op, op.rhs, psi, u, tol)
    return _finish(op, psi, u, it, change, ok, tol, notes)


def solve_obstacle_parabolic(
    plan: ParabolicPlan,
    psi,
    omega: float = 1.5,
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> list[ObstacleSolution]:
    """March from the terminal time; each implicit step is an elliptic obstacle problem.

    ``psi`` is a per-node array or a callable ``psi(t, x)``. The returned list
    starts with the terminal layer.
    """
    grid = plan.grid

    def psi_at(t):
        if callable(psi):
            return np.array([psi(t, x) for x in grid.nodes])
        return np.asarray(psi, dtype=float).reshape(grid.size)

    p0 = psi_at(plan.times[0])
    if np.any(plan.terminal < p0 - 1e-14 * np.maximum(1.0, np.abs(p0))):
        raise ValueError("terminal data must dominate the obstacle")
    first = ObstacleSolution(plan.terminal.copy(), p0, np.flatnonzero(plan.terminal - p0 <= 10 * tol), 0.0, 0, True, 0.0)
    out = [first]
    for n in range(1, len(plan.times)):
        dt = plan.times[n - 1] - plan.times[n]
        op = plan.step_operator(n)
        rhs = op.rhs.copy()
        free = ~op.dirichlet
        rhs[free] += out[-1].u[free] / dt
        step_op = DiscreteOperator(op.matrix, rhs, op.row_kind, op.grid, op.classification, op.f, op.g, op.c, op.warnings)
        pn = psi_at(plan.times[n])
        ObstacleProblem(step_op, pn)  # compatibility check at this level
        start = np.where(op.dirichlet, op.g, np.maximum(out[-1].u, pn))
        u, it, change, ok = _psor(step_op, rhs, pn, start, omega, tol, max_iter)
        if ok:
            u = _polish(step_op, rhs, pn, u, tol)
        out.append(_finish(step_op, pn, u, it, change, ok, tol, []))
    return out


@dataclass(frozen=True)
class ComparisonReport:
    ok: bool
    violations: tuple[int, ...]
    max_violation: float
    max_difference: float


def comparison_check(
    sol1: ObstacleSolution, sol2: ObstacleSolution, tol: float = 1e-8, identical: bool = False
) -> ComparisonReport:
    """u2 >= u1 - tol node-wise; with ``identical`` data also |u2 - u1| < tol."""
    diff = sol2.u - sol1.u
    viol = np.flatnonzero(diff < -tol)
    if identical:
        viol = np.flatnonzero(np.abs(diff) >= tol)
    return ComparisonReport(
        ok=viol.size == 0,
        violations=tuple(int(i) for i in viol),
        max_violation=float(max(0.0, -diff.min())),
        max_difference=float(np.abs(diff).max()),
    )
