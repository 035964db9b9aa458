"""Finite-difference solver with Dirichlet data on the non-degenerate boundary only.

Rows come in three kinds:

* interior: central second differences (7-point mixed stencil for the cross
  term in 2D), first-order upwind drift, c on the diagonal;
* degenerate boundary: a is replaced by its boundary value 0, so the row is
  the first-order equation -<b, Du> + c u = f, differenced into the domain;
* dirichlet: identity rows carrying g.

Drift is upwinded on every row so that, as long as the diffusion part is
diagonally dominant, the system is an M-matrix and the discrete maximum
principle holds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operator_core import BoundaryClassification, CoefficientField, Grid

DIRECT_LIMIT = 200_000


class SingularSystemError(RuntimeError):
    """The assembled system has no unique solution."""


class AssemblyError(ValueError):
    pass


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    row_kind: tuple[str, ...]
    grid: Grid
    classification: BoundaryClassification
    f: np.ndarray
    g: np.ndarray
    c: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def dirichlet(self) -> np.ndarray:
        return np.array([k == "dirichlet" for k in self.row_kind])

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: float
    m_matrix_ok: bool
    m_matrix_witnesses: list[int]
    max_principle_violations: list[int]
    status: str = "success"
    warnings: list[str] = field(default_factory=list)
    convergence_rate: float | None = None
    method: str = "direct"


def _node_values(spec, grid: Grid, t: float | None = None, mask=None) -> np.ndarray:
    """Evaluate a scalar, a per-node array, or a callable at grid nodes."""
    n = grid.size
    if spec is None:
        return np.zeros(n)
    if callable(spec):
        out = np.zeros(n)
        idx = range(n) if mask is None else np.flatnonzero(mask)
        for i in idx:
            out[i] = spec(grid.nodes[i]) if t is None else spec(t, grid.nodes[i])
        return out
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise AssemblyError(f"expected {n} node values, got shape {arr.shape}")
    return arr.copy()


def _spatial_row(coeffs, grid, node, kind, t):
    """Return ({col: value}, c, warning-or-None) for one non-Dirichlet row."""
    x = grid.nodes[node]
    d = grid.dim
    b = coeffs.b_at(x, t)
    c = coeffs.c_at(x, t)
    row: dict[int, float] = {node: c}

    def add(j, v):
        row[j] = row.get(j, 0.0) + v

    warn = None
    if kind == "interior":
        a = coeffs.a_at(x, t)
        for k in range(d):
            hk = grid.h[k]
            jp, jm = grid.neighbor(node, k, 1), grid.neighbor(node, k, -1)
            if jp < 0 or jm < 0:
                raise AssemblyError(f"interior node {node} lacks a neighbour along axis {k}")
            w = a[k, k] / hk**2
            add(node, 2 * w)
            add(jp, -w)
            add(jm, -w)
            bk = b[k]
            if bk > 0:
                add(node, bk / hk)
                add(jp, -bk / hk)
            elif bk < 0:
                add(node, -bk / hk)
                add(jm, bk / hk)
        if d == 2 and a[0, 1] != 0.0:
            kap = abs(a[0, 1]) / (grid.h[0] * grid.h[1])
            s = 1 if a[0, 1] > 0 else -1
            i, j = grid.multi_index[node]
            for di, dj, v in ((1, s, -kap), (-1, -s, -kap), (1, 0, kap), (-1, 0, kap), (0, 1, kap), (0, -1, kap)):
                nb = grid.node_id((i + di, j + dj))
                if nb < 0:
                    raise AssemblyError(f"mixed stencil at node {node} leaves the grid")
                add(nb, v)
            add(node, -2 * kap)
    else:
        dropped = []
        for k in range(d):
            hk = grid.h[k]
            jp, jm = grid.neighbor(node, k, 1), grid.neighbor(node, k, -1)
            bk = b[k]
            if bk > 0 and jp >= 0:
                add(node, bk / hk)
                add(jp, -bk / hk)
            elif bk < 0 and jm >= 0:
                add(node, -bk / hk)
                add(jm, bk / hk)
            elif bk != 0:
                # drift leaves the domain (corner node): no upwind neighbour, so the
                # component is dropped rather than differenced downwind
                dropped.append(k)
        n_in = grid.normals[node]
        where = tuple(np.round(x, 12))
        if float(b @ n_in) <= 0:
            warn = f"degenerate node {node} at {where} has inward drift <= 0"
        if dropped:
            note = f"degenerate node {node} at {where}: outward drift along axes {dropped} dropped"
            warn = note if warn is None else f"{warn}; {note}"
    return row, c, warn


def assemble_elliptic(
    coeffs: CoefficientField,
    grid: Grid,
    classification: BoundaryClassification,
    f=0.0,
    g=0.0,
    t: float | None = None,
    diagonal_shift: float = 0.0,
) -> DiscreteOperator:
    """Assemble Au = f with u = g on the non-degenerate boundary.

    ``f`` and ``g`` may be scalars, per-node arrays or callables of a point
    (of ``(t, x)`` when ``t`` is given). ``diagonal_shift`` adds a constant to
    every non-Dirichlet diagonal entry; the parabolic stepper uses it for 1/dt.
    """
    if classification.domain.kind == "half_graph":
        raise AssemblyError("the finite-difference solver needs an interval or rectangle; straighten the boundary first")
    kinds = tuple(classification.row_kinds())
    dmask = np.array([k == "dirichlet" for k in kinds])
    fv = _node_values(f, grid, t, mask=~dmask)
    gv = np.full(grid.size, np.nan)
    gv[dmask] = _node_values(g, grid, t, mask=dmask)[dmask]
    if np.any(~np.isfinite(gv[dmask])):
        raise AssemblyError("Dirichlet data missing or not finite on the non-degenerate boundary")
    rows, cols, vals = [], [], []
    cvec = np.zeros(grid.size)
    rhs = np.zeros(grid.size)
    notes = []
    for node, kind in enumerate(kinds):
        if kind == "dirichlet":
            rows.append(node)
            cols.append(node)
            vals.append(1.0)
            rhs[node] = gv[node]
            continue
        entries, c, warn = _spatial_row(coeffs, grid, node, kind, t)
        if warn:
            notes.append(warn)
        cvec[node] = c
        entries[node] = entries.get(node, 0.0) + diagonal_shift
        for j, v in entries.items():
            rows.append(node)
            cols.append(j)
            vals.append(v)
        rhs[node] = fv[node]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))
    mat.sum_duplicates()
    fv[dmask] = 0.0
    return DiscreteOperator(mat, rhs, kinds, grid, classification, fv, gv, cvec, notes)


# ---------------------------------------------------------------- checks


class MMatrixCheck(NamedTuple):
    ok: bool
    witnesses: list[int]


def check_m_matrix(op: DiscreteOperator, tol: float = 0.0) -> MMatrixCheck:
    """Positive diagonal, non-positive off-diagonals, non-negative row sums."""
    A = op.matrix.tocsr()
    bad = []
    for i, kind in enumerate(op.row_kind):
        if kind == "dirichlet":
            continue
        lo, hi = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[lo:hi], A.data[lo:hi]
        diag = vals[cols == i].sum()
        off = vals[cols != i]
        scale = max(1.0, abs(diag))
        if diag <= 0 or (off.size and off.max() > tol * scale) or vals.sum() < -1e-12 * scale:
            bad.append(i)
    return MMatrixCheck(not bad, bad)


def _scale(*arrays) -> float:
    return max([1.0] + [float(np.nanmax(np.abs(a))) for a in arrays if np.size(a)])


def discrete_weak_max_check(report: SolveReport, op: DiscreteOperator, c0: float = 0.0) -> list[int]:
    """Nodes where u exceeds max(0, sup f / c0, sup g) (c0 > 0) or max(0, sup g) (c0 = 0)."""
    if c0 < 0:
        raise ValueError("c0 must be non-negative")
    u = report.solution
    dmask = op.dirichlet
    sup_g = float(np.max(op.g[dmask])) if dmask.any() else -math.inf
    free = ~dmask
    sup_f = float(np.max(op.f[free])) if free.any() else -math.inf
    if c0 > 0:
        bound = max(0.0, sup_f / c0, sup_g)
    else:
        if sup_f > 1e-12 * _scale(op.f):
            raise ValueError("the c0 = 0 estimate needs f <= 0")
        bound = max(0.0, sup_g)
    tol = 1e-9 * _scale(u, bound)
    return [int(i) for i in np.flatnonzero(u > bound + tol)]


@dataclass(frozen=True)
class StrongMaxDiagnostic:
    location: str  # "dirichlet", "free" or "terminal"
    argmax: tuple
    max_value: float
    constant_on_component: bool | None
    deviation: float | None
    component_size: int
    c_zero: bool
    message: str


def _free_component(op: DiscreteOperator, start: int) -> np.ndarray:
    free = ~op.dirichlet
    A = op.matrix.tocsr()
    seen = np.zeros(op.size, dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        i = stack.pop()
        for j in A.indices[A.indptr[i] : A.indptr[i + 1]]:
            if free[j] and not seen[j]:
                seen[j] = True
                stack.append(j)
    return np.flatnonzero(seen)


def discrete_strong_max_check(report: SolveReport, op: DiscreteOperator) -> StrongMaxDiagnostic:
    u = report.solution
    M = float(u.max())
    tol = 1e-9 * _scale(u)
    top = np.flatnonzero(u >= M - tol)
    free_top = [i for i in top if op.row_kind[i] != "dirichlet"]
    c_zero = bool(np.all(np.abs(op.c[~op.dirichlet]) <= 1e-14))
    if not free_top:
        return StrongMaxDiagnostic("dirichlet", (int(top[0]),), M, None, None, 0, c_zero, "max on Dirichlet boundary")
    i0 = int(free_top[0])
    comp = _free_component(op, i0)
    dev = float(M - u[comp].min())
    const = dev <= tol
    msg = "constant on its free component" if const else "max at a free node but not constant"
    return StrongMaxDiagnostic("free", (i0,), M, const, dev, int(comp.size), c_zero, msg)


# ---------------------------------------------------------------- solve


def _gs_preconditioner(A: sp.csr_matrix) -> spla.LinearOperator:
    lower = sp.tril(A, format="csr")

    def apply(r):
        return spla.spsolve_triangular(lower, r, lower=True)

    return spla.LinearOperator(A.shape, matvec=apply)


def _solve(A: sp.csr_matrix, rhs: np.ndarray, direct_limit: int) -> tuple[np.ndarray, str]:
    if A.shape[0] <= direct_limit:
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(f"matrix is singular: {exc}") from exc
        piv = np.abs(lu.U.diagonal())
        # rounding leaves a tiny pivot instead of an exact zero in a rank-deficient matrix
        if piv.min() <= A.shape[0] * np.finfo(float).eps * piv.max():
            raise SingularSystemError(f"matrix is numerically singular (pivot ratio {piv.min() / piv.max():.1e})")
        return lu.solve(rhs), "direct"
    x, info = spla.bicgstab(A, rhs, M=_gs_preconditioner(A), rtol=1e-10, atol=0.0, maxiter=10 * A.shape[0])
    if info != 0:
        raise SingularSystemError(f"iterative solve did not converge (info={info})")
    return x, "bicgstab"


def solve_linear(op: DiscreteOperator, direct_limit: int = DIRECT_LIMIT) -> SolveReport:
    A = op.matrix.tocsr()
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            u, method = _solve(A, op.rhs, direct_limit)
        except spla.MatrixRankWarning as exc:
            raise SingularSystemError(f"matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("solution is not finite; the matrix is numerically singular")
    res = float(np.max(np.abs(A @ u - op.rhs))) / _scale(op.rhs)
    mm = check_m_matrix(op)
    report = SolveReport(u, res, mm.ok, mm.witnesses, [], warnings=list(op.warnings), method=method)
    free = ~op.dirichlet
    c0 = float(max(0.0, op.c[free].min())) if free.any() else 0.0
    if c0 > 0 or np.all(op.f[free] <= 0):
        report.max_principle_violations = discrete_weak_max_check(report, op, c0)
    return report


# ---------------------------------------------------------------- parabolic


@dataclass
class ParabolicSolution:
    times: np.ndarray  # decreasing, times[0] = T
    values: np.ndarray  # values[n] is the grid field at times[n]
    residual_norm: float
    m_matrix_ok: bool
    row_kind: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)


@dataclass
class ParabolicPlan:
    """Implicit Euler marching from the terminal time down to 0."""

    coeffs: CoefficientField
    grid: Grid
    classification: BoundaryClassification
    times: np.ndarray
    f: object
    g: object
    terminal: np.ndarray

    def step_operator(self, n: int) -> DiscreteOperator:
        """System for the step from times[n-1] to times[n]."""
        dt = self.times[n - 1] - self.times[n]
        t = float(self.times[n])
        return assemble_elliptic(
            self.coeffs, self.grid, self.classification, self.f, self.g, t=t, diagonal_shift=1.0 / dt
        )

    def march(self) -> ParabolicSolution:
        vals = [self.terminal.copy()]
        res, ok, notes = 0.0, True, []
        cached = None
        frozen = not self.coeffs.parabolic
        for n in range(1, len(self.times)):
            dt = self.times[n - 1] - self.times[n]
            op = self.step_operator(n)
            if n == 1:
                notes = list(op.warnings)
                ok = check_m_matrix(op).ok
            free = ~op.dirichlet
            rhs = op.rhs.copy()
            rhs[free] += vals[-1][free] / dt
            if frozen and cached is not None and cached[0] == dt:
                lu = cached[1]
            else:
                try:
                    lu = spla.splu(op.matrix.tocsc())
                except RuntimeError as exc:
                    raise SingularSystemError(f"step {n}: {exc}") from exc
                cached = (dt, lu)
            u = lu.solve(rhs)
            res = max(res, float(np.max(np.abs(op.matrix @ u - rhs))) / _scale(rhs))
            vals.append(u)
        return ParabolicSolution(self.times.copy(), np.array(vals), res, ok, op.row_kind if len(self.times) > 1 else (), notes)


def time_grid(T: float, steps: int) -> np.ndarray:
    if not T > 0 or steps < 1:
        raise ValueError("need T > 0 and at least one step")
    return np.linspace(T, 0.0, steps + 1)


def assemble_parabolic(
    coeffs: CoefficientField,
    grid: Grid,
    times: Sequence[float],
    classification: BoundaryClassification,
    f=0.0,
    g=0.0,
    terminal=None,
) -> ParabolicPlan:
    """Plan for -u_t + A u = f with u(T) = terminal and u = g on the lateral non-degenerate boundary.

    ``times`` must decrease strictly from T to 0. Callable ``f``/``g`` take
    ``(t, x)``; ``terminal`` takes ``x`` or is a per-node array.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("need at least two time levels")
    if np.any(np.diff(times) >= 0):
        raise ValueError("time steps must be positive (times strictly decreasing from T)")
    if terminal is None:
        raise ValueError("terminal data is required on {T} x domain")
    term = _node_values(terminal, grid)
    if not np.all(np.isfinite(term)):
        raise ValueError("terminal data must be finite")
    return ParabolicPlan(coeffs, grid, classification, times, f, g, term)


def parabolic_strong_max_check(sol: ParabolicSolution, plan: ParabolicPlan) -> StrongMaxDiagnostic:
    """Strong-max diagnostic for a marched solution.

    A maximum at a free node at step n forces constancy on later time levels
    (times[:n+1]) over the free spatial component, which is the discrete
    propagation set for the terminal-value convention.
    """
    vals = sol.values
    M = float(vals.max())
    tol = 1e-9 * _scale(vals)
    dmask = np.array([k == "dirichlet" for k in sol.row_kind])
    hits = np.argwhere(vals >= M - tol)
    c_zero = True
    interior = [(n, i) for n, i in hits if n > 0 and not dmask[i]]
    if not interior:
        where = "terminal" if any(n == 0 for n, _ in hits) else "dirichlet"
        n, i = hits[0]
        return StrongMaxDiagnostic(where, (int(n), int(i)), M, None, None, 0, c_zero, f"max on the {where} part of the parabolic boundary")
    n0, i0 = max(interior, key=lambda p: p[0])
    op = plan.step_operator(max(1, int(n0)))
    comp = _free_component(op, int(i0))
    block = vals[: n0 + 1][:, comp]
    dev = float(M - block.min())
    const = dev <= tol
    return StrongMaxDiagnostic(
        "free", (int(n0), int(i0)), M, const, dev, int(comp.size) * (int(n0) + 1), c_zero,
        "constant on the propagation set" if const else "max at a free node but not constant on the propagation set",
    )


# ---------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceReport:
    levels: tuple[int, ...]
    h: tuple[float, ...]
    errors: tuple[float, ...]
    rate: float
    unstable: bool


def convergence_study(
    solve: Callable[[int], tuple[Grid, np.ndarray]],
    exact: Callable[[np.ndarray], float],
    levels: Sequence[int],
) -> ConvergenceReport:
    """Max-norm errors per level and the least-squares slope of log(error) vs log(h).

    ``solve(cells)`` returns the grid and the discrete solution.
    """
    hs, errs = [], []
    for n in levels:
        grid, u = solve(int(n))
        ex = np.array([exact(p) for p in grid.nodes])
        errs.append(float(np.max(np.abs(u - ex))))
        hs.append(min(grid.h))
    errs_a = np.array(errs)
    if np.all(errs_a == 0):
        rate = math.inf
    else:
        pos = errs_a > 0
        rate = float(np.polyfit(np.log(np.array(hs)[pos]), np.log(errs_a[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    unstable = len(errs) >= 3 and any(errs[i + 1] > errs[i] for i in range(len(errs) - 1)) and not np.all(errs_a == 0)
    return ConvergenceReport(tuple(int(n) for n in levels), tuple(hs), tuple(errs), rate, unstable)
