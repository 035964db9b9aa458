"""Moving a boundary maximum on the degenerate boundary into the interior.

Works in the straightened frame: the degenerate boundary is {x_d = 0}, the
base point is the origin and the inward normal is e_d. Given a function u
with a strict maximum r = u(0) and normal slope p = u_{x_d}(0) < 0, the
quadratic

    w(x) = (eta - p) x_d - (Q/2) |x|^2          (elliptic)
    w(t, x) = -zeta t + (eta - p) x_d - (Q/2) |x|^2   (parabolic)

is added and the maximum of v = u + w is sought inside a cut cylinder V of
height x_hat_d = (eta - p) / (m Q). Every claim is checked by sampling, not
proved; the certificate reports the worst sample and where it occurred.

Only d = 1 and d = 2 are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operator_core import CoefficientField, ScalarField, apply_operator

ELLIPTIC = "elliptic"
PARABOLIC = "parabolic"


class HopfViolation(ValueError):
    """The normal derivative at the base point is not negative."""


class ConstantsSelectionError(RuntimeError):
    def __init__(self, message: str, violated: list[str]):
        super().__init__(message)
        self.violated = violated


class CylinderConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryMaxData:
    p: float
    r: float
    b0: float
    K: float
    Lambda0: float
    ell: float
    rho0: float
    tau: float | None = None

    def __post_init__(self):
        if not self.p < 0:
            raise ValueError("normal slope p must be negative")
        if not self.b0 > 0:
            raise ValueError("b0 must be positive")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.Lambda0 < 0:
            raise ValueError("Lambda0 must be non-negative")
        if not (self.ell > 0 and self.rho0 > 0):
            raise ValueError("ell and rho0 must be positive")
        if self.Lambda0 * self.ell > self.b0 / 4:
            raise ValueError("need Lambda0 * ell <= b0 / 4")
        if self.rho0 > 1 + 2 * self.b0 / self.K:
            raise ValueError("need rho0 <= 1 + 2 b0 / K")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")


def m_constant(b0: float, K: float, mode: str = ELLIPTIC) -> float:
    factor = 8.0 if mode == ELLIPTIC else 16.0
    return factor / b0 * (K + 2.0 * b0)


@dataclass(frozen=True)
class PerturbationSpec:
    eta: float
    zeta: float
    Q: float
    m: float
    x_hat_d: float
    mode: str
    dim: int
    doublings: int = 0


def x_hat(eta: float, p: float, m: float, Q: float) -> float:
    return (eta - p) / (m * Q)


# ------------------------------------------------------------------- Hopf


@dataclass(frozen=True)
class HopfResult:
    derivative: float
    passed: bool
    tol: float

    def require(self) -> "HopfResult":
        if not self.passed:
            raise HopfViolation(
                f"normal derivative {self.derivative:.6g} is not below -{self.tol:g}; "
                "the field is not subharmonic or the maximum is not strict"
            )
        return self


def hopf_check(
    u: ScalarField | callable,
    point=None,
    normal=None,
    step: float = 1e-5,
    t: float | None = None,
    tol_hopf: float = 1e-4,
) -> HopfResult:
    """One-sided second-order difference of u along the inward normal.

    ``u`` may be a ScalarField or a plain callable of x (or of (t, x)).
    """
    value = u.value if isinstance(u, ScalarField) else u
    parabolic = isinstance(u, ScalarField) and u.parabolic or t is not None
    x0 = np.zeros(1) if point is None else np.atleast_1d(np.asarray(point, dtype=float))
    n = np.eye(len(x0))[-1] if normal is None else np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def at(s):
        x = x0 + s * n
        return float(value(0.0 if t is None else t, x) if parabolic else value(x))

    d = (-3.0 * at(0.0) + 4.0 * at(step) - at(2.0 * step)) / (2.0 * step)
    return HopfResult(d, d < -tol_hopf, tol_hopf)


# ------------------------------------------------------------- constants


def _box(rho0: float, height: float, dim: int, n: int):
    """Sample points of the closed box |x'| <= rho0, 0 <= x_d <= height, minus the origin."""
    ladder = height * 2.0 ** -np.arange(11)
    xd = np.unique(np.concatenate([np.linspace(0.0, height, n), ladder]))
    if dim == 1:
        pts = xd[:, None]
    else:
        xp = np.linspace(-rho0, rho0, n)
        XP, XD = np.meshgrid(xp, xd, indexing="ij")
        pts = np.column_stack([XP.ravel(), XD.ravel()])
    return pts[np.linalg.norm(pts, axis=1) > 0]


def _u_values(u: ScalarField, pts, t=None):
    return evaluate_many(u.value, pts, t if u.parabolic else None)


def remainder_max(u: ScalarField, data: BoundaryMaxData, height: float, dim: int, n: int = 33) -> float:
    """Largest sampled o(x) = (u - r - p x_d) / |x| (elliptic) or / (t + |x|) (parabolic)."""
    pts = _box(data.rho0, height, dim, n)
    norms = np.linalg.norm(pts, axis=1)
    if not u.parabolic:
        o = (_u_values(u, pts) - data.r - data.p * pts[:, -1]) / norms
        return float(o.max())
    best = -np.inf
    for t in np.linspace(0.0, data.tau, n):
        o = (_u_values(u, pts, t) - data.r - data.p * pts[:, -1]) / (t + norms)
        best = max(best, float(o.max()))
    return best


def _temporal_excess(u: ScalarField, data: BoundaryMaxData, eta: float, height: float, dim: int, n: int) -> float:
    """max over the box at t = tau of eta x_d + u(tau, x) - r - p x_d."""
    pts = np.vstack([np.zeros((1, dim)), _box(data.rho0, height, dim, n)])
    vals = _u_values(u, pts, data.tau) - data.r - data.p * pts[:, -1] + eta * pts[:, -1]
    return float(vals.max())


def envelope_cap(P: float, Q: float) -> float:
    return (1.0 + math.sqrt(2.0)) * P / Q


def select_constants(
    data: BoundaryMaxData,
    u_oracle: ScalarField,
    mode: str = ELLIPTIC,
    dim: int = 2,
    samples: int = 33,
    max_doublings: int = 60,
) -> PerturbationSpec:
    """Fix eta (and zeta), then double Q until every sampled requirement holds."""
    if mode not in (ELLIPTIC, PARABOLIC):
        raise ValueError(f"mode must be {ELLIPTIC!r} or {PARABOLIC!r}")
    if dim not in (1, 2):
        raise ValueError("only d = 1 and d = 2 are supported")
    if mode == PARABOLIC and data.tau is None:
        raise ValueError("parabolic mode needs tau")
    if u_oracle.parabolic != (mode == PARABOLIC):
        raise ValueError("u_oracle time dependence does not match the mode")
    m = m_constant(data.b0, data.K, mode)
    p = data.p
    P = -p / (8.0 * m)
    eta = min(1.0, -p / (16.0 * m))
    zeta = min(1.0, -data.b0 * p / 16.0) if mode == PARABOLIC else 0.0
    Q = (eta - p) / (m * data.ell)
    violated: list[str] = []
    for k in range(max_doublings + 1):
        xh = x_hat(eta, p, m, Q)
        violated = []
        if xh > data.ell:
            violated.append("x_hat_d <= ell")
        if dim == 2:
            if xh > data.rho0:
                violated.append("x_hat_d <= rho0")
            if envelope_cap(P, Q) > data.rho0:
                violated.append("side envelope <= rho0")
        bound = P if mode == ELLIPTIC else min(P, zeta / 2.0)
        if not remainder_max(u_oracle, data, xh, dim, samples) < bound:
            violated.append("Taylor remainder bound")
        if mode == PARABOLIC:
            tau = data.tau
            if _temporal_excess(u_oracle, data, eta, xh, dim, samples) > 0.75 * zeta * tau:
                violated.append("temporal face bound")
            if xh > min(zeta * tau / 4.0, tau / 2.0):
                violated.append("x_hat_d <= min(zeta tau / 4, tau / 2)")
        if not violated:
            return PerturbationSpec(eta, zeta, Q, m, xh, mode, dim, k)
        Q *= 2.0
    raise ConstantsSelectionError(
        f"no admissible Q after {max_doublings} doublings; still violated: {', '.join(violated)}", violated
    )


# ------------------------------------------------------------------ w and V


def build_w(spec: PerturbationSpec, data: BoundaryMaxData) -> ScalarField:
    slope = spec.eta - data.p
    Q, zeta, d = spec.Q, spec.zeta, spec.dim

    def value(x):
        x = np.asarray(x, dtype=float)
        return slope * x[-1] - 0.5 * Q * np.sum(x * x, axis=0)

    def grad(x):
        g = -Q * np.asarray(x, dtype=float)
        g[-1] += slope
        return g

    def hess(x):
        return -Q * np.eye(d)

    if spec.mode == ELLIPTIC:
        return ScalarField(value, grad, hess)
    return ScalarField(
        lambda t, x: value(x) - zeta * t,
        lambda t, x: grad(x),
        lambda t, x: hess(x),
        dt=lambda t, x: -zeta,
        parabolic=True,
    )


@dataclass(frozen=True)
class CutCylinder:
    rho0: float
    x_hat_d: float
    P: float
    Q: float
    tau: float | None = None

    def envelope(self, xd):
        """Smallest admissible radius at height xd on the curved side."""
        xd = np.asarray(xd, dtype=float)
        P, Q = self.P, self.Q
        disc = P * P + 2.0 * Q * P * xd - Q * Q * xd * xd
        return np.where(disc >= 0.0, (P + np.sqrt(np.maximum(disc, 0.0))) / Q, 0.0)

    def radius(self, xd):
        xd = np.asarray(xd, dtype=float)
        line = self.rho0 + (self.x_hat_d - self.rho0) * xd / self.x_hat_d
        return np.minimum(self.rho0, np.maximum(self.envelope(xd), line))


def build_cylinder(spec: PerturbationSpec, data: BoundaryMaxData, samples: int = 2001) -> CutCylinder:
    cyl = CutCylinder(data.rho0, spec.x_hat_d, -data.p / (8.0 * spec.m), spec.Q, data.tau)
    if spec.dim == 1:
        return cyl
    xd = np.linspace(0.0, spec.x_hat_d, samples)
    env = cyl.envelope(xd)
    worst = int(np.argmax(env))
    if env[worst] > data.rho0:
        raise CylinderConstructionError(
            f"side envelope {env[worst]:.6g} exceeds rho0 = {data.rho0:g} at x_d = {xd[worst]:.6g}; increase Q"
        )
    rho = cyl.radius(xd)
    jumps = np.abs(np.diff(rho))
    if jumps.max() > 10.0 * max(data.rho0, spec.x_hat_d) / samples + 1e-15:
        raise CylinderConstructionError("radius profile is not continuous on the sample")
    return cyl


# ------------------------------------------------------------- certificate


@dataclass(frozen=True)
class Sweep:
    name: str
    max_value: float
    bound: float
    passed: bool
    witness: tuple[float, ...]


@dataclass
class Certificate:
    passed: bool
    spec: PerturbationSpec
    cylinder: CutCylinder
    hopf: HopfResult
    sample_count: int
    max_Av: float
    Av_witness: tuple[float, ...]
    max_Au: float
    v_max: float
    argmax: tuple[float, ...]
    argmax_interior: bool
    fine_argmax: tuple[float, ...]
    cross_check_ok: bool
    sweeps: list[Sweep]
    failures: list[str] = field(default_factory=list)


def _axes(dim: int, parabolic: bool, n: int) -> tuple[int, int, int]:
    """Counts along (t, x_d, s) so that the total is n^3."""
    if dim == 1:
        return (n, n * n, 1) if parabolic else (1, n ** 3, 1)
    return (n, n, n) if parabolic else (1, n, n * n)


def _points(cyl: CutCylinder, ts, xds, ss) -> np.ndarray:
    """Rows (t, s, x_d, x') with x' = s * radius(x_d)."""
    T, XD, S = np.meshgrid(np.asarray(ts, float), np.asarray(xds, float), np.asarray(ss, float), indexing="ij")
    T, XD, S = T.ravel(), XD.ravel(), S.ravel()
    return np.column_stack([T, S, XD, S * cyl.radius(XD)])


def _coords(rows: np.ndarray, dim: int) -> np.ndarray:
    return rows[:, [3, 2]] if dim == 2 else rows[:, [2]]


def _witness(row, dim, parabolic) -> tuple[float, ...]:
    x = _coords(row[None, :], dim)[0]
    return tuple(float(z) for z in ((row[0], *x) if parabolic else x))


def evaluate_many(fn, pts: np.ndarray, t=None) -> np.ndarray:
    """Evaluate a point function on many points.

    The function is first tried on the coordinate columns at once (works for
    numpy-style expressions); anything that does not return one value per
    point falls back to a loop.
    """
    n = len(pts)
    cols = pts.T
    try:
        out = fn(cols) if t is None else fn(np.broadcast_to(np.asarray(t, float), (n,)), cols)
        out = np.asarray(out, dtype=float)
        if out.ndim == 0:
            out = np.full(n, float(out))
        if out.shape == (n,):
            return out
    except (TypeError, ValueError, IndexError):
        pass
    if t is None:
        return np.array([fn(x) for x in pts], dtype=float)
    tt = np.broadcast_to(np.asarray(t, float), (n,))
    return np.array([fn(ti, x) for ti, x in zip(tt, pts)], dtype=float)


def _v_values(u: ScalarField, w: ScalarField, rows: np.ndarray, dim: int) -> np.ndarray:
    pts = _coords(rows, dim)
    if u.parabolic:
        return evaluate_many(u.value, pts, rows[:, 0]) + evaluate_many(w.value, pts, rows[:, 0])
    return evaluate_many(u.value, pts) + evaluate_many(w.value, pts)


def _sum_field(u: ScalarField, w: ScalarField) -> ScalarField:
    if u.parabolic:
        return ScalarField(
            lambda t, x: u.value(t, x) + w.value(t, x),
            lambda t, x: np.asarray(u.grad(t, x)) + w.grad(t, x),
            lambda t, x: np.asarray(u.hess(t, x)) + w.hess(t, x),
            dt=lambda t, x: u.dt(t, x) + w.dt(t, x),
            parabolic=True,
        )
    return ScalarField(
        lambda x: u.value(x) + w.value(x),
        lambda x: np.asarray(u.grad(x)) + w.grad(x),
        lambda x: np.asarray(u.hess(x)) + w.hess(x),
    )


LADDER_LEVELS = 30


def _closed_axes(cyl, parabolic, counts, refine=1):
    """Closed-sample axes. Heights add a dyadic ladder toward the bottom face,
    where the maximum of v lives when the curvature of u dominates Q."""
    nt, nd, ns = (c * refine for c in counts)
    ts = np.linspace(0.0, cyl.tau, nt + 1) if parabolic else np.zeros(1)
    ladder = cyl.x_hat_d * 2.0 ** -np.arange(1, LADDER_LEVELS + 1)
    xds = np.unique(np.concatenate([np.linspace(0.0, cyl.x_hat_d, nd + 1), ladder]))
    ss = np.linspace(-1.0, 1.0, ns + 1) if counts[2] > 1 else np.zeros(1)
    return ts, xds, ss


def _cell(levels: np.ndarray, value: float) -> float:
    """Largest gap between ``value`` and its neighbours in the sorted ``levels``."""
    if len(levels) < 2:
        return 0.0
    i = int(np.searchsorted(levels, value))
    i = min(max(i, 0), len(levels) - 1)
    gaps = [abs(levels[j] - levels[j - 1]) for j in (i, i + 1) if 0 < j < len(levels)]
    return max(gaps)


def certify(
    spec: PerturbationSpec,
    data: BoundaryMaxData,
    coeffs: CoefficientField,
    u_oracle: ScalarField,
    grid_density: int = 10,
    cylinder: CutCylinder | None = None,
) -> Certificate:
    """Sample V and check strict subharmonicity of v and an interior maximum above r."""
    hopf = hopf_check(u_oracle, np.zeros(spec.dim)).require()
    dim, parabolic = spec.dim, spec.mode == PARABOLIC
    cyl = cylinder or build_cylinder(spec, data)
    w = build_w(spec, data)
    v_field = _sum_field(u_oracle, w)
    counts = _axes(dim, parabolic, grid_density)
    failures: list[str] = []

    # (i) strict subharmonicity on open V (and t in (0, tau) when parabolic)
    nt, nd, ns = counts
    ts = cyl.tau * (np.arange(nt) + 0.5) / nt if parabolic else np.zeros(1)
    xds = cyl.x_hat_d * (np.arange(nd) + 0.5) / nd
    ss = -1.0 + 2.0 * (np.arange(ns) + 0.5) / ns if dim == 2 else np.zeros(1)
    inner = _points(cyl, ts, xds, ss)
    pts = _coords(inner, dim)
    Av = np.empty(len(inner))
    Au = np.empty(len(inner))
    for i, (row, x) in enumerate(zip(inner, pts)):
        t = row[0] if parabolic else None
        Av[i] = apply_operator(coeffs, v_field, x, t)
        Au[i] = apply_operator(coeffs, u_oracle, x, t)
    k = int(np.argmax(Av))
    Av_witness = _witness(inner[k], dim, parabolic)
    if not Av[k] < 0:
        failures.append(f"A(u+w) = {Av[k]:.6g} >= 0 at {Av_witness}")

    # (ii) argmax over the closed sample, cross-checked on a 10x finer one
    coarse_axes = _closed_axes(cyl, parabolic, counts)

    def argmax_over(axes):
        rows = _points(cyl, *axes)
        vals = _v_values(u_oracle, w, rows, dim)
        j = int(np.argmax(vals))
        return rows[j], float(vals[j])

    best, vmax = argmax_over(coarse_axes)
    fine, _ = argmax_over(_closed_axes(cyl, parabolic, counts, 10))
    cross_ok = all(
        abs(fine[col] - best[col]) <= _cell(levels, best[col]) + 1e-15
        for col, levels in ((0, coarse_axes[0]), (2, coarse_axes[1]), (1, coarse_axes[2]))
    )
    interior = 0.0 < best[2] < cyl.x_hat_d and abs(best[1]) < 1.0
    if parabolic:
        interior = interior and best[0] < cyl.tau
    argmax = _witness(best, dim, parabolic)
    if not interior:
        failures.append(f"maximum of v sits on the boundary of V at {argmax}")
    if not vmax > data.r:
        failures.append(f"v_max = {vmax:.17g} does not exceed r = {data.r:.17g}")
    if not cross_ok:
        failures.append("fine-sample argmax differs from the coarse one by more than one cell")

    # (iii) boundary sweeps
    sweeps = _sweeps(cyl, u_oracle, w, data, spec, counts)
    failures += [f"{s.name} sweep: max v = {s.max_value:.6g} > {s.bound:.6g} at {s.witness}" for s in sweeps if not s.passed]

    return Certificate(
        passed=not failures,
        spec=spec,
        cylinder=cyl,
        hopf=hopf,
        sample_count=len(inner),
        max_Av=float(Av[k]),
        Av_witness=Av_witness,
        max_Au=float(Au.max()),
        v_max=vmax,
        argmax=argmax,
        argmax_interior=bool(interior),
        fine_argmax=_witness(fine, dim, parabolic),
        cross_check_ok=bool(cross_ok),
        sweeps=sweeps,
        failures=failures,
    )


def _sweeps(cyl, u, w, data, spec, counts) -> list[Sweep]:
    dim, parabolic = spec.dim, spec.mode == PARABOLIC
    slack = 1e-12 * max(1.0, abs(data.r))
    ts = np.linspace(0.0, cyl.tau, 10 * counts[0] + 1)[1:-1] if parabolic else np.zeros(1)
    n = 10 * max(counts[1], counts[2])
    s = np.linspace(-1.0, 1.0, n + 1) if dim == 2 else np.zeros(1)
    xd_open = np.linspace(0.0, cyl.x_hat_d, n + 1)[1:-1]

    def sweep(name, rows, bound):
        vals = _v_values(u, w, rows, dim)
        j = int(np.argmax(vals))
        return Sweep(name, float(vals[j]), bound, bool(vals[j] <= bound), _witness(rows[j], dim, parabolic))

    out = [
        sweep("bottom", _points(cyl, ts, [0.0], s), data.r + slack),
        sweep("top", _points(cyl, ts, [cyl.x_hat_d], s), data.r + slack),
    ]
    if dim == 2:
        out.append(sweep("side", _points(cyl, ts, xd_open, [-1.0, 1.0]), data.r + slack))
    if parabolic:
        face = _points(cyl, [cyl.tau], np.linspace(0.0, cyl.x_hat_d, n + 1), s)
        out.append(sweep("temporal", face, data.r - spec.zeta * cyl.tau / 4.0 + 1e-12))
    return out


def aw_upper_bound(spec: PerturbationSpec, data: BoundaryMaxData, x) -> float:
    """KQ|x'|x_d + (K + 2 b0) Q x_d - (b0/4)(eta - p), the bound Aw must respect."""
    x = np.asarray(x, dtype=float)
    xp = float(np.linalg.norm(x[:-1]))
    xd = float(x[-1])
    return data.K * spec.Q * xp * xd + (data.K + 2 * data.b0) * spec.Q * xd - data.b0 / 4 * (spec.eta - data.p)
