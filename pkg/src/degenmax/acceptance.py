"""The acceptance battery: numerically checkable consequences of the theory.

Each criterion is a function of a seed returning an :class:`Outcome`. Runtime is
measured by the runner but kept out of the outcome so reports stay
byte-identical between runs.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import coefficients
from .coefficient_transform import (
    build_tangential_killing_map,
    compare_methods,
    transform_coefficients,
    transformed_derivatives,
    verify_transform,
)
from .fd_solver import (
    SingularSystemError,
    assemble_elliptic,
    check_m_matrix,
    convergence_study,
    solve_linear,
)
from .obstacle import ObstacleNonConvergence, ObstacleProblem, comparison_check, solve_obstacle_elliptic
from .operator_core import (
    CoefficientField,
    ScalarField,
    SpatialDomain,
    apply_operator,
    check_second_derivative_vanishing,
    classify_boundary,
    make_grid,
)
from .perturbation import (
    ELLIPTIC,
    PARABOLIC,
    BoundaryMaxData,
    ConstantsSelectionError,
    certify,
    hopf_check,
    select_constants,
)
from .special_functions import (
    HypergeometricParams,
    kummer_M,
    kummer_M_derivative,
    kummer_M_second_derivative,
    pochhammer,
    tricomi_U,
)


@dataclass
class Outcome:
    passed: bool
    metrics: dict = field(default_factory=dict)
    detail: str = ""


@dataclass(frozen=True)
class Criterion:
    cid: int
    slug: str
    title: str
    budget: float  # seconds
    run: Callable[[int], Outcome]


@dataclass
class CriterionResult:
    criterion: Criterion
    outcome: Outcome
    seconds: float

    @property
    def passed(self) -> bool:
        return self.outcome.passed

    @property
    def within_budget(self) -> bool:
        return self.seconds <= self.criterion.budget


def _rng(seed: int, cid: int) -> np.random.Generator:
    return np.random.default_rng([seed, cid])


# ------------------------------------------------------------------ 1. ODE residual


def ode_residual(seed: int) -> Outcome:
    worst, where = 0.0, None
    for a, b in ((1.0, 1.0), (1.0, 2.0), (0.5, 1.5), (2.0, 3.0)):
        p = HypergeometricParams(a, b)
        for k in range(1, 21):
            x = 0.1 * k
            res = abs(-x * kummer_M_second_derivative(p, x) - (b - x) * kummer_M_derivative(p, x) + a * kummer_M(p, x))
            if res > worst:
                worst, where = res, (a, b, x)
    return Outcome(worst < 1e-7, {"max_residual": worst, "worst_at": list(where)})


# ------------------------------------------------------------------ 2. small-x asymptotics


LADDER = (1e-2, 1e-3, 1e-4)


def _richardson(values, q: float) -> float:
    """Extrapolate c(x) = C + k x^q to x = 0 from the two smallest ladder points."""
    r = (LADDER[-2] / LADDER[-1]) ** q
    return (r * values[-1] - values[-2]) / (r - 1.0)


def _asymptotic_branches():
    """(label, a, b, normalized c(x), stated leading coefficient, remainder order)."""
    g = math.gamma
    out = []
    n, b = 2, 1.5
    out.append(("a=-n", -float(n), b, lambda x, a=-2.0, b=b: tricomi_U(HypergeometricParams(a, b), x),
                (-1) ** n * pochhammer(b, n), 1.0))
    n, b = 1, 2.5
    a = -n + b - 1
    out.append(("a=b-1-n", a, b, lambda x, a=a, b=b: tricomi_U(HypergeometricParams(a, b), x) * x ** (b - 1),
                (-1) ** n * pochhammer(2 - b, n), 1.0))
    a, b = 0.7, 2.5
    out.append(("b>2", a, b, lambda x, a=a, b=b: tricomi_U(HypergeometricParams(a, b), x) * x ** (b - 1),
                g(b - 1) / g(a), 1.0))
    a, b = 0.7, 1.5
    const = g(1 - b) / g(a - b + 1)
    out.append(("1<b<2", a, b,
                lambda x, a=a, b=b, c=const: (tricomi_U(HypergeometricParams(a, b), x) - c) * x ** (b - 1),
                g(b - 1) / g(a), 1.0))
    a, b = 0.7, 0.5
    out.append(("0<b<1", a, b, lambda x, a=a, b=b: tricomi_U(HypergeometricParams(a, b), x),
                g(1 - b) / g(a - b + 1), 1.0 - b))
    return out


def asymptotics(seed: int) -> Outcome:
    rows, ok = {}, True
    for label, a, b, fn, lead, q in _asymptotic_branches():
        vals = [fn(x) for x in LADDER]
        est = _richardson(vals, q)
        rel = abs(est - lead) / abs(lead)
        rows[label] = {"a": a, "b": b, "stated": lead, "extrapolated": est, "relative_error": rel}
        ok &= rel < 1e-3
    return Outcome(ok, rows)


# ------------------------------------------------------------------ 3-5. linear solves


def _interval_problem(coeffs, hi, cells):
    dom = SpatialDomain.interval(0.0, hi)
    grid = make_grid(dom, cells)
    return dom, grid, classify_boundary(dom, grid, coeffs)


def kummer_uniqueness(seed: int) -> Outcome:
    coeffs = coefficients.kummer(1.0, 1.0)
    _, grid, cls = _interval_problem(coeffs, 1.0, 128)
    rep = solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0, g=0.0))
    mx = float(np.abs(rep.solution).max())
    return Outcome(mx < 1e-10, {"max_abs_u": mx, "degenerate_nodes": len(cls.degenerate)})


def kummer_convergence(seed: int) -> Outcome:
    coeffs = coefficients.kummer(1.0, 1.0)
    p = HypergeometricParams(1.0, 1.0)
    edge = kummer_M(p, 1.0)

    def solve(cells):
        _, grid, cls = _interval_problem(coeffs, 1.0, cells)
        return grid, solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0, g=edge)).solution

    rep = convergence_study(solve, lambda x: kummer_M(p, x[0]), (32, 64, 128, 256))
    return Outcome(rep.rate >= 0.9, {"rate": rep.rate, "errors": list(rep.errors), "levels": list(rep.levels)})


def hypergeometric_uniqueness(seed: int) -> Outcome:
    coeffs = coefficients.hypergeometric(1.0, 1.0, 1.0)
    _, grid, cls = _interval_problem(coeffs, 1.0, 128)
    metrics = {"dirichlet_nodes": len(cls.nondegenerate)}
    try:
        rep = solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0))
    except SingularSystemError as exc:
        return Outcome(False, metrics, f"singular system: {exc}")
    metrics["max_abs_u"] = float(np.abs(rep.solution).max())
    _, g32, c32 = _interval_problem(coeffs, 1.0, 32)
    sign, logdet = np.linalg.slogdet(assemble_elliptic(coeffs, g32, c32, f=0.0).matrix.toarray())
    metrics["det_sign_32"] = float(sign)
    metrics["log_abs_det_32"] = float(logdet)
    ok = not cls.nondegenerate and metrics["max_abs_u"] < 1e-10 and sign != 0 and math.isfinite(logdet)
    return Outcome(ok, metrics)


# ------------------------------------------------------------------ 6. weak maximum principle


def _random_problem(rng, trial: int, c_floor: float):
    if trial % 2 == 0:
        coeffs = coefficients.kummer(c_floor + rng.uniform(0.0, 2.0), rng.uniform(0.5, 3.0))
        dom = SpatialDomain.interval(0.0, rng.uniform(0.5, 2.0))
        cells = int(rng.integers(16, 65))
    else:
        d1, d2 = rng.uniform(0.5, 2.0, 2)
        off = rng.uniform(-0.4, 0.4) * min(d1, d2)
        coeffs = coefficients.linear_in_distance(
            [[d1, off], [off, d2]], [rng.uniform(-1.0, 1.0), rng.uniform(0.2, 2.0)], c_floor + rng.uniform(0.0, 2.0)
        )
        dom = SpatialDomain.rectangle((0.0, 1.0), (0.0, 1.0))
        cells = int(rng.integers(8, 17))
    grid = make_grid(dom, cells)
    return coeffs, grid, classify_boundary(dom, grid, coeffs)


def weak_maximum(seed: int) -> Outcome:
    rng = _rng(seed, 6)
    worst_zero, worst_c0 = -math.inf, -math.inf
    bad_m, bad = [], []
    for trial in range(50):
        coeffs, grid, cls = _random_problem(rng, trial, 0.0)
        f = -rng.uniform(0.0, 1.0, grid.size)
        g = -rng.uniform(0.0, 1.0, grid.size)
        op = assemble_elliptic(coeffs, grid, cls, f=f, g=g)
        if not check_m_matrix(op).ok:
            bad_m.append(trial)
        u = solve_linear(op).solution
        worst_zero = max(worst_zero, float(u.max()))
        if u.max() > 1e-9:
            bad.append(trial)

        coeffs, grid, cls = _random_problem(rng, trial, 1.0)
        f = rng.uniform(-1.0, 1.0, grid.size)
        g = -rng.uniform(0.0, 1.0, grid.size)
        op = assemble_elliptic(coeffs, grid, cls, f=f, g=g)
        if not check_m_matrix(op).ok:
            bad_m.append(trial)
        u = solve_linear(op).solution
        S = float(op.f[~op.dirichlet].max())
        excess = float(u.max() - max(0.0, S))
        worst_c0 = max(worst_c0, excess)
        if excess > 1e-9:
            bad.append(trial)
    ok = not bad and not bad_m
    detail = "" if not bad_m else f"M-matrix property fails in trials {sorted(set(bad_m))}"
    return Outcome(
        ok,
        {
            "trials": 50,
            "max_u_with_nonpositive_data": worst_zero,
            "max_excess_over_sup_f": worst_c0,
            "m_matrix_failures": sorted(set(bad_m)),
            "violating_trials": sorted(set(bad)),
        },
        detail,
    )


# ------------------------------------------------------------------ 7-8. perturbation certificates


P_VALUE, R_VALUE = -1.0, 0.0


def _boundary_max_field(parabolic: bool) -> ScalarField:
    """u = r + p x_2 - x_1^2 - x_2^2 (minus t^2 when time-dependent)."""
    p, r = P_VALUE, R_VALUE

    def val(x):
        return r + p * x[1] - x[0] ** 2 - x[1] ** 2

    def grad(x):
        return np.array([-2.0 * x[0], p - 2.0 * x[1]])

    hess = np.diag([-2.0, -2.0])
    if not parabolic:
        return ScalarField(val, grad, lambda x: hess)
    return ScalarField(
        lambda t, x: val(x) - t * t, lambda t, x: grad(x), lambda t, x: hess, dt=lambda t, x: -2.0 * t, parabolic=True
    )


def _perturbation(mode: str) -> Outcome:
    parabolic = mode == PARABOLIC
    u = _boundary_max_field(parabolic)
    if parabolic:
        coeffs = CoefficientField(
            2, lambda t, x: x[1] * np.eye(2), lambda t, x: np.array([0.0, 1.0]), lambda t, x: 0.0, parabolic=True
        )
    else:
        coeffs = coefficients.linear_in_distance(1.0, [0.0, 1.0], 0.0)
    data = BoundaryMaxData(
        p=P_VALUE, r=R_VALUE, b0=1.0, K=1.0, Lambda0=0.0, ell=0.5, rho0=0.5, tau=0.1 if parabolic else None
    )
    origin = np.zeros(2)
    au0 = apply_operator(coeffs, u, origin, t=0.0 if parabolic else None)
    metrics = {"Au_at_boundary_point": au0}
    try:
        spec = select_constants(data, u, mode=mode)
    except ConstantsSelectionError as exc:
        return Outcome(False, metrics, f"constants selection failed: {exc}")
    cert = certify(spec, data, coeffs, u, grid_density=10)
    metrics.update(
        {
            "eta": spec.eta,
            "zeta": spec.zeta,
            "Q": spec.Q,
            "x_hat_d": spec.x_hat_d,
            "samples": cert.sample_count,
            "max_Av": cert.max_Av,
            "Av_witness": list(cert.Av_witness) if cert.Av_witness is not None else None,
            "v_max": cert.v_max,
            "argmax_interior": cert.argmax_interior,
            "cross_check_ok": cert.cross_check_ok,
            "sweeps": {s.name: s.passed for s in cert.sweeps},
        }
    )
    return Outcome(cert.passed, metrics, "; ".join(cert.failures))


def perturbation_elliptic(seed: int) -> Outcome:
    return _perturbation(ELLIPTIC)


def perturbation_parabolic(seed: int) -> Outcome:
    return _perturbation(PARABOLIC)


# ------------------------------------------------------------------ 9-10. coordinate change


def extended_kummer() -> CoefficientField:
    """Kummer operator in the normal variable with a boundary-varying tangential drift."""
    A0 = np.array([[1.0, 0.25], [0.25, 1.0]])

    def da(x):
        out = np.zeros((2, 2, 2))
        out[1] = A0
        return out

    return CoefficientField(
        dim=2,
        a=lambda x: x[1] * A0,
        b=lambda x: np.array([0.5 + 0.3 * np.sin(x[0]), 2.0 - x[1]]),
        c=lambda x: 1.0,
        da=da,
        name="extended-kummer",
        c_nonnegative=True,
    )


def _patch_points(rng, radius, count, margin=0.0):
    pts = []
    while len(pts) < count:
        z = rng.uniform(-radius, radius, 2)
        z[1] = abs(z[1])
        if np.linalg.norm(z) < radius - margin and z[1] > margin:
            pts.append(z)
    return pts


def coefficient_transform(seed: int) -> Outcome:
    coeffs = extended_kummer()
    phi = build_tangential_killing_map(coeffs)
    t_op = transform_coefficients(coeffs, phi, "analytic")
    rep = verify_transform(t_op, sample_count=100, seed=seed)
    rng = _rng(seed, 9)
    pts = [phi(z) for z in _patch_points(rng, phi.patch_radius, 50)]
    gap = compare_methods(coeffs, phi, pts)
    checks = {c.name: {"passed": c.passed, "max_error": c.max_error} for c in rep.checks}
    failing = [c.name for c in rep.checks if not c.passed]
    ok = rep.passed and gap < 1e-6
    return Outcome(
        ok,
        {"delta": phi.patch_radius, "checks": checks, "method_gap": gap},
        "" if ok else "failing: " + ", ".join(failing + ([] if gap < 1e-6 else ["method_gap"])),
    )


def _smooth_field(rng) -> ScalarField:
    w = rng.uniform(-2.0, 2.0, 2)
    ph = rng.uniform(0.0, 2 * np.pi)
    q = rng.uniform(-1.0, 1.0, 3)

    def value(x):
        return np.sin(w @ x + ph) + q[0] * x[0] ** 2 + q[1] * x[0] * x[1] + q[2] * x[1] ** 2

    def grad(x):
        c = np.cos(w @ x + ph)
        return c * w + np.array([2 * q[0] * x[0] + q[1] * x[1], q[1] * x[0] + 2 * q[2] * x[1]])

    def hess(x):
        return -np.sin(w @ x + ph) * np.outer(w, w) + np.array([[2 * q[0], q[1]], [q[1], 2 * q[2]]])

    return ScalarField(value, grad, hess)


def operator_equivariance(seed: int) -> Outcome:
    coeffs = extended_kummer()
    phi = build_tangential_killing_map(coeffs)
    new = transform_coefficients(coeffs, phi).coeffs
    rng = _rng(seed, 10)
    radius = phi.patch_radius
    worst, witness = 0.0, None
    for _ in range(3):
        u = _smooth_field(rng)
        # inside the ball where the cutoff is identically 1, away from the boundary
        for x in _patch_points(rng, radius, 100, margin=0.02 * radius):
            y = phi(x)
            v0, g, H = transformed_derivatives(u.value, phi, y)
            av = -np.sum(new.a_at(y) * H) - new.b_at(y) @ g + new.c_at(y) * v0
            err = abs(av - apply_operator(coeffs, u, x))
            if err > worst:
                worst, witness = err, [float(z) for z in x]
    return Outcome(worst < 1e-6, {"max_error": worst, "witness": witness, "functions": 3, "points_per_function": 100})


# ------------------------------------------------------------------ 11. obstacle comparison


def _obstacle_setup():
    coeffs = coefficients.linear_in_distance(1.0, [0.3, 1.0], 5.0)
    dom = SpatialDomain.rectangle((0.0, 1.0), (0.0, 1.0))
    grid = make_grid(dom, 16)
    cls = classify_boundary(dom, grid, coeffs)
    x, y = grid.nodes[:, 0], grid.nodes[:, 1]
    psi = 0.3 - ((x - 0.5) ** 2 + (y - 0.4) ** 2)
    return coeffs, grid, cls, psi


def obstacle_comparison(seed: int) -> Outcome:
    rng = _rng(seed, 11)
    coeffs, grid, cls, psi = _obstacle_setup()
    tol = 1e-8
    base_op = assemble_elliptic(coeffs, grid, cls, f=-1.0, g=0.2)
    base = solve_obstacle_elliptic(ObstacleProblem(base_op, psi), tol=tol)
    dmask = base_op.dirichlet
    worst_order, worst_repeat, bad = 0.0, 0.0, []
    try:
        for trial in range(20):
            g2 = np.where(dmask, 0.2 + rng.uniform(0.0, 0.2, grid.size), 0.0)
            op2 = assemble_elliptic(coeffs, grid, cls, f=-1.0, g=g2)
            prob2 = ObstacleProblem(op2, psi)
            from_psi = solve_obstacle_elliptic(prob2, tol=tol)
            order = comparison_check(base, from_psi, tol=tol)
            start = np.where(dmask, g2, g2[dmask].max())
            from_g = solve_obstacle_elliptic(prob2, tol=tol, u0=start)
            same = comparison_check(from_psi, from_g, tol=2 * tol, identical=True)
            worst_order = max(worst_order, order.max_violation)
            worst_repeat = max(worst_repeat, same.max_difference)
            if not (order.ok and same.ok):
                bad.append(trial)
    except ObstacleNonConvergence as exc:
        return Outcome(False, {"failed_trial": trial}, str(exc))
    return Outcome(
        not bad,
        {"trials": 20, "max_order_violation": worst_order, "max_restart_difference": worst_repeat, "failing_trials": bad},
    )


# ------------------------------------------------------------------ 12. Hopf


def hopf_fields():
    """Ten fields -alpha x_2 + beta x_2^2 - gamma x_1^2 for degenerate diffusions x_2 diag(l1, l2).

    beta l2 >= gamma l1 makes each field subharmonic; gamma > 0 and alpha > 0
    give a strict maximum at the origin relative to the upper half-plane.
    """
    out = []
    for k in range(10):
        lam = np.array([1.0 + 0.1 * k, 1.5 - 0.05 * k])
        alpha, gamma = 0.25 + 0.2 * k, 0.5 + 0.1 * (k % 4)
        beta = gamma * lam[0] / lam[1] + 0.1
        coeffs = coefficients.linear_in_distance(np.diag(lam), [0.0, 0.0], 0.0)
        u = ScalarField(
            lambda x, a=alpha, b=beta, g=gamma: -a * x[1] + b * x[1] ** 2 - g * x[0] ** 2,
            lambda x, a=alpha, b=beta, g=gamma: np.array([-2 * g * x[0], -a + 2 * b * x[1]]),
            lambda x, b=beta, g=gamma: np.diag([-2 * g, 2 * b]),
        )
        out.append((coeffs, u, alpha / beta))
    return out


def hopf(seed: int) -> Outcome:
    rng = _rng(seed, 12)
    derivs, ok = [], True
    for coeffs, u, reach in hopf_fields():
        radius = 0.5 * reach
        pts = _patch_points(rng, radius, 50)
        sub = max(apply_operator(coeffs, u, x) for x in pts)
        strict = max(u.value(x) for x in pts) < u.value(np.zeros(2))
        res = hopf_check(u, point=np.zeros(2), normal=np.array([0.0, 1.0]))
        derivs.append(res.derivative)
        ok &= sub <= 0 and strict and res.passed
    flat = ScalarField(lambda x: 1.0, lambda x: np.zeros(2), lambda x: np.zeros((2, 2)))
    flat_res = hopf_check(flat, point=np.zeros(2), normal=np.array([0.0, 1.0]))
    ok &= not flat_res.passed
    return Outcome(ok, {"normal_derivatives": derivs, "constant_field_rejected": not flat_res.passed})


# ------------------------------------------------------------------ 13. second-derivative diagnostic


def second_derivative_diagnostic(seed: int) -> Outcome:
    coeffs = coefficients.kummer(1.0, 2.0)
    _, _, cls = _interval_problem(coeffs, 1.0, 16)
    smooth = HypergeometricParams(1.0, 2.0)
    rough = HypergeometricParams(0.5, 0.5)
    theta = lambda s: s  # noqa: E731
    rep_m = check_second_derivative_vanishing(lambda p: kummer_M(smooth, p[0]), cls, theta, assume_divergent=True)
    rep_u = check_second_derivative_vanishing(lambda p: tricomi_U(rough, p[0]), cls, theta, assume_divergent=True)
    return Outcome(
        rep_m.all_decay and not rep_u.all_decay,
        {
            "M_ladder": list(rep_m.entries[0].values),
            "U_ladder": list(rep_u.entries[0].values),
            "M_decays": rep_m.all_decay,
            "U_decays": rep_u.all_decay,
        },
    )


# ------------------------------------------------------------------ registry and runner


def _determinism_placeholder(seed: int) -> Outcome:
    raise RuntimeError("determinism is checked by the runner")


CRITERIA: tuple[Criterion, ...] = (
    Criterion(1, "ode-residual", "Kummer ODE residual of M", 1.0, ode_residual),
    Criterion(2, "asymptotics", "small-x asymptotic branches of U", 1.0, asymptotics),
    Criterion(3, "kummer-uniqueness", "homogeneous Kummer problem has only the zero solution", 0.1, kummer_uniqueness),
    Criterion(4, "kummer-convergence", "first-order convergence to M(1,1,x)", 2.0, kummer_convergence),
    Criterion(5, "hypergeometric-uniqueness", "hypergeometric problem needs no boundary data", 1.0, hypergeometric_uniqueness),
    Criterion(6, "weak-max", "discrete weak maximum principle and M-matrix structure", 30.0, weak_maximum),
    Criterion(7, "perturbation-elliptic", "elliptic perturbation certificate", 10.0, perturbation_elliptic),
    Criterion(8, "perturbation-parabolic", "parabolic perturbation certificate", 10.0, perturbation_parabolic),
    Criterion(9, "transform", "tangential-drift killing map", 2.0, coefficient_transform),
    Criterion(10, "equivariance", "operator equivariance under the killing map", 2.0, operator_equivariance),
    Criterion(11, "obstacle-comparison", "obstacle comparison and uniqueness", 30.0, obstacle_comparison),
    Criterion(12, "hopf", "boundary-point lemma check", 1.0, hopf),
    Criterion(13, "second-derivative", "second-derivative vanishing diagnostic", 1.0, second_derivative_diagnostic),
    Criterion(14, "determinism", "identical seeds give identical reports", math.inf, _determinism_placeholder),
)

BY_ID = {c.cid: c for c in CRITERIA}
DETERMINISM = 14
SUITES = {
    "all": tuple(c.cid for c in CRITERIA),
    "fast": tuple(c.cid for c in CRITERIA if c.budget <= 2.0),
}


class SuiteSelectionError(ValueError):
    pass


def select(spec: str) -> tuple[int, ...]:
    """Suite name, or comma-separated criterion ids/slugs."""
    spec = (spec or "").strip()
    if not spec:
        raise SuiteSelectionError("empty suite selection")
    if spec in SUITES:
        return SUITES[spec]
    slugs = {c.slug: c.cid for c in CRITERIA}
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            raise SuiteSelectionError(f"empty entry in suite selection {spec!r}")
        if part.isdigit() and int(part) in BY_ID:
            out.append(int(part))
        elif part in slugs:
            out.append(slugs[part])
        else:
            raise SuiteSelectionError(f"unknown criterion {part!r}")
    return tuple(sorted(set(out)))


def thread_cap() -> int:
    """Worker count from DEGENMAX_THREADS; sequential by default so timings are not inflated by the GIL."""
    try:
        n = int(os.environ.get("DEGENMAX_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _timed(c: Criterion, seed: int) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        out = c.run(seed)
    except Exception as exc:  # a crashing criterion is a failing criterion
        out = Outcome(False, {}, f"{type(exc).__name__}: {exc}")
    return CriterionResult(c, out, time.perf_counter() - t0)


def run_criteria(ids, seed: int = 0, threads: int | None = None) -> list[CriterionResult]:
    crits = [BY_ID[i] for i in ids if i != DETERMINISM]
    workers = min(threads or thread_cap(), max(1, len(crits)))
    if workers == 1:
        return [_timed(c, seed) for c in crits]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: _timed(c, seed), crits))


def document(results: list[CriterionResult], seed: int) -> dict:
    """The report body: everything except wall-clock times."""
    return {
        "seed": seed,
        "criteria": [
            {
                "id": r.criterion.cid,
                "name": r.criterion.slug,
                "title": r.criterion.title,
                "passed": r.passed,
                "detail": r.outcome.detail,
                "metrics": r.outcome.metrics,
            }
            for r in results
        ],
        "passed": all(r.passed for r in results),
    }


def run_suite(ids, seed: int = 0, threads: int | None = None, dumps=None) -> list[CriterionResult]:
    """Run the selected criteria; the determinism criterion reruns the rest and compares serialized reports."""
    results = run_criteria(ids, seed, threads)
    if DETERMINISM in ids:
        from .report import dumps_json

        dumps = dumps or dumps_json
        t0 = time.perf_counter()
        first = dumps(document(results, seed))
        second = dumps(document(run_criteria(ids, seed, threads), seed))
        same = first == second
        out = Outcome(same, {"compared_bytes": len(first), "identical": same},
                      "" if same else "two runs with the same seed serialized differently")
        results.append(CriterionResult(BY_ID[DETERMINISM], out, time.perf_counter() - t0))
    return results
