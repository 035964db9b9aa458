"""Coordinate changes and the coefficients they induce.

For y = Phi(x) and v = u o Phi^{-1}, the operator Au = -tr(a D^2 u) - <b, Du> + cu
becomes Av = -tr(a~ D^2 v) - <b~, Dv> + c~ v with

    a~^{kl} = a^{ij} dy_k/dx_i dy_l/dx_j
    b~^k    = b^i dy_k/dx_i + a^{ij} d^2 y_k/dx_i dx_j   (+ dy_k/dt when time-coupled)
    c~      = c

all evaluated at x = Phi^{-1}(y). Two maps are provided: the shear that
flattens a graph boundary, and a map supported near the origin that removes
the tangential drift on the flat boundary {x_d = 0}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operator_core import BoundaryClassification, CoefficientField

Array = np.ndarray


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class Diffeomorphism:
    """A point map with its inverse and derivatives.

    ``jacobian`` returns J[k, i] = dy_k/dx_i. ``hessian`` (optional) returns
    H[k, i, j] = d^2 y_k / dx_i dx_j; when absent it is finite-differenced
    from the jacobian with step 1e-4 * ``diameter``. Time-coupled maps take
    ``(t, x)`` in every callable and provide ``dt`` = dy/dt.
    """

    dim: int
    forward: Callable
    inverse: Callable
    jacobian: Callable
    hessian: Callable | None = None
    time_coupled: bool = False
    dt: Callable | None = None
    diameter: float = 1.0
    patch_radius: float | None = None
    name: str = "map"

    def _args(self, x, t):
        x = np.asarray(x, dtype=float).reshape(self.dim)
        return ((0.0 if t is None else float(t)), x) if self.time_coupled else (x,)

    def __call__(self, x, t=None) -> Array:
        return np.asarray(self.forward(*self._args(x, t)), dtype=float).reshape(self.dim)

    def inv(self, y, t=None) -> Array:
        return np.asarray(self.inverse(*self._args(y, t)), dtype=float).reshape(self.dim)

    def jac(self, x, t=None) -> Array:
        return np.asarray(self.jacobian(*self._args(x, t)), dtype=float).reshape(self.dim, self.dim)

    @property
    def fd_step(self) -> float:
        return 1e-4 * self.diameter

    def hess(self, x, t=None) -> Array:
        if self.hessian is not None:
            return np.asarray(self.hessian(*self._args(x, t)), dtype=float).reshape(self.dim, self.dim, self.dim)
        h = self.fd_step
        x = np.asarray(x, dtype=float).reshape(self.dim)
        out = np.empty((self.dim, self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            out[:, :, j] = (self.jac(x + e, t) - self.jac(x - e, t)) / (2 * h)
        return 0.5 * (out + out.transpose(0, 2, 1))

    def time_derivative(self, x, t) -> Array:
        if not self.time_coupled:
            return np.zeros(self.dim)
        if self.dt is not None:
            return np.asarray(self.dt(float(t), np.asarray(x, dtype=float)), dtype=float).reshape(self.dim)
        h = self.fd_step
        return (self(x, t + h) - self(x, t - h)) / (2 * h)

    def compose(self, first: "Diffeomorphism") -> "Diffeomorphism":
        """The map x -> self(first(x))."""
        if first.dim != self.dim or first.time_coupled or self.time_coupled:
            raise TransformError("composition supports spatial maps of equal dimension")
        outer = self

        def jac(x):
            return outer.jac(first(x)) @ first.jac(x)

        def hess(x):
            y = first(x)
            J1, H1 = first.jac(x), first.hess(x)
            J2, H2 = outer.jac(y), outer.hess(y)
            return np.einsum("kmn,mi,nj->kij", H2, J1, J1) + np.einsum("km,mij->kij", J2, H1)

        return Diffeomorphism(
            dim=self.dim,
            forward=lambda x: outer(first(x)),
            inverse=lambda y: first.inv(outer.inv(y)),
            jacobian=jac,
            hessian=hess,
            diameter=max(self.diameter, first.diameter),
            name=f"{self.name} o {first.name}",
        )

    def roundtrip_error(self, points, t=None) -> float:
        return max(float(np.abs(self.inv(self(x, t), t) - x).max()) for x in points)


def identity_map(dim: int) -> Diffeomorphism:
    return Diffeomorphism(
        dim,
        forward=lambda x: x.copy(),
        inverse=lambda y: y.copy(),
        jacobian=lambda x: np.eye(dim),
        hessian=lambda x: np.zeros((dim, dim, dim)),
        name="identity",
    )


def rotation_map(angle: float) -> Diffeomorphism:
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return Diffeomorphism(
        2,
        forward=lambda x: R @ x,
        inverse=lambda y: R.T @ y,
        jacobian=lambda x: R,
        hessian=lambda x: np.zeros((2, 2, 2)),
        name="rotation",
    )


# ---------------------------------------------------------------- straighten


def _fd1(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def _fd2(f, x, h=1e-4):
    return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)


def straighten_graph_boundary(
    gamma: Callable[[float], float],
    gamma_prime: Callable[[float], float] | None = None,
    gamma_second: Callable[[float], float] | None = None,
    region: tuple[float, float] = (0.0, 1.0),
) -> Diffeomorphism:
    """The shear (x', x_d) -> (x', x_d - gamma(x')) for a 2D graph boundary."""
    dg = gamma_prime or (lambda s: _fd1(gamma, s))
    d2g = gamma_second or (lambda s: _fd2(gamma, s))

    def jac(x):
        return np.array([[1.0, 0.0], [-dg(x[0]), 1.0]])

    def hess(x):
        H = np.zeros((2, 2, 2))
        H[1, 0, 0] = -d2g(x[0])
        return H

    return Diffeomorphism(
        2,
        forward=lambda x: np.array([x[0], x[1] - gamma(x[0])]),
        inverse=lambda y: np.array([y[0], y[1] + gamma(y[0])]),
        jacobian=jac,
        hessian=hess,
        diameter=float(region[1] - region[0]),
        name="straighten",
    )


# ----------------------------------------------------------- drift killing


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (6 * u ** 2 - 15 * u + 10)


def cutoff(s):
    """1 on [0, 1], 0 on [2, inf), C^2 in between."""
    return 1.0 - smoothstep(np.asarray(s, dtype=float) - 1.0)


def _cutoff_scalar(s: float) -> float:
    if s <= 1.0:
        return 1.0
    if s >= 2.0:
        return 0.0
    u = s - 1.0
    return 1.0 - u ** 3 * (6 * u ** 2 - 15 * u + 10)


def cutoff_prime(s):
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return -30.0 * u ** 2 * (1.0 - u) ** 2


@dataclass(frozen=True)
class TangentialRatio:
    """xi^k(x') = -b^k(x', 0) / b^d(x', 0) for k < d, with derivatives in x'.

    Derivatives are central differences of b on the boundary.
    """

    coeffs: CoefficientField
    h1: float = 1e-5
    h2: float = 1e-4

    def _b(self, xp, t):
        x = np.zeros(len(xp) + 1)
        x[:-1] = xp
        return self.coeffs.b_at(x, t)

    def value(self, xp, t=None) -> Array:
        b = self._b(xp, t)
        return -b[:-1] / b[-1]

    def _diff(self, f, xp, h):
        d = len(xp)
        out = []
        for m in range(d):
            e = np.zeros(d)
            e[m] = h
            out.append((f(xp + e) - f(xp - e)) / (2 * h))
        return np.array(out).T  # [k, m]

    def grad(self, xp, t=None) -> Array:
        return self._diff(lambda z: self.value(z, t), np.asarray(xp, float), self.h1)

    def hess(self, xp, t=None) -> Array:
        xp = np.asarray(xp, float)
        d = len(xp)
        h = self.h2
        out = np.empty((d, d, d))
        for m in range(d):
            for n in range(d):
                em, en = np.zeros(d), np.zeros(d)
                em[m], en[n] = h, h
                out[:, m, n] = (
                    self.value(xp + em + en, t) - self.value(xp + em - en, t)
                    - self.value(xp - em + en, t) + self.value(xp - em - en, t)
                ) / (4 * h * h)
        return out  # [k, m, n]

    def dt(self, xp, t, h=1e-5) -> Array:
        return (self.value(xp, t + h) - self.value(xp, t - h)) / (2 * h)


def default_delta(coeffs: CoefficientField, t=None, search_radius: float = 1.0, samples: int = 64) -> float:
    """Half the smallest distance from the origin at which b^d falls below b^d(0)/2."""
    d = coeffs.dim
    b0 = coeffs.b_at(np.zeros(d), t)[-1]
    if not b0 > 0:
        raise TransformError(f"b^d(0) = {b0:g} must be positive")
    radii = np.linspace(0.0, search_radius, samples + 1)[1:]
    angles = np.linspace(0.0, np.pi, 17) if d == 2 else [None]
    for r in radii:
        for a in angles:
            x = np.array([r * np.cos(a), r * np.sin(a)]) if d == 2 else np.array([r])
            if coeffs.b_at(x, t)[-1] < b0 / 2:
                return r / 2
    return search_radius / 2


def build_tangential_killing_map(
    coeffs: CoefficientField,
    delta: float | None = None,
    t0: float = 0.0,
    parabolic: bool | None = None,
) -> Diffeomorphism:
    """y = x + psi(|x| / delta) xi(x') x_d near the origin of the flat boundary.

    Parabolic coefficients give the time-coupled map with the cutoff
    psi(|x| / delta) psi(|t - t0| / delta) and xi evaluated at time t.
    """
    d = coeffs.dim
    if d < 2:
        raise TransformError("a tangential direction needs d >= 2")
    parabolic = coeffs.parabolic if parabolic is None else parabolic
    delta = default_delta(coeffs, t0 if parabolic else None) if delta is None else float(delta)
    if not delta > 0:
        raise TransformError("delta must be positive")
    xi = TangentialRatio(coeffs)

    def ball_ok():
        rng = np.random.default_rng(0)
        for _ in range(200):
            z = rng.normal(size=d)
            z = 2 * delta * rng.random() ** (1 / d) * z / np.linalg.norm(z)
            z[-1] = abs(z[-1])
            tt = t0 if parabolic else None
            if not coeffs.b_at(z, tt)[-1] > 0:
                raise TransformError(f"b^d <= 0 at {tuple(z)} inside the working ball")
            if np.linalg.det(jac(tt, z)) <= 0:
                raise TransformError(f"jacobian singular near {tuple(z)}; choose a smaller delta")

    def psi(t, x):
        out = _cutoff_scalar(float(np.sqrt(x @ x)) / delta)
        if parabolic:
            out *= _cutoff_scalar(abs(t - t0) / delta)
        return out

    def dpsi(t, x):
        r = np.linalg.norm(x)
        g = np.zeros(d) if r == 0 else cutoff_prime(r / delta) * x / (delta * r)
        if parabolic:
            g = g * cutoff(abs(t - t0) / delta)
        return g

    def fwd(t, x):
        tt = t if parabolic else None
        y = x.copy()
        y[:-1] += psi(t, x) * xi.value(x[:-1], tt) * x[-1]
        return y

    def jac(t, x):
        tt = t if parabolic else None
        xd = x[-1]
        s = xi.value(x[:-1], tt)
        J = np.eye(d)
        J[:-1, :] += np.outer(s, dpsi(t, x)) * xd
        J[:-1, :-1] += psi(t, x) * xi.grad(x[:-1], tt) * xd
        J[:-1, -1] += psi(t, x) * s
        return J

    chord = {"at": None, "t": None, "Jinv": None}

    def inv(t, y):
        # x_d = y_d exactly, so only the tangential block is solved. Chord
        # iteration: the map is a small perturbation of the identity, so a frozen
        # jacobian converges fast; refresh it only when progress stalls.
        x = y.copy()
        x[:-1] -= psi(t, y) * xi.value(y[:-1], t if parabolic else None) * y[-1]
        # difference stencils call this at clusters of nearby points; a jacobian
        # from a neighbour is as good a chord as a fresh one
        near = chord["at"] is not None and chord["t"] == t and np.abs(chord["at"] - x).max() < 1e-2 * delta
        Jinv = chord["Jinv"] if near else np.linalg.inv(jac(t, x)[:-1, :-1])
        chord.update(at=x.copy(), t=t, Jinv=Jinv)
        tol = 1e-15 * max(1.0, float(np.abs(y).max()))
        prev = np.inf
        for _ in range(100):
            r = fwd(t, x)[:-1] - y[:-1]
            err = float(np.abs(r).max())
            if err < tol:
                break
            if err > 0.5 * prev:
                Jinv = np.linalg.inv(jac(t, x)[:-1, :-1])
            prev = err
            x[:-1] -= Jinv @ r
        return x

    def dt(t, x):
        h = 1e-5
        return (fwd(t + h, x) - fwd(t - h, x)) / (2 * h)

    ball_ok()
    if parabolic:
        return Diffeomorphism(d, fwd, inv, jac, time_coupled=True, dt=dt,
                              diameter=4 * delta, patch_radius=delta, name="kill-tangential")
    return Diffeomorphism(
        d,
        forward=lambda x: fwd(0.0, x),
        inverse=lambda y: inv(0.0, y),
        jacobian=lambda x: jac(0.0, x),
        diameter=4 * delta,
        patch_radius=delta,
        name="kill-tangential",
    )


# ------------------------------------------------------------- transform


@dataclass(frozen=True)
class TransformedOperator:
    coeffs: CoefficientField
    source: CoefficientField
    phi: Diffeomorphism
    method: str


def _chain_rule(coeffs, phi, y, t):
    x = phi.inv(y, t)
    J = phi.jac(x, t)
    H = phi.hess(x, t)
    a = coeffs.a_at(x, t)
    b = coeffs.b_at(x, t)
    at = J @ a @ J.T
    bt = J @ b + np.einsum("ij,kij->k", a, H)
    if phi.time_coupled:
        bt = bt + phi.time_derivative(x, t)
    return 0.5 * (at + at.T), bt, coeffs.c_at(x, t)


def _killing_formulas(coeffs, phi, y, t):
    """Component formulas for the drift-killing map, valid where the cutoff is 1."""
    x = phi.inv(y, t)
    radius = phi.patch_radius
    if radius is None or np.linalg.norm(x) > radius * (1 + 1e-12):
        raise TransformError("closed-form coefficients hold only inside the patch where the cutoff equals 1")
    tt = t if coeffs.parabolic else None
    xi = TangentialRatio(coeffs)
    d = coeffs.dim
    xp, xd = x[:-1], x[-1]
    s = xi.value(xp, tt)          # xi^k
    g = xi.grad(xp, tt)           # xi^k_m
    hh = xi.hess(xp, tt)          # xi^k_mn
    a = coeffs.a_at(x, t)
    b = coeffs.b_at(x, t)
    T = slice(0, d - 1)
    at = np.empty((d, d))
    aTT, aTd, add = a[T, T], a[T, -1], a[-1, -1]
    at[T, T] = (
        aTT
        + xd * aTT @ g.T
        + xd * g @ aTT
        + xd * xd * g @ aTT @ g.T
        + np.outer(s, aTd)
        + np.outer(aTd, s)
        + xd * (np.outer(s, g @ aTd) + np.outer(g @ aTd, s))
        + add * np.outer(s, s)
    )
    at[T, -1] = aTd + xd * g @ aTd + add * s
    at[-1, T] = at[T, -1]
    at[-1, -1] = add
    bt = np.empty(d)
    bt[T] = (
        b[T]
        + xd * g @ b[T]
        + b[-1] * s
        + xd * np.einsum("mn,kmn->k", aTT, hh)
        + 2.0 * g @ aTd
    )
    bt[-1] = b[-1]
    if phi.time_coupled:
        bt[T] += xi.dt(xp, t) * xd
    return at, bt, coeffs.c_at(x, t)


METHODS = {"chain_rule_numeric": _chain_rule, "analytic": _killing_formulas}


def transform_coefficients(coeffs: CoefficientField, phi: Diffeomorphism, method: str = "chain_rule_numeric") -> TransformedOperator:
    """Coefficients of the operator in the new coordinates, as functions of y."""
    try:
        rule = METHODS[method]
    except KeyError:
        raise TransformError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    if method == "analytic" and not phi.name.startswith("kill-tangential"):
        raise TransformError("the analytic method is specific to the drift-killing map")
    if phi.dim != coeffs.dim:
        raise TransformError("map and coefficients disagree on the dimension")

    last: dict = {}

    def evaluate(y, t):
        # a~, b~ and c~ come from one evaluation; callers usually ask for all three
        key = (t, np.asarray(y, dtype=float).tobytes())
        if last.get("key") != key:
            last["key"], last["value"] = key, rule(coeffs, phi, y, t)
        return last["value"]

    def part(i):
        if coeffs.parabolic:
            return lambda t, y: evaluate(y, t)[i]
        return lambda y: evaluate(y, None)[i]

    new = CoefficientField(
        dim=coeffs.dim,
        a=part(0),
        b=part(1),
        c=part(2),
        parabolic=coeffs.parabolic,
        name=f"{coeffs.name} under {phi.name}",
        c_nonnegative=coeffs.c_nonnegative,
    )
    return TransformedOperator(new, coeffs, phi, method)


# ---------------------------------------------------------------- verify


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    max_error: float
    witness: tuple[float, ...] | None


@dataclass
class TransformReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _worst(name, errors, points, tol, strict=True):
    errors = np.asarray(errors, dtype=float)
    k = int(np.argmax(errors))
    ok = bool(errors[k] < tol) if strict else bool(errors[k] <= tol)
    return Check(name, ok, float(errors[k]), None if ok else tuple(float(z) for z in points[k]))


def verify_transform(
    t_op: TransformedOperator,
    classification: BoundaryClassification | None = None,
    sample_count: int = 100,
    seed: int = 0,
    t: float | None = None,
    boundary_tol: float = 1e-10,
    drift_tol: float = 1e-8,
    eig_tol: float = 1e-8,
) -> TransformReport:
    """Sampled checks on the flat boundary patch and at interior points.

    The boundary patch is {|y'| <= patch radius, y_d = 0} and interior samples
    are images of points in the half-ball of that radius; when a
    classification is supplied its degenerate nodes inside the patch are
    added to the random boundary samples.
    """
    phi, new, old = t_op.phi, t_op.coeffs, t_op.source
    d = new.dim
    radius = phi.patch_radius or 0.5 * phi.diameter
    rng = np.random.default_rng(seed)
    bpts = [np.append(rng.uniform(-radius, radius, d - 1), 0.0) for _ in range(sample_count)]
    if classification is not None:
        for node in classification.degenerate:
            x = np.asarray(classification.grid.nodes[node], dtype=float)
            if len(x) == d and abs(x[-1]) < 1e-14 and np.linalg.norm(x) <= radius:
                bpts.append(x)
    ipts = []
    while len(ipts) < sample_count:
        z = rng.uniform(-radius, radius, d)
        z[-1] = abs(z[-1])
        if 0 < np.linalg.norm(z) <= radius and z[-1] > 0:
            ipts.append(phi(z, t))

    report = TransformReport()
    a_err, bpar, bperp_pos, bd_diff = [], [], [], []
    for y in bpts:
        at, bt = new.a_at(y, t), new.b_at(y, t)
        x = phi.inv(y, t)
        a_err.append(np.abs(at).max())
        bpar.append(np.abs(bt[:-1]).max() if d > 1 else 0.0)
        bperp_pos.append(-bt[-1])
        bd_diff.append(abs(bt[-1] - old.b_at(x, t)[-1]))
    report.checks.append(_worst("a_tilde_vanishes_on_boundary", a_err, bpts, boundary_tol))
    report.checks.append(_worst("b_tilde_normal_positive", bperp_pos, bpts, 0.0))
    report.checks.append(_worst("b_tilde_tangential_vanishes", bpar, bpts, drift_tol))
    report.checks.append(_worst("b_tilde_normal_unchanged", bd_diff, bpts, 0.0, strict=False))

    eig_err, c_err, sym_err = [], [], []
    for y in ipts:
        x = phi.inv(y, t)
        at = new.a_at(y, t)
        a = old.a_at(x, t)
        ev_new = np.sort(np.linalg.eigvalsh(at))
        ev_old = np.sort(np.linalg.eigvalsh(a))
        scale = max(np.abs(ev_old).max(), np.finfo(float).tiny)
        eig_err.append(np.abs(ev_new - ev_old).max() / scale)
        c_err.append(abs(new.c_at(y, t) - old.c_at(x, t)))
        sym_err.append(np.abs(at - at.T).max())
    report.checks.append(_worst("eigenvalues_preserved", eig_err, ipts, eig_tol))
    report.checks.append(_worst("c_tilde_preserved", c_err, ipts, 0.0, strict=False))
    report.checks.append(_worst("a_tilde_symmetric", sym_err, ipts, 0.0, strict=False))
    return report


def compare_methods(coeffs: CoefficientField, phi: Diffeomorphism, points, t=None) -> float:
    """Largest entrywise gap between the closed-form and chain-rule coefficients."""
    one = transform_coefficients(coeffs, phi, "analytic").coeffs
    two = transform_coefficients(coeffs, phi, "chain_rule_numeric").coeffs
    gap = 0.0
    for y in points:
        gap = max(
            gap,
            float(np.abs(one.a_at(y, t) - two.a_at(y, t)).max()),
            float(np.abs(one.b_at(y, t) - two.b_at(y, t)).max()),
            abs(one.c_at(y, t) - two.c_at(y, t)),
        )
    return gap


def transformed_derivatives(u_value: Callable, phi: Diffeomorphism, y, t=None, h: float | None = None):
    """v = u o Phi^{-1} with gradient and hessian at y by fourth-order central differences."""
    d = phi.dim
    h = 1e-3 * phi.diameter if h is None else h
    y = np.asarray(y, dtype=float)

    def v(z):
        return float(u_value(phi.inv(z, t)))

    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    offs = np.array([-2.0, -1.0, 1.0, 2.0])
    E = np.eye(d) * h
    axis = np.array([[v(y + o * E[i]) for o in offs] for i in range(d)])
    grad = axis @ w / h
    H = np.empty((d, d))
    v0 = v(y)
    w2 = np.array([-1.0, 16.0, 16.0, -1.0]) / 12.0
    for i in range(d):
        H[i, i] = (axis[i] @ w2 - 2.5 * v0) / (h * h)
        for j in range(i + 1, d):
            # Richardson combination of the 4-point cross stencil at h and 2h
            s1 = v(y + E[i] + E[j]) - v(y + E[i] - E[j]) - v(y - E[i] + E[j]) + v(y - E[i] - E[j])
            s2 = (v(y + 2 * E[i] + 2 * E[j]) - v(y + 2 * E[i] - 2 * E[j])
                  - v(y - 2 * E[i] + 2 * E[j]) + v(y - 2 * E[i] - 2 * E[j]))
            H[i, j] = H[j, i] = (16.0 * s1 - s2) / (48.0 * h * h)
    return v0, grad, H


def verify_straightening(
    t_op: TransformedOperator,
    gamma: Callable[[float], float],
    region: tuple[float, float],
    sample_count: int = 100,
    seed: int = 0,
    degenerate: bool = False,
    tol: float = 1e-10,
) -> TransformReport:
    """Checks for the graph-flattening shear.

    The graph {x_2 = gamma(x_1)} must land on {y_2 = 0}, the map must invert to
    round-off, and c and the symmetry of a must carry over. With
    ``degenerate`` the operator is expected to degenerate on the graph, so
    a~ must vanish there and b~ must point into {y_2 > 0}.
    """
    phi, new, old = t_op.phi, t_op.coeffs, t_op.source
    rng = np.random.default_rng(seed)
    xs = rng.uniform(region[0], region[1], sample_count)
    on_graph = [np.array([s, gamma(s)]) for s in xs]
    above = [p + np.array([0.0, rng.uniform(0.0, 0.5 * phi.diameter)]) for p in on_graph]
    report = TransformReport()
    report.checks.append(_worst("graph_maps_to_flat_boundary", [abs(phi(p)[1]) for p in on_graph], on_graph, tol))
    report.checks.append(_worst("roundtrip", [np.abs(phi.inv(phi(p)) - p).max() for p in above], above, tol))
    ys = [phi(p) for p in above]
    report.checks.append(_worst("c_tilde_preserved", [abs(new.c_at(y) - old.c_at(phi.inv(y))) for y in ys], ys, 0.0,
                                strict=False))
    report.checks.append(_worst("a_tilde_symmetric", [np.abs(new.a_at(y) - new.a_at(y).T).max() for y in ys], ys, 0.0,
                                strict=False))
    if degenerate:
        flat = [phi(p) for p in on_graph]
        report.checks.append(_worst("a_tilde_vanishes_on_boundary", [np.abs(new.a_at(y)).max() for y in flat], flat, tol))
        report.checks.append(_worst("b_tilde_normal_positive", [-new.b_at(y)[-1] for y in flat], flat, 0.0))
    return report
