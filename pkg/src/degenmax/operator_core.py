"""Domains, grids, coefficient fields and boundary diagnostics.

The operator acting on u is

    Au = -tr(a D^2 u) - <b, Du> + c u,

and its parabolic twin subtracts u_t. A boundary node is degenerate when the
diffusion matrix a tends to zero as the node is approached from inside; only
the remaining (non-degenerate) boundary nodes carry Dirichlet data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class ClassificationError(RuntimeError):
    pass


class CoefficientError(ValueError):
    pass


# ---------------------------------------------------------------- domains


@dataclass(frozen=True)
class SpatialDomain:
    """A bounded interval, rectangle, or the part of a rectangle above a graph."""

    kind: str
    bounds: tuple[tuple[float, float], ...]
    gamma: Callable[[float], float] | None = None
    gamma_prime: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle", "half_graph"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if len(self.bounds) != (1 if self.kind == "interval" else 2):
            raise ValueError(f"{self.kind} needs {1 if self.kind == 'interval' else 2} axis bounds")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"empty axis range ({lo}, {hi})")
        if self.kind == "half_graph":
            if self.gamma is None:
                raise ValueError("half_graph domain needs gamma")
            xs = np.linspace(*self.bounds[0], 257)
            g = np.array([self.gamma(x) for x in xs])
            if not np.all(np.isfinite(g)) or np.any(g >= self.bounds[1][1]):
                raise ValueError("gamma must be finite and stay below the top of the rectangle")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "SpatialDomain":
        return cls("interval", ((float(lo), float(hi)),))

    @classmethod
    def rectangle(cls, xb: Sequence[float], yb: Sequence[float]) -> "SpatialDomain":
        return cls("rectangle", ((float(xb[0]), float(xb[1])), (float(yb[0]), float(yb[1]))))

    @classmethod
    def half_graph(cls, gamma, xb, yb, gamma_prime=None) -> "SpatialDomain":
        return cls(
            "half_graph",
            ((float(xb[0]), float(xb[1])), (float(yb[0]), float(yb[1]))),
            gamma,
            gamma_prime,
        )

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def lower_y(self, x: float) -> float:
        if self.kind == "half_graph":
            return max(self.bounds[1][0], float(self.gamma(x)))
        return self.bounds[1][0]

    def contains(self, point, tol: float = 1e-12) -> bool:
        """Closed-domain membership."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        for k, (lo, hi) in enumerate(self.bounds):
            if p[k] < lo - tol or p[k] > hi + tol:
                return False
        if self.kind == "half_graph" and p[1] < float(self.gamma(p[0])) - tol:
            return False
        return True

    def diameter(self) -> float:
        return float(math.sqrt(sum((hi - lo) ** 2 for lo, hi in self.bounds)))


@dataclass(frozen=True)
class Grid:
    """Nodes of a tensor lattice (possibly clipped by a graph).

    ``multi_index`` holds the lattice position of every node; ``normals`` is the
    inward unit normal at boundary nodes and zero elsewhere.
    """

    nodes: Array
    h: tuple[float, ...]
    shape: tuple[int, ...]
    multi_index: Array
    boundary: Array
    normals: Array
    side_normals: tuple[tuple[tuple[float, ...], ...], ...] = ()
    _lookup: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def node_id(self, idx: Sequence[int]) -> int:
        return self._lookup.get(tuple(int(i) for i in idx), -1)

    def neighbor(self, node: int, axis: int, step: int) -> int:
        idx = list(self.multi_index[node])
        idx[axis] += step
        return self.node_id(idx)

    @property
    def boundary_nodes(self) -> Array:
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self) -> Array:
        return np.flatnonzero(~self.boundary)


def _unit(v) -> tuple[float, ...]:
    v = np.asarray(v, dtype=float)
    return tuple(float(x) for x in v / np.linalg.norm(v))


def make_grid(domain: SpatialDomain, cells: int | Sequence[int]) -> Grid:
    """Uniform grid with ``cells`` intervals per axis (``cells + 1`` nodes)."""
    d = domain.dim
    ncell = (int(cells),) * d if np.isscalar(cells) else tuple(int(c) for c in cells)
    if len(ncell) != d or min(ncell) < 2:
        raise ValueError("need at least 2 cells per axis")
    h = tuple((hi - lo) / n for (lo, hi), n in zip(domain.bounds, ncell))
    shape = tuple(n + 1 for n in ncell)

    nodes, mindex, bflag, normals, sides = [], [], [], [], []
    if domain.kind == "half_graph":
        (xlo, xhi), (ylo, yhi) = domain.bounds
        gp = domain.gamma_prime or (lambda x: _central(domain.gamma, x, 1e-6 * (xhi - xlo)))
        for i in range(shape[0]):
            x = xlo + i * h[0]
            yb = domain.lower_y(x)
            on_side = i in (0, shape[0] - 1)
            side_n = (1.0, 0.0) if i == 0 else (-1.0, 0.0)
            # lattice rows strictly above the graph by at least h/2
            js = [j for j in range(shape[1]) if ylo + j * h[1] > yb + 0.5 * h[1]]
            j0 = js[0] - 1 if js else shape[1] - 1
            curve_n = _unit((-gp(x), 1.0))
            cand = [(j0, (x, yb), True, curve_n if not on_side else _unit(np.add(curve_n, side_n)))]
            for j in js:
                top = j == shape[1] - 1
                nb = on_side or top
                if on_side and top:
                    nrm = _unit(np.add(side_n, (0.0, -1.0)))
                elif on_side:
                    nrm = side_n
                elif top:
                    nrm = (0.0, -1.0)
                else:
                    nrm = (0.0, 0.0)
                cand.append((j, (x, ylo + j * h[1]), nb, nrm))
            for j, p, nb, nrm in cand:
                nodes.append(p)
                mindex.append((i, j))
                bflag.append(nb)
                normals.append(nrm)
                s = []
                if nb:
                    if on_side:
                        s.append(side_n)
                    if j == j0:
                        s.append(curve_n)
                    if j == shape[1] - 1:
                        s.append((0.0, -1.0))
                sides.append(tuple(s))
    else:
        for idx in np.ndindex(*shape):
            p = tuple(lo + k * hk for k, hk, (lo, _) in zip(idx, h, domain.bounds))
            s = []
            for axis, k in enumerate(idx):
                if k == 0:
                    s.append(tuple(1.0 if a == axis else 0.0 for a in range(d)))
                elif k == shape[axis] - 1:
                    s.append(tuple(-1.0 if a == axis else 0.0 for a in range(d)))
            nodes.append(p)
            mindex.append(idx)
            bflag.append(bool(s))
            normals.append(_unit(np.sum(s, axis=0)) if s else (0.0,) * d)
            sides.append(tuple(s))
    mindex_arr = np.array(mindex, dtype=np.int64).reshape(-1, d)
    lookup = {tuple(int(k) for k in row): n for n, row in enumerate(mindex_arr)}
    return Grid(
        nodes=np.array(nodes, dtype=float).reshape(-1, d),
        h=h,
        shape=shape,
        multi_index=mindex_arr,
        boundary=np.array(bflag, dtype=bool),
        normals=np.array(normals, dtype=float).reshape(-1, d),
        side_normals=tuple(sides),
        _lookup=lookup,
    )


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class CoefficientField:
    """Coefficients a (d x d), b (d) and c (scalar) of the operator.

    With ``parabolic=True`` every evaluator is called as ``f(t, x)``, otherwise
    as ``f(x)``. ``da`` (optional) returns an array whose k-th slice is the
    matrix of partials of a with respect to x_k.
    """

    dim: int
    a: Callable
    b: Callable
    c: Callable
    da: Callable | None = None
    parabolic: bool = False
    name: str = "custom"
    c_nonnegative: bool = False
    sym_tol: float = 1e-12

    def _call(self, f, x, t):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.parabolic:
            return f(0.0 if t is None else float(t), x)
        return f(x)

    def a_at(self, x, t=None) -> Array:
        return np.asarray(self._call(self.a, x, t), dtype=float).reshape(self.dim, self.dim)

    def b_at(self, x, t=None) -> Array:
        return np.asarray(self._call(self.b, x, t), dtype=float).reshape(self.dim)

    def c_at(self, x, t=None) -> float:
        return float(self._call(self.c, x, t))

    def da_at(self, x, t=None) -> Array:
        if self.da is None:
            raise CoefficientError("no analytic derivative of a supplied")
        return np.asarray(self._call(self.da, x, t), dtype=float).reshape(self.dim, self.dim, self.dim)

    def check_at(self, x, t=None) -> None:
        """Raise CoefficientError if a(x) is not symmetric PSD or c(x) < 0 when declared."""
        a = self.a_at(x, t)
        scale = max(1.0, float(np.abs(a).max()))
        if not np.all(np.isfinite(a)):
            raise CoefficientError(f"a is not finite at {tuple(np.atleast_1d(x))}")
        if np.abs(a - a.T).max() > self.sym_tol * scale:
            raise CoefficientError(f"a is not symmetric at {tuple(np.atleast_1d(x))}")
        if np.linalg.eigvalsh(0.5 * (a + a.T)).min() < -self.sym_tol * scale:
            raise CoefficientError(f"a has a negative eigenvalue at {tuple(np.atleast_1d(x))}")
        if self.c_nonnegative and self.c_at(x, t) < 0:
            raise CoefficientError(f"c < 0 at {tuple(np.atleast_1d(x))}")


@dataclass(frozen=True)
class ScalarField:
    """A test function with pointwise derivatives.

    Elliptic: ``value(x)``, ``grad(x)``, ``hess(x)``. Parabolic fields take
    ``(t, x)`` and also provide ``dt``.
    """

    value: Callable
    grad: Callable
    hess: Callable
    dt: Callable | None = None
    parabolic: bool = False


def apply_operator(coeffs: CoefficientField, u: ScalarField, point, t=None) -> float:
    """Pointwise Au (or Lu = -u_t + Au for parabolic fields)."""
    x = np.atleast_1d(np.asarray(point, dtype=float))
    args = (float(t), x) if u.parabolic else (x,)
    a = coeffs.a_at(x, t)
    b = coeffs.b_at(x, t)
    c = coeffs.c_at(x, t)
    val = float(u.value(*args))
    g = np.asarray(u.grad(*args), dtype=float).reshape(-1)
    H = np.asarray(u.hess(*args), dtype=float).reshape(len(g), len(g))
    out = -float(np.sum(a * H)) - float(b @ g) + c * val
    if u.parabolic:
        out -= float(u.dt(*args))
    return out


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class BoundaryClassification:
    grid: Grid
    domain: SpatialDomain
    degenerate: tuple[int, ...]
    nondegenerate: tuple[int, ...]
    normals: Array
    limits: dict
    tol_zero: float

    def is_degenerate(self, node: int) -> bool:
        return node in self._degenerate_set

    @cached_property
    def _degenerate_set(self) -> frozenset:
        return frozenset(self.degenerate)

    def row_kinds(self) -> list[str]:
        deg = self._degenerate_set
        kinds = []
        for n in range(self.grid.size):
            if not self.grid.boundary[n]:
                kinds.append("interior")
            elif n in deg:
                kinds.append("degenerate_boundary")
            else:
                kinds.append("dirichlet")
        return kinds


def _ray_limit(samples: list[float], mats: list[Array]) -> float:
    """Extrapolated ||a|| at distance 0 from samples at h, h/2, h/4.

    Two estimates are combined: quadratic Richardson on the matrix entries
    (exact for a polynomial in the distance), and Aitken's delta-squared on the
    norms (exact for a single power law such as sqrt(distance)). The smaller
    magnitude is returned.
    """
    a1, a2, a4 = mats
    rich = float(np.linalg.norm((8.0 * a4 - 6.0 * a2 + a1) / 3.0, 2))
    f1, f2, f4 = samples
    den = f1 + f4 - 2.0 * f2
    if den != 0.0 and (f1 - f2) * (f2 - f4) > 0:
        aitken = abs((f1 * f4 - f2 * f2) / den)
    else:
        aitken = abs(f4)
    return min(rich, aitken)


def classify_boundary(
    domain: SpatialDomain,
    grid: Grid,
    coeffs: CoefficientField,
    tol_zero: float | None = None,
    t: float | None = None,
) -> BoundaryClassification:
    """Split boundary nodes into degenerate and non-degenerate sets.

    For parabolic fields the lateral boundary is classified at time ``t``; the
    terminal face is always non-degenerate.
    """

    def a_at(p):
        try:
            val = coeffs.a_at(p, t)
        except Exception as exc:  # noqa: BLE001 - reported with the failing point
            raise ClassificationError(f"coefficient evaluation failed at {tuple(p)}: {exc}") from exc
        if not np.all(np.isfinite(val)):
            raise ClassificationError(f"coefficient a is not finite at {tuple(p)}")
        return val

    if tol_zero is None:
        biggest = max(float(np.linalg.norm(a_at(p), 2)) for p in grid.nodes)
        tol_zero = 1e-8 * max(1.0, biggest)
    hmin = min(grid.h)
    deg, nondeg, limits = [], [], {}
    for n in grid.boundary_nodes:
        x0 = grid.nodes[n]
        dirs = [grid.normals[n]]
        if len(grid.side_normals[n]) > 1:
            # corners: also probe along each adjacent side so that a node where a
            # degenerate side meets a non-degenerate one lands in the degenerate set
            dirs += [np.asarray(s) for s in grid.side_normals[n]]
        best = math.inf
        for nv in dirs:
            mats = [a_at(x0 + s * nv) for s in (hmin, hmin / 2, hmin / 4)]
            norms = [float(np.linalg.norm(m, 2)) for m in mats]
            best = min(best, _ray_limit(norms, mats))
        limits[int(n)] = best
        (deg if best < tol_zero else nondeg).append(int(n))
    return BoundaryClassification(
        grid=grid,
        domain=domain,
        degenerate=tuple(deg),
        nondegenerate=tuple(nondeg),
        normals=grid.normals.copy(),
        limits=limits,
        tol_zero=float(tol_zero),
    )


# ---------------------------------------------------------------- Fichera function


def _a_partials(coeffs, domain, x0, h_fd, t=None) -> Array:
    """Partials of a at x0: analytic if available, else finite differences.

    Central differences are used when the stencil stays in the closed domain;
    otherwise a second-order one-sided stencil pointing into the domain.
    """
    if coeffs.da is not None:
        return coeffs.da_at(x0, t)
    d = coeffs.dim
    out = np.zeros((d, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h_fd
        if domain.contains(x0 + e) and domain.contains(x0 - e):
            out[j] = (coeffs.a_at(x0 + e, t) - coeffs.a_at(x0 - e, t)) / (2 * h_fd)
            continue
        for sgn in (1.0, -1.0):
            if domain.contains(x0 + sgn * e) and domain.contains(x0 + 2 * sgn * e):
                out[j] = sgn * (
                    -3 * coeffs.a_at(x0, t) + 4 * coeffs.a_at(x0 + sgn * e, t) - coeffs.a_at(x0 + 2 * sgn * e, t)
                ) / (2 * h_fd)
                break
        else:
            raise ClassificationError(f"finite-difference stencil for da/dx_{j} leaves the domain at {tuple(x0)}")
    return out


def fichera_function(
    coeffs: CoefficientField,
    classification: BoundaryClassification,
    node: int,
    h_fd: float | None = None,
    t: float | None = None,
) -> float:
    """sum_k (b^k - sum_j d a^{kj} / d x_j) n_k with n the inward normal."""
    if node not in classification.degenerate:
        raise ValueError(f"node {node} is not on the degenerate boundary")
    grid = classification.grid
    x0 = grid.nodes[node]
    n = classification.normals[node]
    if h_fd is None:
        h_fd = min(grid.h) / 4
    da = _a_partials(coeffs, classification.domain, x0, h_fd, t)
    div = np.array([sum(da[j][k, j] for j in range(coeffs.dim)) for k in range(coeffs.dim)])
    return float((coeffs.b_at(x0, t) - div) @ n)


# ---------------------------------------------------------------- Lipschitz bound


@dataclass(frozen=True)
class LipschitzEstimate:
    K: float
    non_lipschitz: bool
    ratios: dict  # node -> list of ||a|| / distance, largest distance first
    distances: tuple[float, ...]


def estimate_boundary_lipschitz(
    coeffs: CoefficientField,
    classification: BoundaryClassification,
    probe_depth: float,
    levels: int = 11,
    norm: str = "spectral",
    t: float | None = None,
) -> LipschitzEstimate:
    """Sup of ||a(x)|| / dist(x, degenerate boundary) over inward ladders.

    ``norm`` is ``"spectral"`` or ``"trace"``; the trace is the quantity bounded
    in the perturbation construction.
    """
    if not classification.degenerate:
        raise ValueError("no degenerate boundary nodes to probe")
    if norm not in ("spectral", "trace"):
        raise ValueError("norm must be 'spectral' or 'trace'")
    grid, domain = classification.grid, classification.domain
    dists = tuple(probe_depth * 2.0 ** (-k) for k in range(levels))
    ratios, K, flagged = {}, 0.0, False
    for n in classification.degenerate:
        x0, nv = grid.nodes[n], classification.normals[n]
        r = []
        for s in dists:
            p = x0 + s * nv
            if not domain.contains(p):
                continue
            a = coeffs.a_at(p, t)
            val = float(np.trace(a)) if norm == "trace" else float(np.linalg.norm(a, 2))
            r.append(val / s)
        ratios[n] = r
        if r:
            K = max(K, max(r))
            if len(r) >= 3 and all(r[i + 1] > r[i] for i in range(len(r) - 1)) and r[-1] > 2 * r[0]:
                flagged = True
    return LipschitzEstimate(K=K, non_lipschitz=flagged, ratios=ratios, distances=dists)


# ---------------------------------------------------------------- second-derivative diagnostic


@dataclass(frozen=True)
class LadderEntry:
    node: int
    pair: str  # "tt", "tn" or "nn"
    distances: tuple[float, ...]
    values: tuple[float, ...]
    decays: bool


@dataclass(frozen=True)
class SecondDerivativeReport:
    entries: tuple[LadderEntry, ...]

    @property
    def all_decay(self) -> bool:
        return all(e.decays for e in self.entries)


def _decays(values: Sequence[float], atol: float) -> bool:
    tail = [abs(v) for v in values[-3:]]
    if max(tail) <= atol:
        return True
    return tail[0] > tail[1] > tail[2]


def check_second_derivative_vanishing(
    u: Callable,
    classification: BoundaryClassification,
    theta: Callable[[float], float],
    levels: int = 8,
    depth: float = 0.25,
    assume_divergent: bool = False,
    atol: float = 1e-10,
) -> SecondDerivativeReport:
    """Track theta(dist) * (second difference of u) toward the degenerate boundary.

    ``u`` is sampled on a dyadic ladder of distances ``depth * 2**-k`` along the
    inward normal of each degenerate node, with difference step half the
    distance. Tangential pairs are always reported; pairs involving the normal
    direction only when ``assume_divergent`` is set (1/theta not integrable at 0).
    """
    if levels < 4:
        raise ValueError("need at least 4 ladder levels")
    grid = classification.grid
    d = grid.dim
    entries = []
    for n in classification.degenerate:
        x0 = grid.nodes[n]
        nv = classification.normals[n]
        tv = np.array([-nv[1], nv[0]]) if d == 2 else None
        pairs = []
        if tv is not None:
            pairs.append("tt")
        if assume_divergent:
            pairs += (["tn"] if tv is not None else []) + ["nn"]
        dists = tuple(depth * 2.0 ** (-k) for k in range(levels))
        for pair in pairs:
            vals = []
            for s in dists:
                p = x0 + s * nv
                hk = 0.5 * s
                if pair == "nn":
                    d2 = (u(p + hk * nv) - 2 * u(p) + u(p - hk * nv)) / hk**2
                elif pair == "tt":
                    d2 = (u(p + hk * tv) - 2 * u(p) + u(p - hk * tv)) / hk**2
                else:
                    d2 = (
                        u(p + hk * (tv + nv)) - u(p + hk * (tv - nv)) - u(p - hk * (tv - nv)) + u(p - hk * (tv + nv))
                    ) / (4 * hk**2)
                vals.append(theta(s) * d2)
            entries.append(LadderEntry(int(n), pair, dists, tuple(vals), _decays(vals, atol)))
    return SecondDerivativeReport(tuple(entries))
