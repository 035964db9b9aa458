import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degenmax import coefficients
from degenmax.operator_core import (
    ClassificationError,
    CoefficientError,
    CoefficientField,
    ScalarField,
    SpatialDomain,
    apply_operator,
    check_second_derivative_vanishing,
    classify_boundary,
    estimate_boundary_lipschitz,
    fichera_function,
    make_grid,
)
from degenmax.special_functions import (
    HypergeometricParams,
    kummer_M,
    kummer_M_derivative,
    kummer_M_second_derivative,
    tricomi_U,
)


def classified(coeffs, domain, cells):
    grid = make_grid(domain, cells)
    return grid, classify_boundary(domain, grid, coeffs)


def scalar_1d(f):
    return ScalarField(value=f, grad=None, hess=None)


def test_kummer_interval_split():
    grid, cls = classified(coefficients.kummer(1.0, 2.0), SpatialDomain.interval(0.0, 2.0), 32)
    assert [grid.nodes[n][0] for n in cls.degenerate] == [0.0]
    assert [grid.nodes[n][0] for n in cls.nondegenerate] == [2.0]


def test_hypergeometric_has_no_dirichlet_boundary():
    grid, cls = classified(coefficients.hypergeometric(1.0, 1.0, 1.0), SpatialDomain.interval(0.0, 1.0), 32)
    assert len(cls.degenerate) == 2 and cls.nondegenerate == ()


def test_uniformly_elliptic_square_is_all_dirichlet():
    coeffs = coefficients.constant(np.eye(2), [0.0, 0.0], 0.0)
    grid, cls = classified(coeffs, SpatialDomain.rectangle((0, 1), (0, 1)), 6)
    assert cls.degenerate == ()
    assert set(cls.nondegenerate) == set(int(n) for n in grid.boundary_nodes)


def test_corner_on_degenerate_side_goes_to_degenerate_set():
    coeffs = coefficients.linear_in_distance(np.eye(2), [0.0, 1.0], 0.0)
    grid, cls = classified(coeffs, SpatialDomain.rectangle((0, 1), (0, 1)), 4)
    bottom = {n for n in grid.boundary_nodes if grid.nodes[n][1] == 0.0}
    assert bottom == set(cls.degenerate)


def test_classification_partitions_boundary():
    coeffs = coefficients.heston_like(kappa=1.0, theta=0.5, sigma=0.4, rho=-0.3, r=0.05)
    grid, cls = classified(coeffs, SpatialDomain.rectangle((-1, 1), (0, 1)), 8)
    deg, nondeg = set(cls.degenerate), set(cls.nondegenerate)
    assert not deg & nondeg
    assert deg | nondeg == set(int(n) for n in grid.boundary_nodes)


def test_classification_is_idempotent():
    coeffs = coefficients.kummer(1.0, 1.0)
    dom = SpatialDomain.interval(0.0, 1.0)
    grid = make_grid(dom, 16)
    first, second = classify_boundary(dom, grid, coeffs), classify_boundary(dom, grid, coeffs)
    assert first.degenerate == second.degenerate
    assert first.nondegenerate == second.nondegenerate


def test_classification_reports_failing_point():
    def bad_a(x):
        if x[0] < 0.01:
            raise ZeroDivisionError("boom")
        return np.array([[x[0]]])

    coeffs = CoefficientField(1, bad_a, lambda x: np.array([1.0]), lambda x: 0.0)
    dom = SpatialDomain.interval(0.0, 1.0)
    with pytest.raises(ClassificationError, match="failed at"):
        classify_boundary(dom, make_grid(dom, 8), coeffs)


def test_check_at_rejects_asymmetric_and_indefinite():
    asym = CoefficientField(2, lambda x: np.array([[1.0, 0.5], [0.0, 1.0]]), lambda x: np.zeros(2), lambda x: 0.0)
    with pytest.raises(CoefficientError, match="symmetric"):
        asym.check_at([0.5, 0.5])
    neg = CoefficientField(1, lambda x: np.array([[-1.0]]), lambda x: np.zeros(1), lambda x: 0.0)
    with pytest.raises(CoefficientError, match="negative eigenvalue"):
        neg.check_at([0.5])


@pytest.mark.parametrize("b", [0.5, 1.0, 3.0])
def test_fichera_kummer(b):
    grid, cls = classified(coefficients.kummer(1.0, b), SpatialDomain.interval(0.0, 1.0), 16)
    assert fichera_function(coefficients.kummer(1.0, b), cls, cls.degenerate[0]) == pytest.approx(b - 1.0, abs=1e-12)


def test_fichera_vanishing_coefficients():
    coeffs = CoefficientField(1, lambda x: np.zeros((1, 1)), lambda x: np.zeros(1), lambda x: 0.0)
    dom = SpatialDomain.interval(0.0, 1.0)
    grid = make_grid(dom, 8)
    cls = classify_boundary(dom, grid, coeffs)
    assert fichera_function(coeffs, cls, cls.degenerate[0]) == 0.0


def test_fichera_two_dimensional_by_finite_differences():
    coeffs = CoefficientField(2, lambda x: x[1] * np.eye(2), lambda x: np.array([0.0, 2.0]), lambda x: 0.0)
    dom = SpatialDomain.rectangle((0, 1), (0, 1))
    grid, cls = classified(coeffs, dom, 8)
    mid = next(n for n in cls.degenerate if abs(grid.nodes[n][0] - 0.5) < 1e-12)
    assert fichera_function(coeffs, cls, mid) == pytest.approx(1.0, abs=1e-9)


def test_fichera_refuses_nondegenerate_node():
    grid, cls = classified(coefficients.kummer(1.0, 1.0), SpatialDomain.interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        fichera_function(coefficients.kummer(1.0, 1.0), cls, cls.nondegenerate[0])


def _one_dim(a_fn):
    coeffs = CoefficientField(1, lambda x: np.array([[a_fn(x[0])]]), lambda x: np.array([1.0]), lambda x: 0.0)
    dom = SpatialDomain.interval(0.0, 1.0)
    grid = make_grid(dom, 16)
    return coeffs, classify_boundary(dom, grid, coeffs)


def test_lipschitz_linear_a():
    coeffs, cls = _one_dim(lambda x: x)
    est = estimate_boundary_lipschitz(coeffs, cls, probe_depth=0.1)
    assert est.K == pytest.approx(1.0, rel=0.05)
    assert not est.non_lipschitz


def test_lipschitz_quadratic_a():
    coeffs, cls = _one_dim(lambda x: x * x)
    assert estimate_boundary_lipschitz(coeffs, cls, probe_depth=0.1).K == pytest.approx(0.1, rel=1e-12)


def test_lipschitz_square_root_flagged():
    coeffs, cls = _one_dim(lambda x: math.sqrt(x))
    est = estimate_boundary_lipschitz(coeffs, cls, probe_depth=0.1)
    assert est.non_lipschitz


def test_lipschitz_needs_degenerate_nodes():
    coeffs = coefficients.constant(1.0, 0.0, 0.0, dim=1)
    grid, cls = classified(coeffs, SpatialDomain.interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        estimate_boundary_lipschitz(coeffs, cls, probe_depth=0.1)


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-0.9, 0.9))
def test_lipschitz_recovers_spectral_norm(d1, d2, corr):
    off = corr * math.sqrt(d1 * d2)
    A0 = np.array([[d1, off], [off, d2]])
    coeffs = coefficients.linear_in_distance(A0, [0.0, 1.0], 0.0)
    dom = SpatialDomain.rectangle((0, 1), (0, 1))
    grid, cls = classified(coeffs, dom, 4)
    est = estimate_boundary_lipschitz(coeffs, cls, probe_depth=0.2)
    assert est.K == pytest.approx(np.linalg.norm(A0, 2), rel=0.05)


def test_apply_operator_kills_constants_without_zeroth_order():
    u = ScalarField(lambda x: 1.0, lambda x: np.zeros(1), lambda x: np.zeros((1, 1)))
    assert apply_operator(coefficients.kummer(0.0, 1.0), u, [0.3]) == 0.0


@pytest.mark.parametrize("x", [0.25, 0.5])
def test_apply_operator_on_kummer_function(x):
    p = HypergeometricParams(1.0, 1.0)
    u = ScalarField(
        lambda y: kummer_M(p, y[0]),
        lambda y: np.array([kummer_M_derivative(p, y[0])]),
        lambda y: np.array([[kummer_M_second_derivative(p, y[0])]]),
    )
    assert abs(apply_operator(coefficients.kummer(1.0, 1.0), u, [x])) < 1e-8


def test_apply_operator_on_last_coordinate():
    a = lambda x: np.array([[2.0, 0.3], [0.3, 1.0]])
    coeffs = CoefficientField(2, a, lambda x: np.array([0.0, 1.0]), lambda x: 0.0)
    u = ScalarField(lambda x: x[1], lambda x: np.array([0.0, 1.0]), lambda x: np.zeros((2, 2)))
    assert apply_operator(coeffs, u, [0.4, 0.6]) == -1.0


def quad_field(q, g):
    q = np.asarray(q)
    g = np.asarray(g)
    return ScalarField(lambda x: 0.5 * x @ q @ x + g @ x, lambda x: q @ x + g, lambda x: q)


@given(
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.tuples(st.floats(0.01, 1), st.floats(0.01, 1)),
)
def test_apply_operator_is_linear(p1, p2, point):
    coeffs = coefficients.heston_like(kappa=1.0, theta=0.5, sigma=0.4, rho=-0.3, r=0.05)
    q1 = np.array([[p1[0], p1[1]], [p1[1], p1[2]]])
    q2 = np.array([[p2[0], p2[1]], [p2[1], p2[2]]])
    u1, u2 = quad_field(q1, [p1[3], 0.0]), quad_field(q2, [0.0, p2[3]])
    both = quad_field(q1 + q2, [p1[3], p2[3]])
    lhs = apply_operator(coeffs, u1, point) + apply_operator(coeffs, u2, point)
    rhs = apply_operator(coeffs, both, point)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def test_second_derivative_ladder_for_smooth_kummer_function():
    p = HypergeometricParams(1.0, 2.0)
    _, cls = classified(coefficients.kummer(1.0, 2.0), SpatialDomain.interval(0.0, 1.0), 16)
    rep = check_second_derivative_vanishing(lambda x: kummer_M(p, x[0]), cls, lambda s: s, assume_divergent=True)
    assert rep.all_decay


def test_second_derivative_ladder_for_linear_function_is_zero():
    coeffs = coefficients.linear_in_distance(np.eye(2), [0.0, 1.0], 0.0)
    _, cls = classified(coeffs, SpatialDomain.rectangle((0, 1), (0, 1)), 8)
    rep = check_second_derivative_vanishing(lambda x: x[1], cls, lambda s: s, assume_divergent=True)
    assert all(abs(v) < 1e-9 for e in rep.entries for v in e.values)


def test_second_derivative_ladder_for_tricomi_does_not_decay():
    p = HypergeometricParams(0.5, 0.5)
    _, cls = classified(coefficients.kummer(0.5, 0.5), SpatialDomain.interval(0.0, 1.0), 16)
    rep = check_second_derivative_vanishing(lambda x: tricomi_U(p, x[0]), cls, lambda s: s, assume_divergent=True)
    normal = [e for e in rep.entries if e.pair == "nn"]
    assert normal and not any(e.decays for e in normal)


def test_second_derivative_needs_four_levels():
    _, cls = classified(coefficients.kummer(1.0, 2.0), SpatialDomain.interval(0.0, 1.0), 16)
    with pytest.raises(ValueError):
        check_second_derivative_vanishing(lambda x: x[0], cls, lambda s: s, levels=3)
