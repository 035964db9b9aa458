import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from degenmax import coefficients
from degenmax.fd_solver import (
    AssemblyError,
    DiscreteOperator,
    SingularSystemError,
    assemble_elliptic,
    assemble_parabolic,
    check_m_matrix,
    convergence_study,
    discrete_strong_max_check,
    discrete_weak_max_check,
    parabolic_strong_max_check,
    solve_linear,
    time_grid,
)
from degenmax.operator_core import CoefficientField, SpatialDomain, classify_boundary, make_grid
from degenmax.special_functions import HypergeometricParams, kummer_M


def setup(coeffs, domain, cells):
    grid = make_grid(domain, cells)
    return grid, classify_boundary(domain, grid, coeffs)


def unit_interval(coeffs, cells):
    return setup(coeffs, SpatialDomain.interval(0.0, 1.0), cells)


def unit_square(coeffs, cells):
    return setup(coeffs, SpatialDomain.rectangle((0, 1), (0, 1)), cells)


def test_degenerate_row_is_the_drift_equation():
    coeffs = coefficients.kummer(1.0, 1.0)
    grid, cls = unit_interval(coeffs, 63)
    op = assemble_elliptic(coeffs, grid, cls, f=0.0, g=kummer_M(HypergeometricParams(1, 1), 1.0))
    h = grid.h[0]
    row = op.matrix.getrow(0).toarray().ravel()
    assert op.row_kind[0] == "degenerate_boundary"
    assert row[0] == pytest.approx(1.0 / h + 1.0, rel=1e-14)
    assert row[1] == pytest.approx(-1.0 / h, rel=1e-14)
    assert np.count_nonzero(row) == 2


def test_zero_data_gives_zero_solution():
    coeffs = coefficients.kummer(1.0, 2.0)
    grid, cls = unit_interval(coeffs, 32)
    rep = solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0, g=0.0))
    assert np.all(rep.solution == 0.0)
    assert rep.residual_norm == 0.0


def test_reaction_diffusion_square_matches_dense_solve():
    coeffs = coefficients.constant(np.eye(2), [0.0, 0.0], 1.0)
    grid, cls = unit_square(coeffs, 7)
    op = assemble_elliptic(coeffs, grid, cls, f=1.0, g=0.0)
    rep = solve_linear(op)
    dense = np.linalg.solve(op.matrix.toarray(), op.rhs)
    np.testing.assert_allclose(rep.solution, dense, rtol=1e-12, atol=1e-14)
    interior = ~grid.boundary
    assert np.all(rep.solution[interior] > 0)
    assert rep.solution.max() < 1.0


def test_all_dirichlet_rows_return_the_data():
    coeffs = coefficients.constant(np.eye(2), [0.0, 0.0], 0.0)
    grid, cls = unit_square(coeffs, 2)
    g = np.linspace(-0.4, 0.4, grid.size)
    kinds = ("dirichlet",) * grid.size
    z = np.zeros(grid.size)
    op = DiscreteOperator(sp.identity(grid.size, format="csr"), g.copy(), kinds, grid, cls, z, g, z)
    np.testing.assert_array_equal(solve_linear(op).solution, g)
    assert check_m_matrix(op) == (True, [])


def test_homogeneous_kummer_is_zero():
    coeffs = coefficients.kummer(0.7, 1.5)
    grid, cls = unit_interval(coeffs, 128)
    rep = solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0, g=0.0))
    assert np.abs(rep.solution).max() < 1e-10


def test_hypergeometric_is_uniquely_solvable_without_boundary_data():
    coeffs = coefficients.hypergeometric(1.0, 1.0, 1.0)
    grid, cls = unit_interval(coeffs, 31)
    op = assemble_elliptic(coeffs, grid, cls, f=0.0)
    assert not op.dirichlet.any()
    assert abs(np.linalg.det(op.matrix.toarray())) > 0
    assert np.abs(solve_linear(op).solution).max() < 1e-10


def test_no_dirichlet_and_no_reaction_is_singular():
    coeffs = coefficients.hypergeometric(0.0, 1.0, 1.0)
    grid, cls = unit_interval(coeffs, 16)
    with pytest.raises(SingularSystemError):
        solve_linear(assemble_elliptic(coeffs, grid, cls, f=0.0))


def test_iterative_path_agrees_with_direct():
    coeffs = coefficients.linear_in_distance(np.eye(2), [0.3, 1.0], 1.0)
    grid, cls = unit_square(coeffs, 12)
    op = assemble_elliptic(coeffs, grid, cls, f=-1.0, g=0.2)
    direct = solve_linear(op)
    iterative = solve_linear(op, direct_limit=0)
    assert iterative.method == "bicgstab"
    np.testing.assert_allclose(iterative.solution, direct.solution, rtol=1e-8, atol=1e-10)


def test_half_graph_domain_is_rejected():
    dom = SpatialDomain.half_graph(lambda x: 0.1 * x, (0, 1), (-1, 1))
    coeffs = coefficients.constant(np.eye(2), [0.0, 1.0], 1.0)
    grid = make_grid(dom, 4)
    cls = classify_boundary(dom, grid, coeffs)
    with pytest.raises(AssemblyError):
        assemble_elliptic(coeffs, grid, cls)


def test_upwind_kummer_is_an_m_matrix():
    for a, b in [(0.0, 0.5), (1.0, 1.0), (2.5, 3.0)]:
        coeffs = coefficients.kummer(a, b)
        grid, cls = unit_interval(coeffs, 40)
        assert check_m_matrix(assemble_elliptic(coeffs, grid, cls, g=1.0)).ok


def test_central_drift_row_violates_m_matrix():
    coeffs = coefficients.kummer(1.0, 1.0)
    grid, cls = unit_interval(coeffs, 4)
    h = grid.h[0]
    a, b = 0.01, 1.0  # Peclet number |b| h / (2 a) > 1
    rows = [[1, 0, 0, 0, 0]]
    for i in range(1, 4):
        r = [0.0] * 5
        r[i - 1] = -a / h**2 + b / (2 * h)
        r[i] = 2 * a / h**2
        r[i + 1] = -a / h**2 - b / (2 * h)
        rows.append(r)
    rows.append([0, 0, 0, 0, 1])
    kinds = ("dirichlet", "interior", "interior", "interior", "dirichlet")
    z = np.zeros(5)
    op = DiscreteOperator(sp.csr_matrix(np.array(rows, dtype=float)), z, kinds, grid, cls, z, z, z)
    res = check_m_matrix(op)
    assert not res.ok and res.witnesses == [1, 2, 3]


def test_strong_mixed_term_is_reported_not_rejected():
    coeffs = coefficients.constant([[1.0, 0.9], [0.9, 1.0]], [0.0, 0.0], 0.0)
    grid, cls = setup(coeffs, SpatialDomain.rectangle((0, 1), (0, 4)), 8)
    res = check_m_matrix(assemble_elliptic(coeffs, grid, cls, g=0.0))
    assert not res.ok and res.witnesses


def test_outward_corner_drift_is_dropped_with_warning():
    coeffs = coefficients.linear_in_distance(np.eye(2), [-1.0, 1.0], 0.0)
    grid, cls = unit_square(coeffs, 6)
    op = assemble_elliptic(coeffs, grid, cls, g=0.0)
    assert any("outward drift" in w for w in op.warnings)
    assert check_m_matrix(op).ok


def kummer_problem(cells=48, a=1.0, b=2.0):
    coeffs = coefficients.kummer(a, b)
    grid, cls = unit_interval(coeffs, cells)
    return coeffs, grid, cls


def test_weak_max_nonpositive_data():
    coeffs, grid, cls = kummer_problem()
    op = assemble_elliptic(coeffs, grid, cls, f=lambda x: -x[0] ** 2, g=-0.5)
    rep = solve_linear(op)
    assert rep.solution.max() <= 0
    assert discrete_weak_max_check(rep, op, c0=0.0) == []


def test_weak_max_reaction_bound():
    coeffs, grid, cls = kummer_problem(cells=15, a=1.0, b=1.0)
    f = lambda x: 2.0 * np.sin(np.pi * x[0]) ** 2
    op = assemble_elliptic(coeffs, grid, cls, f=f, g=-0.1)
    rep = solve_linear(op)
    dense = np.linalg.solve(op.matrix.toarray(), op.rhs)
    np.testing.assert_allclose(rep.solution, dense, rtol=1e-12)
    assert rep.solution.max() <= 2.0
    assert discrete_weak_max_check(rep, op, c0=1.0) == []


def test_weak_max_boundary_bound():
    coeffs = coefficients.linear_in_distance(np.eye(2), [0.2, 1.0], 0.5)
    grid, cls = unit_square(coeffs, 10)
    g = lambda x: 0.7 * x[0]
    op = assemble_elliptic(coeffs, grid, cls, f=-0.3, g=g)
    rep = solve_linear(op)
    assert rep.solution.max() <= 0.7 + 1e-12
    assert discrete_weak_max_check(rep, op, c0=0.0) == []


def test_weak_max_check_reports_violations():
    coeffs, grid, cls = kummer_problem()
    op = assemble_elliptic(coeffs, grid, cls, f=0.0, g=0.0)
    rep = solve_linear(op)
    rep.solution[5] = 1.0
    assert discrete_weak_max_check(rep, op) == [5]


def test_strong_max_constant_solution():
    coeffs = coefficients.kummer(0.0, 1.0)
    grid, cls = unit_interval(coeffs, 20)
    op = assemble_elliptic(coeffs, grid, cls, f=0.0, g=1.0)
    rep = solve_linear(op)
    diag = discrete_strong_max_check(rep, op)
    assert diag.deviation is None or diag.deviation <= 1e-9
    assert diag.c_zero


def test_strong_max_subharmonic_attains_max_on_dirichlet():
    coeffs = coefficients.kummer(0.0, 1.0)
    grid, cls = unit_interval(coeffs, 20)
    op = assemble_elliptic(coeffs, grid, cls, f=-1.0, g=0.0)
    diag = discrete_strong_max_check(solve_linear(op), op)
    assert diag.location == "dirichlet"
    assert diag.message == "max on Dirichlet boundary"


@given(st.integers(0, 2**32 - 1))
def test_inverse_positivity(seed):
    rng = np.random.default_rng(seed)
    coeffs = coefficients.kummer(rng.uniform(0, 2), rng.uniform(0.2, 3))
    grid, cls = unit_interval(coeffs, int(rng.integers(8, 40)))
    f = -rng.uniform(0, 1, grid.size)
    op = assemble_elliptic(coeffs, grid, cls, f=f, g=-rng.uniform(0, 1))
    assert check_m_matrix(op).ok
    assert solve_linear(op).solution.max() <= 0.0


@given(st.integers(0, 2**32 - 1))
def test_comparison(seed):
    rng = np.random.default_rng(seed)
    coeffs = coefficients.linear_in_distance(np.eye(2), [rng.uniform(-1, 1), rng.uniform(0.2, 2)], rng.uniform(0, 1))
    grid, cls = unit_square(coeffs, 6)
    f1 = rng.normal(size=grid.size)
    g1 = rng.normal(size=grid.size)
    f2 = f1 + rng.uniform(0, 1, grid.size)
    g2 = g1 + rng.uniform(0, 1, grid.size)
    u1 = solve_linear(assemble_elliptic(coeffs, grid, cls, f=f1, g=g1)).solution
    u2 = solve_linear(assemble_elliptic(coeffs, grid, cls, f=f2, g=g2)).solution
    assert np.all(u1 <= u2 + 1e-12)


def test_degenerate_rows_ignore_interior_diffusion():
    base = coefficients.kummer(1.0, 1.0)
    wiggly = CoefficientField(
        1, lambda x: np.array([[x[0] * (1 + 0.5 * np.sin(7 * x[0]))]]), base.b, base.c
    )
    grid, cls = unit_interval(base, 32)
    A1 = assemble_elliptic(base, grid, cls, g=1.0).matrix
    A2 = assemble_elliptic(wiggly, grid, cls, g=1.0).matrix
    np.testing.assert_array_equal(A1.getrow(0).toarray(), A2.getrow(0).toarray())
    assert (A1 != A2).nnz > 0


def test_convergence_kummer_function():
    coeffs = coefficients.kummer(1.0, 1.0)
    p = HypergeometricParams(1.0, 1.0)

    def solve(cells):
        grid, cls = unit_interval(coeffs, cells)
        return grid, solve_linear(assemble_elliptic(coeffs, grid, cls, g=kummer_M(p, 1.0))).solution

    rep = convergence_study(solve, lambda x: kummer_M(p, x[0]), (32, 64, 128, 256))
    assert rep.rate >= 0.9
    assert not rep.unstable


def test_convergence_manufactured_solution():
    a_p, b_p = 1.0, 2.0
    coeffs = coefficients.kummer(a_p, b_p)
    # u = x(1-x): A u = 2x - (b - x)(1 - 2x) + a x(1 - x)
    f = lambda x: 2 * x[0] - (b_p - x[0]) * (1 - 2 * x[0]) + a_p * x[0] * (1 - x[0])

    def solve(cells):
        grid, cls = unit_interval(coeffs, cells)
        return grid, solve_linear(assemble_elliptic(coeffs, grid, cls, f=f, g=0.0)).solution

    rep = convergence_study(solve, lambda x: x[0] * (1 - x[0]), (32, 64, 128, 256))
    assert rep.rate >= 0.9


def test_linear_solution_is_reproduced_exactly():
    coeffs = coefficients.constant(1.0, 1.0, 0.0, dim=1)

    def solve(cells):
        grid, cls = unit_interval(coeffs, cells)
        # u = 1 + 2x solves -u'' - u' = -2
        return grid, solve_linear(assemble_elliptic(coeffs, grid, cls, f=-2.0, g=lambda x: 1 + 2 * x[0])).solution

    rep = convergence_study(solve, lambda x: 1 + 2 * x[0], (8, 16, 32))
    assert max(rep.errors) < 1e-12


def test_parabolic_zero_data():
    coeffs = coefficients.kummer(1.0, 1.0)
    grid, cls = unit_interval(coeffs, 16)
    sol = assemble_parabolic(coeffs, grid, time_grid(1.0, 10), cls, f=0.0, g=0.0, terminal=0.0).march()
    assert np.all(sol.values == 0.0)


def test_parabolic_approaches_steady_state():
    coeffs = coefficients.kummer(1.0, 1.0)
    grid, cls = unit_interval(coeffs, 32)
    steady = solve_linear(assemble_elliptic(coeffs, grid, cls, f=1.0, g=2.0)).solution
    gaps = []
    for steps in (10, 20, 40, 80):
        plan = assemble_parabolic(coeffs, grid, time_grid(0.25 * steps, steps), cls, f=1.0, g=2.0, terminal=0.0)
        gaps.append(np.abs(plan.march().values[-1] - steady).max())
    assert all(x > y for x, y in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_parabolic_weak_max_on_strip():
    coeffs = coefficients.linear_in_distance(np.eye(2), [0.0, 1.0], 0.0)
    grid, cls = unit_square(coeffs, 8)
    rng = np.random.default_rng(3)
    term = -rng.uniform(0, 1, grid.size)
    sol = assemble_parabolic(coeffs, grid, time_grid(0.5, 10), cls, f=0.0, g=-0.2, terminal=term).march()
    assert sol.values.max() <= 0.0
    assert sol.m_matrix_ok


def test_parabolic_solution_bounded_by_data():
    coeffs = coefficients.kummer(0.5, 1.5)
    grid, cls = unit_interval(coeffs, 24)
    rng = np.random.default_rng(11)
    term = rng.uniform(-1, 1, grid.size)
    sol = assemble_parabolic(coeffs, grid, time_grid(1.0, 20), cls, f=0.0, g=0.3, terminal=term).march()
    assert sol.values.max() <= max(term.max(), 0.3) + 1e-12


def test_parabolic_strong_max_on_constant_march():
    coeffs = coefficients.kummer(0.0, 1.0)
    grid, cls = unit_interval(coeffs, 12)
    plan = assemble_parabolic(coeffs, grid, time_grid(1.0, 5), cls, f=0.0, g=1.0, terminal=1.0)
    diag = parabolic_strong_max_check(plan.march(), plan)
    assert diag.constant_on_component in (True, None)


def test_parabolic_input_validation():
    coeffs = coefficients.kummer(1.0, 1.0)
    grid, cls = unit_interval(coeffs, 8)
    with pytest.raises(ValueError):
        assemble_parabolic(coeffs, grid, [0.0, 1.0], cls, terminal=0.0)
    with pytest.raises(ValueError):
        assemble_parabolic(coeffs, grid, [1.0, 0.0], cls)
    with pytest.raises(ValueError):
        time_grid(1.0, 0)
