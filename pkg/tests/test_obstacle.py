import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degenmax import coefficients
from degenmax.fd_solver import assemble_elliptic, assemble_parabolic, solve_linear, time_grid
from degenmax.obstacle import (
    ObstacleNonConvergence,
    ObstacleProblem,
    comparison_check,
    complementarity_residual,
    solve_obstacle_elliptic,
    solve_obstacle_parabolic,
)
from degenmax.operator_core import SpatialDomain, classify_boundary, make_grid

TOL = 1e-8


def kummer_setup(cells, a=1.0, b=1.0):
    coeffs = coefficients.kummer(a, b)
    dom = SpatialDomain.interval(0.0, 1.0)
    grid = make_grid(dom, cells)
    return coeffs, grid, classify_boundary(dom, grid, coeffs)


def test_very_negative_obstacle_recovers_linear_solve():
    coeffs, grid, cls = kummer_setup(64)
    op = assemble_elliptic(coeffs, grid, cls, f=lambda x: np.cos(3 * x[0]), g=0.5)
    free = solve_linear(op).solution
    sol = solve_obstacle_elliptic(ObstacleProblem(op, np.full(grid.size, -1e6)), tol=TOL, u0=np.zeros(grid.size))
    assert sol.converged
    assert np.abs(sol.u - free).max() < 1e-6
    assert sol.active_set.size == 0


def test_supersolution_obstacle_is_the_solution():
    coeffs, grid, cls = kummer_setup(32)
    op = assemble_elliptic(coeffs, grid, cls, f=0.0, g=1.0)
    sol = solve_obstacle_elliptic(ObstacleProblem(op, np.ones(grid.size)), tol=TOL)
    np.testing.assert_array_equal(sol.u, np.ones(grid.size))
    assert sol.complementarity_residual <= TOL


def _enumerate_contiguous(op, psi):
    """Try every left interval [0, k) as the active set; keep the complementary one."""
    A = op.matrix.toarray()
    n = op.size
    found = []
    for k in range(n):
        M = A.copy()
        rhs = op.rhs.copy()
        M[:k] = 0.0
        M[np.arange(k), np.arange(k)] = 1.0
        rhs[:k] = psi[:k]
        u = np.linalg.solve(M, rhs)
        r = A @ u - op.rhs
        free = ~op.dirichlet
        if np.all(u >= psi - 1e-12) and np.all(r[free] >= -1e-9):
            found.append((k, u))
    return found


def test_tilted_obstacle_matches_active_set_enumeration():
    coeffs, grid, cls = kummer_setup(31)
    psi = np.array([0.3 * max(0.5 - x[0], 0.0) for x in grid.nodes])
    op = assemble_elliptic(coeffs, grid, cls, f=0.0, g=0.0)
    sol = solve_obstacle_elliptic(ObstacleProblem(op, psi), tol=TOL)
    oracle = _enumerate_contiguous(op, psi)
    assert len(oracle) == 1
    k, u_exact = oracle[0]
    assert k > 0
    np.testing.assert_allclose(sol.u, u_exact, atol=1e-7)
    active = set(sol.active_set.tolist())
    assert active == set(range(k))
    right = np.arange(k, grid.size - 1)
    assert np.all(sol.u[right] > psi[right])


def test_complementarity_holds_at_solution():
    coeffs, grid, cls = kummer_setup(48, a=0.5, b=2.0)
    psi = np.array([0.2 * np.sin(3 * x[0]) for x in grid.nodes])
    op = assemble_elliptic(coeffs, grid, cls, f=-0.5, g=0.2 * np.sin(3.0))
    sol = solve_obstacle_elliptic(ObstacleProblem(op, psi), tol=TOL)
    assert np.all(sol.u >= psi - TOL)
    assert complementarity_residual(op, psi, sol.u) <= 10 * TOL
    assert complementarity_residual(op, psi, sol.u, one_sided=True) <= 10 * TOL


def test_obstacle_above_dirichlet_data_is_rejected():
    coeffs, grid, cls = kummer_setup(16)
    op = assemble_elliptic(coeffs, grid, cls, g=0.0)
    with pytest.raises(ValueError, match="exceeds the Dirichlet data"):
        ObstacleProblem(op, np.full(grid.size, 0.1))


def test_non_convergence_carries_the_iterate():
    coeffs, grid, cls = kummer_setup(64)
    op = assemble_elliptic(coeffs, grid, cls, f=1.0, g=0.0)
    with pytest.raises(ObstacleNonConvergence) as info:
        solve_obstacle_elliptic(ObstacleProblem(op, np.zeros(grid.size)), max_iter=2)
    assert info.value.solution.iterations == 2
    assert not info.value.solution.converged


@pytest.mark.parametrize("omega", [0.0, 2.0, -1.0])
def test_relaxation_must_lie_in_open_interval(omega):
    coeffs, grid, cls = kummer_setup(8)
    op = assemble_elliptic(coeffs, grid, cls, g=0.0)
    with pytest.raises(ValueError):
        solve_obstacle_elliptic(ObstacleProblem(op, np.zeros(grid.size)), omega=omega)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_raised_data_raises_the_solution(seed):
    rng = np.random.default_rng(seed)
    coeffs, grid, cls = kummer_setup(24, a=rng.uniform(0, 1), b=rng.uniform(0.5, 2))
    psi = rng.uniform(-0.5, 0.5, grid.size)
    psi[-1] = min(psi[-1], 0.0)
    f1 = rng.normal(size=grid.size)
    lo = solve_obstacle_elliptic(ObstacleProblem(assemble_elliptic(coeffs, grid, cls, f=f1, g=0.0), psi), tol=1e-10)
    hi_op = assemble_elliptic(coeffs, grid, cls, f=f1 + rng.uniform(0, 1, grid.size), g=rng.uniform(0, 0.3))
    hi = solve_obstacle_elliptic(ObstacleProblem(hi_op, psi), tol=1e-10)
    assert comparison_check(lo, hi, tol=1e-8).ok


def test_comparison_check_identical_mode():
    coeffs, grid, cls = kummer_setup(24)
    op = assemble_elliptic(coeffs, grid, cls, f=-1.0, g=0.0)
    psi = np.array([0.1 - x[0] for x in grid.nodes])
    psi[-1] = 0.0
    a = solve_obstacle_elliptic(ObstacleProblem(op, psi), tol=1e-10)
    b = solve_obstacle_elliptic(ObstacleProblem(op, psi), tol=1e-10, u0=np.full(grid.size, 0.5))
    rep = comparison_check(a, b, tol=1e-8, identical=True)
    assert rep.ok and rep.max_difference < 1e-8


def test_parabolic_with_negative_obstacle_matches_linear_march():
    coeffs, grid, cls = kummer_setup(24)
    plan = assemble_parabolic(coeffs, grid, time_grid(0.5, 10), cls, f=0.3, g=0.1, terminal=lambda x: x[0] ** 2)
    linear = plan.march().values
    sols = solve_obstacle_parabolic(plan, np.full(grid.size, -1e6), tol=1e-11)
    got = np.array([s.u for s in sols])
    assert np.abs(got - linear).max() < 1e-8


def test_parabolic_time_independent_obstacle_grows_backward():
    coeffs, grid, cls = kummer_setup(24)
    payoff = np.array([max(0.6 - x[0], 0.0) for x in grid.nodes])
    plan = assemble_parabolic(coeffs, grid, time_grid(1.0, 12), cls, f=0.0, g=0.0, terminal=payoff)
    sols = solve_obstacle_parabolic(plan, payoff, tol=TOL)
    for later, earlier in zip(sols, sols[1:]):
        assert np.all(earlier.u >= later.u - 10 * TOL)


def test_single_huge_step_is_the_elliptic_problem():
    coeffs, grid, cls = kummer_setup(24)
    psi = np.array([0.3 * max(0.5 - x[0], 0.0) for x in grid.nodes])
    elliptic = solve_obstacle_elliptic(ObstacleProblem(assemble_elliptic(coeffs, grid, cls, g=0.0), psi), tol=1e-12)
    plan = assemble_parabolic(coeffs, grid, [1e9, 0.0], cls, f=0.0, g=0.0, terminal=psi)
    last = solve_obstacle_parabolic(plan, psi, tol=1e-12)[-1]
    assert np.abs(last.u - elliptic.u).max() < 1e-7


def test_parabolic_terminal_must_dominate_obstacle():
    coeffs, grid, cls = kummer_setup(8)
    plan = assemble_parabolic(coeffs, grid, time_grid(1.0, 2), cls, terminal=0.0)
    with pytest.raises(ValueError, match="dominate"):
        solve_obstacle_parabolic(plan, np.full(grid.size, 0.5))
