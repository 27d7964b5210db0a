import numpy as np
import pytest

from ccmkt.exceptions import DimensionLimit, Infeasible
from ccmkt.qp import QpProblem, kkt_residuals, solve_qp
from oracles import grid_qp_minimum, random_tiny_qp


def check_kkt(problem, sol, reg=0.0):
    res = kkt_residuals(problem, sol, reg)
    scale = 1.0 + np.abs(problem.q).max(initial=0.0)
    assert res["stationarity"] <= 1e-8 * scale
    assert res["primal"] <= 1e-9 * max(1.0, np.abs(problem.b_ineq).max(initial=0.0), np.abs(problem.b_eq).max(initial=0.0))
    assert res["complementarity"] <= 1e-8 * scale
    assert res["dual_sign"] <= 0.0


def test_symmetric_equality_split():
    p = QpProblem(Q=np.diag([2.0, 2.0]), q=np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[1.0])
    sol = solve_qp(p)
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-12)
    # 1/2 x'Qx at (0.5, 0.5) is 0.5
    assert sol.objective == pytest.approx(0.5, abs=1e-12)
    check_kkt(p, sol)


def test_two_producer_dispatch_and_balance_dual():
    p = QpProblem(
        Q=np.diag([2.0, 6.0]), q=[10.0, 3.0],
        A_ineq=[[1, 0], [-1, 0], [0, 1], [0, -1]], b_ineq=[32, -10, 44, -10],
        A_eq=[[1.0, 1.0]], b_eq=[50.0],
    )
    sol = solve_qp(p)
    np.testing.assert_allclose(sol.x, [32.0, 18.0], atol=1e-9)
    assert sol.duals_eq[0] == pytest.approx(111.0, abs=1e-9)
    assert sol.active_set == (0,)
    check_kkt(p, sol)


def test_contradictory_bounds_infeasible():
    p = QpProblem(Q=np.diag([2.0, 2.0]), q=np.zeros(2), A_ineq=[[1.0, 0.0], [-1.0, 0.0]], b_ineq=[-1.0, -1.0])
    with pytest.raises(Infeasible):
        solve_qp(p)


def test_dimension_limits():
    with pytest.raises(DimensionLimit):
        QpProblem(Q=np.eye(9), q=np.zeros(9))
    with pytest.raises(DimensionLimit):
        QpProblem(Q=np.eye(2), q=np.zeros(2), A_ineq=np.ones((17, 2)), b_ineq=np.ones(17))
    with pytest.raises(DimensionLimit):
        QpProblem(Q=np.eye(2), q=np.zeros(2), A_eq=np.ones((3, 2)), b_eq=np.ones(3))


def test_rejects_indefinite_and_asymmetric():
    with pytest.raises(ValueError):
        QpProblem(Q=[[1.0, 2.0], [2.0, 1.0]], q=[0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(Q=[[1.0, 0.5], [0.0, 1.0]], q=[0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(Q=np.eye(2), q=[np.nan, 0.0])


def test_problem_arrays_read_only():
    p = QpProblem(Q=np.eye(2), q=[1.0, 2.0])
    with pytest.raises(ValueError):
        p.q[0] = 5.0


def test_auto_regularization_only_on_zero_diagonal():
    # linear in x2 with a bound: the ridge makes the KKT systems solvable
    p = QpProblem(Q=np.diag([2.0, 0.0]), q=[0.0, 1.0], A_ineq=[[0.0, -1.0]], b_ineq=[0.0])
    sol = solve_qp(p)
    np.testing.assert_allclose(sol.x, [0.0, 0.0], atol=1e-12)


@pytest.mark.slow
def test_matches_lattice_oracle():
    # the full 200-problem run lives in the acceptance suite
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(60):
        problem, lo, hi = random_tiny_qp(rng)
        sol = solve_qp(problem)
        grid = grid_qp_minimum(problem, lo, hi)
        assert grid >= sol.objective - 1e-9
        worst = max(worst, abs(grid - sol.objective))
    assert worst <= 1e-3


def test_kkt_conditions_on_random_problems():
    rng = np.random.default_rng(11)
    for _ in range(300):
        problem, _, _ = random_tiny_qp(rng, max_vars=4, max_rows=10)
        if rng.random() < 0.5 and problem.n >= 2:
            # pass the equality through a known feasible point
            x0 = solve_qp(problem).x
            a = rng.normal(size=(1, problem.n))
            problem = QpProblem(problem.Q, problem.q, problem.A_ineq, problem.b_ineq, a, a @ x0)
        sol = solve_qp(problem)
        check_kkt(problem, sol)


def test_adding_a_constraint_never_lowers_the_minimum():
    rng = np.random.default_rng(5)
    for _ in range(200):
        problem, lo, hi = random_tiny_qp(rng, max_vars=3, max_rows=8)
        base = solve_qp(problem).objective
        # cut through a feasible point so the tighter problem stays feasible
        xf = solve_qp(QpProblem(np.eye(problem.n), rng.normal(size=problem.n), problem.A_ineq, problem.b_ineq)).x
        a = rng.normal(size=problem.n)
        tighter = QpProblem(
            problem.Q, problem.q,
            np.vstack([problem.A_ineq, a]), np.append(problem.b_ineq, a @ xf + rng.uniform(0.0, 0.3)),
        )
        assert solve_qp(tighter).objective >= base - 1e-9


def test_deterministic():
    rng = np.random.default_rng(8)
    problem, _, _ = random_tiny_qp(rng)
    a, b = solve_qp(problem), solve_qp(problem)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.duals_ineq, b.duals_ineq)
