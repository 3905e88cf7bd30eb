import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_mpc.errors import InvalidParameterError, NumericalError
from platoon_mpc.qp import (INFEASIBLE, ActiveSetSolver, QpProblem, dare_residual, kkt_residuals,
                            solve_dare, solve_equality_kkt, solve_qp)
from platoon_mpc.validation import brute_force_qp, random_qp, scalar_dare_root


def test_equality_kkt_sign_convention():
    sol = solve_equality_kkt(np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0])
    np.testing.assert_allclose(sol.z, [1.0, 1.0])
    np.testing.assert_allclose(sol.multipliers, [-1.0])


def test_equality_kkt_matches_dense_solve(rng):
    g = rng.standard_normal((3, 3))
    h = g @ g.T + np.eye(3)
    f = rng.standard_normal(3)
    c = rng.standard_normal((2, 3))
    d = rng.standard_normal(2)
    sol = solve_equality_kkt(h, f, c, d)
    kkt = np.block([[h, c.T], [c, np.zeros((2, 2))]])
    ref = np.linalg.solve(kkt, np.concatenate([-f, d]))
    np.testing.assert_allclose(sol.z, ref[:3], atol=1e-10)
    np.testing.assert_allclose(sol.multipliers, ref[3:], atol=1e-10)


def test_equality_kkt_drops_dependent_rows():
    sol = solve_equality_kkt(np.eye(2), np.zeros(2), [[1.0, 1.0], [2.0, 2.0]], [2.0, 4.0])
    assert sol.dropped == [1]
    np.testing.assert_allclose(sol.z, [1.0, 1.0])


def test_unconstrained_and_bound():
    sol = solve_qp(QpProblem(np.eye(2), [-2.0, -2.0], [[1.0, 0.0]], [1.0]))
    assert sol.optimal
    np.testing.assert_allclose(sol.z, [1.0, 2.0])
    assert sol.active_set == [0]
    np.testing.assert_allclose(sol.multipliers, [1.0])
    res = kkt_residuals(QpProblem(np.eye(2), [-2.0, -2.0], [[1.0, 0.0]], [1.0]), sol)
    assert max(res["stationarity"], res["primal"], -res["dual"], res["complementarity"]) < 1e-10


def test_infeasible_detected():
    problem = QpProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    sol = solve_qp(problem)
    assert sol.status == INFEASIBLE and not sol.optimal


def test_phase_one_start_when_origin_infeasible():
    # x >= 3 and x <= 4 with the unconstrained minimum at 0
    problem = QpProblem(np.eye(1), [0.0], [[-1.0], [1.0]], [-3.0, 4.0])
    sol = solve_qp(problem)
    assert sol.optimal
    np.testing.assert_allclose(sol.z, [3.0])


def test_duplicate_rows_do_not_cycle():
    # degenerate vertex: the bound appears three times with different scalings
    c = np.array([[1.0, 0.0], [2.0, 0.0], [1.0, 1e-13], [0.0, 1.0]])
    problem = QpProblem(np.eye(2), [-5.0, -5.0], c, [1.0, 2.0, 1.0, 1.0])
    sol = solve_qp(problem, warm_start=np.zeros(2))
    assert sol.optimal
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-10)
    assert sol.iterations < 20


def test_warm_start_reaches_same_optimum(rng):
    problem = random_qp(rng, 5, 8)
    cold = solve_qp(problem)
    warm = solve_qp(problem, warm_start=cold.z, active_set=cold.active_set)
    np.testing.assert_allclose(warm.z, cold.z, atol=1e-10)
    assert warm.iterations <= 2
    # a bogus active set is discarded when its point is infeasible
    again = solve_qp(problem, active_set=list(range(8)))
    np.testing.assert_allclose(again.z, cold.z, atol=1e-8)


def test_factor_cache_reused():
    solver = ActiveSetSolver()
    p = QpProblem(np.eye(2) * 2, [1.0, 1.0])
    solver.solve(p)
    first = solver._chol_cache
    solver.solve(QpProblem(np.eye(2) * 2, [3.0, 1.0]))
    assert solver._chol_cache is first


def test_rejects_indefinite_or_asymmetric_hessian():
    with pytest.raises(InvalidParameterError):
        solve_qp(QpProblem(np.diag([1.0, -1.0]), [0.0, 0.0]))
    with pytest.raises(InvalidParameterError):
        solve_qp(QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), [0.0, 0.0]))
    with pytest.raises(InvalidParameterError):
        QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [1.0, 2.0])


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 6), m_c=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
def test_matches_enumeration_oracle(n, m_c, seed):
    problem = random_qp(np.random.default_rng(seed), n, m_c)
    sol = solve_qp(problem)
    z_ref, obj_ref = brute_force_qp(problem)
    assert sol.optimal
    assert np.linalg.norm(sol.z - z_ref) <= 1e-7
    assert abs(sol.objective - obj_ref) <= 1e-9
    assert np.all(problem.c_mat @ sol.z <= problem.c_vec + 1e-8)
    assert np.all(sol.multipliers >= -1e-6)


def test_scalar_dare():
    sol = solve_dare(0.5, 1.0, 1.0, 1.0)
    p = float(sol.p_mat[0, 0])
    # root of p^2 - p/4 - 1 = 0
    assert p == pytest.approx((1.0 + np.sqrt(65.0)) / 8.0, abs=1e-12)
    assert p == pytest.approx(1.132782, abs=5e-7)
    assert p == pytest.approx(scalar_dare_root(0.5, 1.0, 1.0, 1.0), abs=1e-10)
    assert p == pytest.approx(0.25 * p - 0.25 * p * p / (1 + p) + 1.0, abs=1e-10)


def test_dare_matches_scipy(rng):
    import scipy.linalg as sla

    a = rng.standard_normal((3, 3)) * 0.5
    b = rng.standard_normal((3, 2))
    q = np.eye(3)
    r = np.eye(2)
    sol = solve_dare(a, b, q, r)
    np.testing.assert_allclose(sol.p_mat, sla.solve_discrete_are(a, b, q, r), rtol=1e-8)
    assert dare_residual(a, b, q, r, sol.p_mat) <= 1e-9


def test_dare_failures():
    with pytest.raises(NumericalError):
        # unstable and uncontrollable mode: the iteration diverges
        solve_dare(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1), max_iter=5000)
    with pytest.raises(InvalidParameterError):
        solve_dare(np.eye(2), np.ones((2, 1)), np.eye(2), -np.eye(1))
