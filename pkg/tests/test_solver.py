import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsssc.core import (DUAL_TOL, FEAS_TOL, ConvergenceError, DegenerateDualError,
                        DimensionMismatchError, InfeasibleError, InvalidParameterError)
from lsssc.generator import GeneratorConfig, NoiseSpec, generate
from lsssc.solver import (SolverOptions, dual_direction, lsssc_objective, solve_column,
                          solve_lsssc, solve_noiseless_l1)
from oracles import l1_vertex_oracle, lasso_sign_oracle


def _instance(seed, n, k, normalize=True):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, k))
    if normalize:
        A /= np.linalg.norm(A, axis=0)
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x), A


def _assert_kkt(sol, x, A):
    res = sol.residuals(x, A)
    assert res["feasibility"] <= FEAS_TOL
    assert res["slackness"] <= FEAS_TOL
    assert res["dual_inf"] <= 1 + DUAL_TOL
    assert res["sign"] <= DUAL_TOL


def test_zero_input_gives_zero_solution():
    A = np.random.default_rng(0).standard_normal((4, 3))
    sol = solve_column(np.zeros(4), A, 2.0)
    assert not sol.c.any() and not sol.e.any() and not sol.nu.any()
    assert sol.objective == 0.0 and sol.degenerate


def test_scalar_lasso_closed_form():
    x = np.array([0.6, 0.8])
    sol = solve_column(x, x[:, None], 4.0)
    np.testing.assert_allclose(sol.c, [0.75], atol=1e-12)
    np.testing.assert_allclose(sol.e, x / 4, atol=1e-12)
    np.testing.assert_allclose(sol.nu, x, atol=1e-12)
    assert sol.objective == pytest.approx(0.75 + 0.5 * 4 * (1 / 16))
    assert sol.support == (0,)


def test_scalar_lasso_below_threshold():
    x = np.array([0.6, 0.8])
    sol = solve_column(x, x[:, None], 0.5)
    assert sol.c[0] == 0.0
    np.testing.assert_allclose(sol.e, x)
    assert sol.support == ()


def test_matches_sign_pattern_oracle():
    x, A = _instance(1, 8, 5, normalize=False)
    sol = solve_column(x, A, 10.0)
    _, obj = lasso_sign_oracle(x, A, 10.0)
    assert abs(sol.objective - obj) <= 1e-8
    _assert_kkt(sol, x, A)


@given(st.integers(0, 2 ** 32), st.integers(2, 10), st.integers(1, 6),
       st.sampled_from([0.3, 1.0, 4.0, 25.0]))
def test_kkt_certificate_completeness(seed, n, k, lam):
    x, A = _instance(seed, n, k)
    sol = solve_column(x, A, lam)
    _assert_kkt(sol, x, A)
    assert set(sol.support) == set(np.flatnonzero(np.abs(sol.c) > 1e-6 * max(1, np.abs(sol.c).max())))


@given(st.integers(0, 2 ** 32), st.integers(2, 8), st.integers(1, 5))
def test_history_never_below_optimum(seed, n, k):
    # ADMM iterates are not a descent sequence, but every one is primal
    # feasible, so no recorded objective can undercut the optimum.
    x, A = _instance(seed, n, k)
    sol = solve_column(x, A, 5.0, SolverOptions(polish=False))
    assert sol.history
    assert min(sol.history) >= sol.objective - 1e-10


def test_non_convergence_carries_residuals():
    x, A = _instance(3, 6, 4)
    with pytest.raises(ConvergenceError) as info:
        solve_column(x, A, 50.0, SolverOptions(max_iterations=2, polish=False))
    assert set(info.value.residuals) == {"primal", "dual"}
    assert info.value.residuals["primal"] > 0


def test_parameter_errors():
    x, A = _instance(0, 4, 2)
    for lam in (0.0, -1.0, np.nan):
        with pytest.raises(InvalidParameterError):
            solve_column(x, A, lam)
    with pytest.raises(DimensionMismatchError):
        solve_column(x, A[:3], 1.0)
    with pytest.raises(DimensionMismatchError):
        solve_column(x, np.zeros((4, 0)), 1.0)
    with pytest.raises(InvalidParameterError):
        SolverOptions(rho=0.0)
    with pytest.raises(InvalidParameterError):
        SolverOptions(eps_primal=0.0)


def test_small_lambda_forces_zero_solution():
    x, A = _instance(5, 7, 4)
    lam = 0.99 / np.abs(A.T @ x).max()
    assert not solve_column(x, A, lam).c.any()


@given(st.integers(0, 2 ** 32), st.floats(0.2, 5.0), st.sampled_from([1.0, 3.0, 12.0]))
def test_scaling_covariance(seed, s, lam):
    x, A = _instance(seed, 6, 4)
    a = solve_column(x, A, lam)
    b = solve_column(s * x, s * A, lam / s ** 2)
    np.testing.assert_allclose(b.c, a.c, atol=1e-8)
    np.testing.assert_allclose(b.e, s * a.e, atol=1e-8)


def test_two_identical_columns():
    x = np.array([0.6, 0.8, 0.0])
    sol = solve_lsssc(np.column_stack([x, x]), 4.0)
    np.testing.assert_allclose(sol.C, [[0, 0.75], [0.75, 0]], atol=1e-12)


@given(st.integers(0, 2 ** 32))
def test_full_matrix_structure(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 5))
    sol = solve_lsssc(X, 8.0)
    assert np.all(np.diag(sol.C) == 0.0)
    total = sum(col.objective for col in sol.columns)
    assert abs(total - lsssc_objective(X, sol.C, 8.0)) <= 1e-10
    assert abs(sol.objective - total) <= 1e-12
    for i in range(5):
        single = solve_column(X[:, i], np.delete(X, i, axis=1), 8.0)
        np.testing.assert_allclose(np.delete(sol.C[:, i], i), single.c, atol=1e-9)


def test_zero_column_in_full_matrix():
    X = np.random.default_rng(2).standard_normal((5, 4))
    X[:, 2] = 0.0
    sol = solve_lsssc(X, 3.0)
    assert sol.columns[2].degenerate
    assert not sol.C[:, 2].any()


def test_full_solve_is_deterministic():
    X = np.random.default_rng(9).standard_normal((8, 10))
    a, b = solve_lsssc(X, 6.0), solve_lsssc(X, 6.0)
    assert np.array_equal(a.C, b.C)


def test_dual_direction_examples():
    x = np.array([0.6, 0.8])
    np.testing.assert_allclose(dual_direction(x, x[:, None], 4.0), x, atol=1e-12)
    with pytest.raises(DegenerateDualError):
        dual_direction(np.zeros(2), x[:, None], 4.0)


def test_dual_direction_from_nu_or_residual():
    x, A = _instance(4, 8, 6)
    sol = solve_column(x, A, 7.0)
    v = dual_direction(x, A, 7.0, solution=sol)
    assert abs(np.linalg.norm(v) - 1) <= 1e-12
    w = 7.0 * sol.e
    np.testing.assert_allclose(v, w / np.linalg.norm(w), atol=1e-8)


def test_dual_uniqueness_under_random_start():
    x, A = _instance(8, 9, 7)
    a = solve_column(x, A, 9.0)
    b = solve_column(x, A, 9.0, SolverOptions(init_seed=123))
    np.testing.assert_allclose(a.nu, b.nu, atol=1e-6)


def test_noiseless_single_atom_and_symmetric_pair():
    y = np.array([0.0, 0.6, 0.8])
    sol = solve_noiseless_l1(y, y[:, None])
    np.testing.assert_allclose(sol.c, [1.0], atol=1e-10)
    sol = solve_noiseless_l1(y, np.column_stack([y, -y]))
    assert sol.l1 == pytest.approx(1.0, abs=1e-10)


def test_noiseless_matches_vertex_oracle():
    rng = np.random.default_rng(6)
    U = np.linalg.qr(rng.standard_normal((7, 3)))[0]
    B = U @ rng.standard_normal((3, 5))
    B /= np.linalg.norm(B, axis=0)
    y = U @ rng.standard_normal(3)
    sol = solve_noiseless_l1(y, B)
    assert abs(sol.l1 - l1_vertex_oracle(y, B)) <= 1e-8
    assert np.abs(B @ sol.c - y).max() <= 1e-8
    assert abs(sol.l1 - y @ sol.nu) <= 1e-6
    assert np.abs(B.T @ sol.nu).max() <= 1 + 1e-8
    assert np.linalg.norm(sol.nu - U @ (U.T @ sol.nu)) <= 1e-10


def test_noiseless_infeasible():
    B = np.eye(3)[:, :2]
    with pytest.raises(InfeasibleError):
        solve_noiseless_l1(np.array([0.0, 0.0, 1.0]), B)


def test_degenerate_low_dimensional_columns_converge():
    # many columns in a 2-d span make the lasso nearly tied; the solve must still finish exactly
    for seed in range(10):
        ds = generate(GeneratorConfig(30, (2, 2), (10, 10), NoiseSpec("none"), seed=seed))
        sol = solve_lsssc(ds.X, 2.58)
        assert all(col.polished for col in sol.columns)
