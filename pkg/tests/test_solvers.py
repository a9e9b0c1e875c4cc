import math

import numpy as np
import pytest

from sketchreg import oracle
from sketchreg.errors import DimensionError, ParameterError, RankError
from sketchreg.solvers import (PrecisionBudget, build_preconditioner, default_max_iter,
                               estimate_kappa, fast_linear_regression, fast_psd_regression,
                               gd_well_conditioned)


# --- preconditioner ---------------------------------------------------------


def test_preconditioner_orthonormal_columns():
    A = oracle.gen_matrix(256, 8, 1.0, 0)
    P = build_preconditioner(A, 0.05, seed=1)
    assert P.kappa_AR <= 1.23
    s = np.linalg.svd(A @ P.R, compute_uv=False)
    assert 0.9 <= s[-1] and s[0] <= 1.1


def test_preconditioner_kappa_100_many_seeds():
    A = oracle.gen_matrix(1024, 16, 100.0, 3)
    good = sum(build_preconditioner(A, 0.05, seed=s).kappa_AR <= 1.3 for s in range(100))
    assert good >= 95


def test_preconditioner_rank_error():
    A = np.random.default_rng(0).standard_normal((64, 3))
    A[:, 2] = A[:, 1]
    with pytest.raises(RankError):
        build_preconditioner(A, 0.05, seed=0)


def test_preconditioner_deterministic():
    A = oracle.gen_matrix(128, 4, 10.0, 2)
    np.testing.assert_array_equal(build_preconditioner(A, 0.05, 7).R,
                                  build_preconditioner(A, 0.05, 7).R)


def test_estimate_kappa_exact_and_iterative():
    A = oracle.gen_matrix(2048, 520, 40.0, 1)
    P = build_preconditioner(A, 0.05, seed=0)
    est = estimate_kappa(A, P)
    assert 40.0 <= est <= 40.0 * 1.5 * 1.2
    small = oracle.gen_matrix(64, 4, 40.0, 1)
    assert estimate_kappa(small) == pytest.approx(40.0, rel=1e-8)
    with pytest.raises(ParameterError):
        estimate_kappa(A)


# --- gradient descent -------------------------------------------------------


def test_gd_identity_one_step():
    y = np.array([3.0, -1.0, 2.0])
    res = gd_well_conditioned(np.eye(3), y, 1e-12, 10)
    np.testing.assert_allclose(res.x, y)
    assert res.iterations == 1 and res.converged


def test_gd_contraction_factor():
    B = np.diag([0.8, 1.2])
    xs = np.ones(2)
    y = B @ xs
    errs = []
    for t in range(1, 8):
        x = gd_well_conditioned(B, y, 0.0, t).x
        errs.append(np.linalg.norm(B @ (x - xs)))
    e0 = np.linalg.norm(y)
    ratios = [errs[0] / e0] + [b / a for a, b in zip(errs, errs[1:])]
    assert max(ratios) <= 9 / 16


def test_gd_spectrum_near_one_reaches_1e10():
    g = np.random.default_rng(0)
    U, _ = np.linalg.qr(g.standard_normal((6, 6)))
    V, _ = np.linalg.qr(g.standard_normal((6, 6)))
    B = (U * np.linspace(0.9, 1.1, 6)) @ V.T
    xs = g.standard_normal(6)
    res = gd_well_conditioned(B, B @ xs, 0.0, 30)
    assert np.linalg.norm(res.x - xs) <= 1e-10 * np.linalg.norm(xs)


def test_gd_flags_non_convergence():
    res = gd_well_conditioned(np.diag([0.1, 1.0]), [1.0, 1.0], 1e-12, 3)
    assert not res.converged and res.iterations == 3


# --- least squares ----------------------------------------------------------


def test_linear_identity():
    b = np.array([1.0, -2.0, 0.5, 4.0])
    rep = fast_linear_regression(np.eye(4), b, 1e-6, 0.05)
    np.testing.assert_allclose(rep.solution, b, atol=1e-10)
    assert rep.residual <= 1e-10


def test_linear_two_by_one():
    rep = fast_linear_regression(np.ones((2, 1)), [1.0, 3.0], 1e-6, 0.05)
    assert rep.solution[0] == pytest.approx(2.0, abs=1e-10)
    assert rep.residual == pytest.approx(math.sqrt(2), rel=1e-10)


def test_linear_random_high_accuracy():
    A = oracle.gen_matrix(256, 8, 50.0, 4)
    b = np.random.default_rng(4).standard_normal(256)
    rep = fast_linear_regression(A, b, 1e-8, 0.05, seed=2)
    opt = oracle.svd_lstsq(A, b).exact_cost
    assert rep.converged
    assert np.linalg.norm(A @ rep.solution - b) <= (1 + 1e-8) * opt


def test_linear_zero_rhs_and_errors():
    rep = fast_linear_regression(np.eye(3), np.zeros(3), 1e-3, 0.05)
    np.testing.assert_array_equal(rep.solution, np.zeros(3))
    assert rep.residual == 0.0
    with pytest.raises(DimensionError):
        fast_linear_regression(np.eye(3), np.ones(2), 1e-3, 0.05)
    with pytest.raises(ParameterError):
        fast_linear_regression(np.eye(3), np.ones(3), 0.5, 0.05)
    A = np.ones((8, 2))
    with pytest.raises(RankError):
        fast_linear_regression(A, np.ones(8), 1e-3, 0.05)


def test_linear_iteration_cap_flagged():
    A = oracle.gen_matrix(256, 8, 50.0, 4)
    b = np.random.default_rng(4).standard_normal(256)
    rep = fast_linear_regression(A, b, 1e-8, 0.05, max_iter=0)
    assert rep.max_iterations_hit and rep.iterations == 0


# --- PSD regression ---------------------------------------------------------


def test_psd_identity():
    rep = fast_psd_regression(np.eye(2), [3.0, -1.0], 1e-8, 0.05)
    np.testing.assert_allclose(rep.solution, [3.0, -1.0], atol=1e-10)


def test_psd_diag():
    rep = fast_psd_regression(np.diag([1.0, 2.0]), [1.0, 4.0], 1e-8, 0.05)
    np.testing.assert_allclose(rep.solution, [1.0, 1.0], atol=1e-7)


def test_psd_random_against_svd():
    A = oracle.gen_matrix(512, 8, 100.0, 5)
    b = np.random.default_rng(5).standard_normal(8)
    rep = fast_psd_regression(A, b, 1e-6, 0.05, seed=5)
    assert np.linalg.norm(A.T @ A @ rep.solution - b) <= 1e-6 * np.linalg.norm(b)
    xs = oracle.psd_power_solution(A, b, 1)
    assert np.linalg.norm(rep.solution - xs) <= 1e-6 * np.linalg.norm(b)  # sigma_min = 1


def test_psd_zero_rhs():
    rep = fast_psd_regression(np.eye(3), np.zeros(3), 1e-3, 0.05)
    assert rep.iterations == 0 and rep.residual == 0.0
    np.testing.assert_array_equal(rep.solution, np.zeros(3))


def test_psd_rejects_bad_eps():
    with pytest.raises(ParameterError):
        fast_psd_regression(np.eye(2), np.ones(2), 0.0, 0.05)
    with pytest.raises(ParameterError):
        fast_psd_regression(np.eye(2), np.ones(2), 1e-3, 0.2)


# --- contracts over seeds ---------------------------------------------------


@pytest.mark.parametrize("kappa", [10.0, 1000.0])
def test_backward_error_contract(kappa):
    A = oracle.gen_matrix(1024, 16, kappa, 11)
    g = np.random.default_rng(11)
    b2 = g.standard_normal(16)
    b1 = g.standard_normal(1024)
    opt = oracle.svd_lstsq(A, b1).exact_cost
    psd_ok = lin_ok = 0
    for s in range(20):
        p = fast_psd_regression(A, b2, 1e-6, 0.05, seed=s)
        psd_ok += np.linalg.norm(A.T @ (A @ p.solution) - b2) <= 1e-6 * np.linalg.norm(b2)
        q = fast_linear_regression(A, b1, 1e-6, 0.05, seed=s)
        lin_ok += np.linalg.norm(A @ q.solution - b1) <= (1 + 1e-6) * opt
    assert psd_ok >= 19 and lin_ok >= 19


def test_forward_error_lemmas():
    for s in range(20):
        A = oracle.gen_matrix(200, 6, 20.0, 100 + s)
        g = np.random.default_rng(s)
        b1, b2 = g.standard_normal(200), g.standard_normal(6)
        smin = oracle.spectrum(A).sigma_min
        eps1 = 1e-4
        q = fast_linear_regression(A, b1, eps1, 0.05, seed=s)
        ref = oracle.svd_lstsq(A, b1)
        if np.linalg.norm(A @ q.solution - b1) <= (1 + eps1) * ref.exact_cost:
            err = np.linalg.norm(q.solution - ref.exact_solution)
            assert err <= 2 * math.sqrt(eps1) * ref.exact_cost / smin
        eps2 = 1e-4
        p = fast_psd_regression(A, b2, eps2, 0.05, seed=s)
        xs = oracle.psd_power_solution(A, b2, 1)
        if np.linalg.norm(A.T @ (A @ p.solution) - b2) <= eps2 * np.linalg.norm(b2):
            assert np.linalg.norm(p.solution - xs) <= eps2 * np.linalg.norm(b2) / smin**2 * (1 + 1e-9)


def test_psd_iterations_grow_per_decade():
    A = oracle.gen_matrix(1024, 16, 100.0, 6)
    b = np.random.default_rng(6).standard_normal(16)
    its = [fast_psd_regression(A, b, 10.0**-k, 0.05, seed=1).iterations for k in range(2, 11, 2)]
    steps = np.diff(its)
    assert np.all(steps >= 0) and np.all(steps <= 4)


# --- budgets ----------------------------------------------------------------


def test_precision_budget_schedule():
    sched = PrecisionBudget(1e-6, 0.05).even_schedule(3)
    assert sched == [(1e-6 * 0.25, 0.05), (1e-6 * 0.5, 0.025), (1e-6, 0.05 / 3)]
    with pytest.raises(ParameterError):
        PrecisionBudget(0.5, 0.05)
    with pytest.raises(ParameterError):
        PrecisionBudget(1e-3, 0.05).even_schedule(0)


def test_default_max_iter():
    assert default_max_iter(1.0, 0.5) == 60
    assert default_max_iter(100.0, 1e-6) == 10 * math.ceil(math.log2(1e8)) + 50
