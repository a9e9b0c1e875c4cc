"""Regression against products of ``A`` and ``A^T``.

* :func:`three_matrices` solves ``min ||A A^T A x - b||``;
* :func:`four_matrices` solves ``min ||(A^T A)^2 x - b||``;
* :func:`even_powers` solves ``min ||(A^T A)^j x - b||`` for any ``j >= 1``;
* :func:`odd_powers` solves ``min ||A (A^T A)^j x - b||``.

Each is a chain of the base solvers in :mod:`sketchreg.solvers`, where every
stage solves against the previous stage's output at a tolerance tightened by
powers of ``kappa(A)``. One preconditioner is drawn per top-level call and
shared by all stages (it depends on ``A`` only).
"""
from __future__ import annotations

import math
import time
import warnings

import numpy as np

from . import config, oracle
from .errors import DefinitenessError, DimensionError, ParameterError
from .solvers import (PrecisionBudget, SolveReport, StageRecord, _check_problem, _check_unit,
                      build_preconditioner, estimate_kappa, fast_linear_regression,
                      fast_psd_regression)


def _gram_power(A: np.ndarray, x: np.ndarray, j: int) -> np.ndarray:
    for _ in range(j):
        x = A.T @ (A @ x)
    return x


def _setup(A, delta: float, seed: int, kappa: float | None):
    precond = build_preconditioner(A, delta, config.derive_seed(seed, 0))
    if kappa is None:
        kappa = estimate_kappa(A, precond, seed=config.derive_seed(seed, 1))
    return precond, float(kappa)


def _stage_tol(tol: float, name: str) -> tuple[float, str]:
    if tol >= config.TOL_FLOOR:
        return tol, ""
    msg = f"{name}: tolerance {tol:.3g} floored at {config.TOL_FLOOR:g}"
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return config.TOL_FLOOR, msg


def _absorb(stages: list[StageRecord], rep: SolveReport, name: str, eps: float, delta: float,
            note: str) -> int:
    rec = rep.stage_log[0]
    rec.name, rec.eps, rec.delta = name, eps, delta
    if note:
        rec.note = f"{note}; {rec.note}" if rec.note else note
    stages.append(rec)
    return rep.iterations


def _finish(x, residual, target, stages, t0, max_iter, info) -> SolveReport:
    its = sum(s.iterations for s in stages)
    return SolveReport(solution=x, residual=float(residual), iterations=its,
                       max_iterations=max_iter, max_iterations_hit=its >= max_iter,
                       converged=bool(residual <= target), wall_time=time.perf_counter() - t0,
                       stage_log=stages, info=info)


def _check_j(j: int, max_power: int) -> int:
    if int(j) != j or j < 1:
        raise ParameterError(f"j must be an integer >= 1, got {j}")
    if j > max_power:
        raise ParameterError(f"j = {j} exceeds the cap {max_power}")
    return int(j)


def three_matrices(A, b, eps3: float, delta3: float, seed: int = 0,
                   kappa: float | None = None) -> SolveReport:
    """Solve ``min ||A A^T A x - b||`` to ``(1 + eps3) OPT + eps3 ||b||``.

    A least-squares solve ``b2 ~ argmin ||A y - b||`` at ``0.1 eps3`` is
    followed by a PSD solve ``A^T A x ~ b2`` at ``eps3 / kappa``.
    """
    t0 = time.perf_counter()
    A, b = _check_problem(A, b)
    _check_unit(eps3, "eps3", 0.1)
    _check_unit(delta3, "delta3", 0.1)
    precond, kappa = _setup(A, delta3 / 2, seed, kappa)
    stages: list[StageRecord] = []
    lin = fast_linear_regression(A, b, 0.1 * eps3, delta3 / 2, precond=precond)
    _absorb(stages, lin, "linear", 0.1 * eps3, delta3 / 2, "")
    tol, note = _stage_tol(eps3 / kappa, "psd")
    psd = fast_psd_regression(A, lin.solution, tol, delta3 / 2, precond=precond, kappa=kappa)
    _absorb(stages, psd, "psd", eps3 / kappa, delta3 / 2, note)
    x = psd.solution
    res = np.linalg.norm(A @ _gram_power(A, x, 1) - b)
    target = (1 + eps3) * oracle.range_residual(A, b) + eps3 * np.linalg.norm(b)
    return _finish(x, res, target, stages, t0, lin.max_iterations + psd.max_iterations,
                   {"kappa": kappa, "sketch_dim": precond.sketch_dim})


def four_matrices(A, b4, eps4: float, delta4: float, seed: int = 0,
                  kappa: float | None = None) -> SolveReport:
    """Solve ``min ||A^T A A^T A x - b4||`` to ``eps4 ||b4||`` with two PSD solves at ``0.1 eps4 / kappa**2``."""
    t0 = time.perf_counter()
    A, b4 = _check_problem(A, b4, rows=np.asarray(A).shape[1])
    _check_unit(eps4, "eps4", 0.1)
    _check_unit(delta4, "delta4", 0.1)
    precond, kappa = _setup(A, delta4 / 2, seed, kappa)
    eps2 = 0.1 * eps4 / kappa**2
    tol, note = _stage_tol(eps2, "psd")
    stages: list[StageRecord] = []
    rhs = b4
    cap = 0
    for k in (1, 2):
        rep = fast_psd_regression(A, rhs, tol, delta4 / 2, precond=precond, kappa=kappa)
        _absorb(stages, rep, f"psd[{k}]", eps2, delta4 / 2, note)
        cap += rep.max_iterations
        rhs = rep.solution
    x = rhs
    res = np.linalg.norm(_gram_power(A, x, 2) - b4)
    return _finish(x, res, eps4 * np.linalg.norm(b4), stages, t0, cap,
                   {"kappa": kappa, "sketch_dim": precond.sketch_dim})


def even_powers(A, b, j: int, eps_final: float, delta_final: float, seed: int = 0,
                kappa: float | None = None, max_power: int = config.MAX_POWER,
                keep_stages: bool = False) -> SolveReport:
    """Solve ``min ||(A^T A)^j x - b||`` to ``eps_final ||b||``.

    Stage ``k = 1..j`` solves ``A^T A b_k ~ b_{k-1}`` at tolerance
    ``eps_k / kappa**(2k)`` with ``eps_k = eps_final * 0.5**(j-k)`` and
    ``delta_k = delta_final / k``; the answer is ``b_j``. Tolerances below
    ``TOL_FLOOR`` are clamped and a warning is recorded in the stage log.

    With ``keep_stages=True`` the intermediate ``b_k`` are returned in
    ``info["stage_solutions"]`` for auditing.
    """
    t0 = time.perf_counter()
    A, b = _check_problem(A, b, rows=np.asarray(A).shape[1])
    j = _check_j(j, max_power)
    budget = PrecisionBudget(eps_final, delta_final)
    schedule = budget.even_schedule(j)
    precond, kappa = _setup(A, schedule[-1][1], seed, kappa)
    stages: list[StageRecord] = []
    sols = []
    rhs = b
    cap = 0
    for k, (eps_k, delta_k) in enumerate(schedule, start=1):
        tol, note = _stage_tol(eps_k / kappa ** (2 * k), f"stage {k}")
        rep = fast_psd_regression(A, rhs, tol, delta_k, precond=precond, kappa=kappa)
        _absorb(stages, rep, f"psd[{k}]", eps_k, delta_k, note)
        cap += rep.max_iterations
        rhs = rep.solution
        if keep_stages:
            sols.append(rhs.copy())
    x = rhs
    res = np.linalg.norm(_gram_power(A, x, j) - b)
    info = {"kappa": kappa, "sketch_dim": precond.sketch_dim, "j": j}
    if keep_stages:
        info["stage_solutions"] = sols
    return _finish(x, res, eps_final * np.linalg.norm(b), stages, t0, cap, info)


def odd_powers(A, b, j: int, eps_final: float, delta_final: float, seed: int = 0,
               kappa: float | None = None, max_power: int = config.MAX_POWER) -> SolveReport:
    """Solve ``min ||A (A^T A)^j x - b||`` to ``(1 + eps_final) OPT + eps_final ||b||``.

    A least-squares solve at ``(0.1 eps_final, delta_final / 2)`` produces
    ``b1 ~ argmin ||A y - b||``; :func:`even_powers` then solves
    ``(A^T A)^j x ~ b1`` at ``(eps_final / kappa, delta_final / 2)``.
    """
    t0 = time.perf_counter()
    A, b = _check_problem(A, b)
    j = _check_j(j, max_power)
    PrecisionBudget(eps_final, delta_final)
    precond, kappa = _setup(A, delta_final / 2, seed, kappa)
    stages: list[StageRecord] = []
    lin = fast_linear_regression(A, b, 0.1 * eps_final, delta_final / 2, precond=precond)
    _absorb(stages, lin, "linear", 0.1 * eps_final, delta_final / 2, "")
    even = even_powers(A, lin.solution, j, eps_final / kappa, delta_final / 2,
                       seed=config.derive_seed(seed, 2), kappa=kappa, max_power=max_power)
    stages.extend(even.stage_log)
    x = even.solution
    res = np.linalg.norm(A @ _gram_power(A, x, j) - b)
    target = (1 + eps_final) * oracle.range_residual(A, b) + eps_final * np.linalg.norm(b)
    return _finish(x, res, target, stages, t0, lin.max_iterations + even.max_iterations,
                   {"kappa": kappa, "sketch_dim": precond.sketch_dim, "j": j})


def induction_audit(A, b, report: SolveReport) -> list[dict]:
    """Check the per-stage invariants of an :func:`even_powers` run exactly.

    For every stage ``k`` it evaluates ``||(A^T A)^k b_k - b||`` in exact
    arithmetic against ``eps_k ||b||`` and ``||b_k||`` against
    ``2 sigma_min(A)**(-2k) ||b||``. Needs ``keep_stages=True`` on the run.
    """
    sols = report.info.get("stage_solutions")
    if sols is None:
        raise ParameterError("report was produced without keep_stages=True")
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    smin = oracle.spectrum(A).sigma_min
    out = []
    for k, (bk, rec) in enumerate(zip(sols, report.stage_log), start=1):
        res = oracle.exact_power_residual(A, bk, b, k)
        norm_bound = 2 * smin ** (-2 * k) * bnorm
        out.append({
            "stage": k,
            "eps_k": rec.eps,
            "residual": res / bnorm if bnorm else 0.0,
            "residual_ok": res <= rec.eps * bnorm,
            "norm": float(np.linalg.norm(bk)),
            "norm_bound": norm_bound,
            "norm_ok": float(np.linalg.norm(bk)) <= norm_bound,
        })
    return out


def reduce_attention_to_odd(X, W, y=None):
    """Rewrite ``min_v ||X W X^T X v - y||`` as ``min_u ||Xt Xt^T Xt u - y||``.

    ``W = U U^T`` by Cholesky and ``Xt = X U``; a solution ``u`` of the
    reduced problem maps back to ``v = U u`` with the identical residual.
    ``y`` is accepted for signature symmetry and only shape-checked.

    Returns
    -------
    X_tilde : ndarray
    recover : callable
        ``recover(u) -> U @ u``.
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or W.shape != (X.shape[1], X.shape[1]):
        raise DimensionError(f"W must be {X.shape[1]}x{X.shape[1]}, got {W.shape}")
    if y is not None and np.asarray(y).shape[0] != X.shape[0]:
        raise DimensionError("y must have one entry per row of X")
    if np.max(np.abs(W - W.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(W), initial=0.0)):
        raise DefinitenessError("W is not symmetric")
    try:
        U = np.linalg.cholesky((W + W.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("W is not positive definite") from exc

    def recover(u):
        return U @ np.asarray(u, dtype=np.float64)

    return X @ U, recover
