"""Sketch-and-precondition solvers for ``min ||A x - b||`` and ``min ||A^T A x - b||``.

Both solvers share one preconditioner: an SRHT ``S`` with distortion
``EPS_OSE``, the QR factorization ``S A = Q T`` and ``R = T^{-1}``. Then
``A R`` has singular values close to one and plain gradient descent on the
preconditioned normal equations contracts geometrically.

Stopping rules test the quantity each solver promises, evaluated on the
current iterate:

* least squares: ``||A x - b|| <= (1 + eps) OPT``, certified from the gradient
  norm and the measured smallest singular value of ``A R``;
* PSD regression: ``||A^T A x - b|| <= eps ||b||`` directly.

Every loop is capped and also stops when the residual has stagnated at the
floating-point floor; the best iterate seen is returned and the report is
flagged when the target was not met.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from . import config
from .errors import DimensionError, ParameterError, RankError
from .sketch import SrhtSketch, embedding_dim, srht_apply, srht_new

_EPS_MACH = np.finfo(np.float64).eps
#: Iterations without a 1% improvement of the best residual before giving up.
STAGNATION_PATIENCE = 6


@dataclass
class Preconditioner:
    """``R`` such that ``S A R`` has orthonormal columns.

    ``ar_singular`` holds the extreme singular values of ``A R`` measured
    after construction; ``kappa_AR`` is their ratio.
    """

    R: np.ndarray
    kappa_AR: float
    sketch_dim: int
    seed: int
    Q: np.ndarray
    sketch: SrhtSketch
    ar_singular: tuple[float, float]
    a_singular: tuple[float, float] | None = None


@dataclass
class StageRecord:
    name: str
    eps: float
    delta: float
    tolerance: float
    iterations: int
    residual: float
    converged: bool
    note: str = ""


@dataclass
class SolveReport:
    """Outcome of a solve.

    ``residual`` is the final objective value ``||M x - b||`` of the problem
    that was solved (absolute, not relative). ``stage_log`` lists one
    :class:`StageRecord` per inner solve for chained algorithms.
    """

    solution: np.ndarray
    residual: float
    iterations: int
    max_iterations: int
    max_iterations_hit: bool = False
    converged: bool = True
    wall_time: float = 0.0
    stage_log: list[StageRecord] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "solution": [float(v) for v in self.solution],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "max_iterations": int(self.max_iterations),
            "max_iterations_hit": bool(self.max_iterations_hit),
            "converged": bool(self.converged),
            "wall_time": float(self.wall_time),
            "stage_log": [asdict(s) for s in self.stage_log],
        }
        out.update({k: _jsonable(v) for k, v in self.info.items()})
        return out


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass(frozen=True)
class PrecisionBudget:
    """Final accuracy and failure probability plus the derived stage schedules."""

    eps_final: float
    delta_final: float

    def __post_init__(self):
        _check_unit(self.eps_final, "eps_final", 0.1)
        _check_unit(self.delta_final, "delta_final", 0.1)

    def even_schedule(self, j: int) -> list[tuple[float, float]]:
        """``[(eps_k, delta_k)]`` for ``k = 1..j``: ``eps_final * 0.5**(j-k)`` and ``delta_final / k``."""
        if j < 1:
            raise ParameterError(f"j must be >= 1, got {j}")
        return [(self.eps_final * 0.5 ** (j - k), self.delta_final / k) for k in range(1, j + 1)]


def _check_unit(v: float, name: str, upper: float = 1.0) -> None:
    if not (0.0 < float(v) < upper):
        raise ParameterError(f"{name} must lie in (0, {upper}), got {v}")


def _check_problem(A, b, rows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"A must be a matrix, got shape {A.shape}")
    n, d = A.shape
    if n < d or d < 1:
        raise DimensionError(f"need n >= d >= 1, got {n} x {d}")
    b = np.asarray(b, dtype=np.float64).ravel()
    want = n if rows is None else rows
    if b.shape[0] != want:
        raise DimensionError(f"right-hand side has length {b.shape[0]}, expected {want}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ParameterError("non-finite input")
    return A, b


def default_max_iter(kappa: float, eps: float) -> int:
    """``10 * ceil(log2(kappa / eps)) + 50``."""
    return 10 * max(1, math.ceil(math.log2(max(kappa, 1.0) / eps))) + 50


# ---------------------------------------------------------------------------
# preconditioner and condition estimates


def build_preconditioner(A, delta_ose: float, seed: int,
                         eps_ose: float = config.EPS_OSE,
                         constant: float = config.EMBEDDING_CONSTANT) -> Preconditioner:
    """Draw an SRHT embedding of ``range(A)`` and return ``R = T^{-1}`` from ``S A = Q T``.

    The sketch has ``ceil(constant * d * log(n / delta_ose) / eps_ose**2)`` rows
    sampled with replacement; duplicate rows are merged before the QR, which
    leaves ``(S A)^T (S A)`` unchanged.
    """
    A = np.asarray(A, dtype=np.float64)
    n, d = A.shape
    if n < d:
        raise DimensionError(f"need n >= d, got {n} x {d}")
    _check_unit(delta_ose, "delta_ose")
    m = embedding_dim(n, d, eps_ose, delta_ose, constant)
    S = srht_new(n, m, seed)
    SA = srht_apply(S, A, compact=True)
    if SA.shape[0] < d:
        raise RankError(f"sketch kept {SA.shape[0]} distinct rows, fewer than d = {d}")
    Q, T = np.linalg.qr(SA)
    diag = np.abs(np.diag(T))
    if diag.min() <= config.RANK_TOL * diag.max():
        raise RankError("sketched matrix is numerically rank deficient")
    R = scipy.linalg.solve_triangular(T, np.eye(d))
    s = np.linalg.svd(A @ R, compute_uv=False)
    return Preconditioner(R=R, kappa_AR=float(s[0] / s[-1]), sketch_dim=m, seed=int(seed),
                          Q=Q, sketch=S, ar_singular=(float(s[-1]), float(s[0])))


def _power_max_eig(matvec, d: int, rounds: int, seed: int) -> float:
    v = config.rng(seed, 7).standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(rounds):
        w = matvec(v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def estimate_kappa(A, precond: Preconditioner | None = None, seed: int = 0,
                   exact_limit: int = 512, rounds: int = 30) -> float:
    """Condition number of ``A``: exact SVD for small problems, else inflated power iteration.

    The iterative route runs power iteration on ``A^T A`` (largest singular
    value) and on ``R R^T``, which approximates ``(A^T A)^{-1}`` when ``A R``
    is nearly orthonormal (smallest singular value). The ratio is multiplied
    by ``KAPPA_INFLATION`` to cover the distortion of both estimates.
    """
    A = np.asarray(A, dtype=np.float64)
    if min(A.shape) <= exact_limit:
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= config.RANK_TOL * s[0]:
            raise RankError("matrix does not have full column rank")
        return float(s[0] / s[-1])
    if precond is None:
        raise ParameterError("iterative kappa estimate needs a preconditioner")
    d = A.shape[1]
    R = precond.R
    smax2 = _power_max_eig(lambda v: A.T @ (A @ v), d, rounds, seed)
    inv_smin2 = _power_max_eig(lambda v: R @ (R.T @ v), d, rounds, seed + 1)
    return float(math.sqrt(smax2 * inv_smin2) * config.KAPPA_INFLATION)


# ---------------------------------------------------------------------------
# iteration bookkeeping


class _Monitor:
    """Tracks the best iterate, convergence, stagnation and the iteration cap."""

    def __init__(self, max_iter: int):
        self.max_iter = max_iter
        self.best_score = math.inf
        self.best_x = None
        self.best_residual = math.inf
        self.since_best = 0
        self.converged = False
        self.stagnated = False

    def observe(self, x, score: float, residual: float, done: bool) -> bool:
        """Record an iterate; return True when the loop should stop."""
        if score < 0.99 * self.best_score or self.best_x is None:
            self.since_best = 0
        else:
            self.since_best += 1
        if score <= self.best_score or self.best_x is None:
            self.best_score, self.best_x, self.best_residual = score, x.copy(), residual
        if done:
            self.converged = True
            self.best_x, self.best_residual = x.copy(), residual
            return True
        if self.since_best >= STAGNATION_PATIENCE:
            self.stagnated = True
            return True
        return False


@dataclass
class GDResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float


def gd_well_conditioned(B, y, target_eps: float, max_iter: int, x0=None) -> GDResult:
    """Gradient descent ``x <- x - B^T (B x - y)`` for a well-conditioned ``B``.

    ``B`` may be an array or anything :func:`scipy.sparse.linalg.aslinearoperator`
    accepts. Stops once ``||B x - y|| <= target_eps * ||y||``. With singular
    values of ``B`` in ``[3/4, 5/4]`` the error ``B (x - x*)`` contracts by at
    least ``9/16`` per step.
    """
    op = B if isinstance(B, LinearOperator) else aslinearoperator(np.asarray(B, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    x = np.zeros(op.shape[1]) if x0 is None else np.array(x0, dtype=np.float64)
    ynorm = float(np.linalg.norm(y))
    mon = _Monitor(max_iter)
    it = 0
    while True:
        r = op.matvec(x) - y
        res = float(np.linalg.norm(r))
        done = res <= target_eps * ynorm
        if mon.observe(x, res, res, done) or it >= max_iter:
            break
        x = x - op.rmatvec(r)
        it += 1
    return GDResult(x=mon.best_x, iterations=it, converged=mon.converged, residual=mon.best_residual)


# ---------------------------------------------------------------------------
# base solvers


def _zero_report(d: int, max_iter: int, t0: float, name: str, eps: float, delta: float) -> SolveReport:
    rec = StageRecord(name, eps, delta, eps, 0, 0.0, True, "zero right-hand side")
    return SolveReport(np.zeros(d), 0.0, 0, max_iter, wall_time=time.perf_counter() - t0,
                       stage_log=[rec])


def fast_linear_regression(A, b, eps1: float, delta1: float, seed: int = 0,
                           precond: Preconditioner | None = None,
                           max_iter: int | None = None) -> SolveReport:
    """Solve ``min_x ||A x - b||`` to ``(1 + eps1) OPT`` by sketch-and-precondition.

    ``z0`` solves the sketched problem ``min ||S A R z - S b||``; then
    ``z <- z - R^T A^T (A R z - b)``. The answer is ``x = R z``.

    The loop stops once ``e**2 <= (1 - (1 + eps1)**-2) ||r||**2`` where
    ``e = ||R^T A^T r|| / sigma_min(A R)`` bounds ``||A (x - x*)||``; by
    Pythagoras this certifies ``||r|| <= (1 + eps1) OPT``.
    """
    t0 = time.perf_counter()
    A, b = _check_problem(A, b)
    _check_unit(eps1, "eps1", 0.1)
    _check_unit(delta1, "delta1", 0.1)
    n, d = A.shape
    if precond is None:
        precond = build_preconditioner(A, delta1, seed)
    if max_iter is None:
        max_iter = default_max_iter(precond.kappa_AR, eps1)
    if not np.any(b):
        return _zero_report(d, max_iter, t0, "linear", eps1, delta1)

    R = precond.R
    sig_lo = precond.ar_singular[0]
    ratio = 1.0 - 1.0 / (1.0 + eps1) ** 2
    a_scale = precond.ar_singular[1] / max(np.abs(np.diag(np.linalg.inv(R))).min(), 1e-300)
    floor = 8 * _EPS_MACH * math.sqrt(n)
    z = precond.Q.T @ srht_apply(precond.sketch, b, compact=True)
    mon = _Monitor(max_iter)
    it = 0
    while True:
        x = R @ z
        r = A @ x - b
        g = R.T @ (A.T @ r)
        res = float(np.linalg.norm(r))
        e = float(np.linalg.norm(g)) / sig_lo
        done = e * e <= ratio * res * res or res <= floor * (a_scale * np.linalg.norm(x) + np.linalg.norm(b))
        if mon.observe(z, e, res, done) or it >= max_iter:
            break
        z = z - g
        it += 1
    x = R @ mon.best_x
    rec = StageRecord("linear", eps1, delta1, eps1, it, mon.best_residual, mon.converged,
                      "stagnated" if mon.stagnated else "")
    return SolveReport(x, mon.best_residual, it, max_iter, max_iterations_hit=it >= max_iter,
                       converged=mon.converged, wall_time=time.perf_counter() - t0,
                       stage_log=[rec], info={"sketch_dim": precond.sketch_dim,
                                              "kappa_AR": precond.kappa_AR})


def fast_psd_regression(A, b2, eps2: float, delta2: float, seed: int = 0,
                        precond: Preconditioner | None = None,
                        max_iter: int | None = None, kappa: float | None = None) -> SolveReport:
    """Solve ``min_x ||A^T A x - b2||`` to ``eps2 ||b2||`` by preconditioned descent.

    With ``B = R^T A^T A R`` the iteration is ``z <- z - B (B z - R^T b2)``
    from ``z0 = 0``; the answer is ``x = R z``. ``A^T A x`` falls out of the
    first product with ``B``, so the true residual is monitored at no extra cost.
    """
    t0 = time.perf_counter()
    A, b2 = _check_problem(A, b2, rows=np.asarray(A).shape[1])
    if not 0.0 < eps2 < 0.1:
        raise ParameterError(f"eps2 must lie in (0, 0.1), got {eps2}")
    _check_unit(delta2, "delta2", 0.1)
    n, d = A.shape
    if precond is None:
        precond = build_preconditioner(A, delta2, seed)
    if max_iter is None:
        k = kappa if kappa is not None else precond.kappa_AR
        max_iter = default_max_iter(k, eps2)
    if not np.any(b2):
        return _zero_report(d, max_iter, t0, "psd", eps2, delta2)

    R = precond.R
    bnorm = float(np.linalg.norm(b2))
    y = R.T @ b2
    z = np.zeros(d)
    mon = _Monitor(max_iter)
    it = 0
    while True:
        x = R @ z
        u = A.T @ (A @ x)
        res = float(np.linalg.norm(u - b2))
        done = res <= eps2 * bnorm
        if mon.observe(z, res, res, done) or it >= max_iter:
            break
        w = R.T @ u - y
        z = z - R.T @ (A.T @ (A @ (R @ w)))
        it += 1
    rec = StageRecord("psd", eps2, delta2, eps2, it, mon.best_residual, mon.converged,
                      "stagnated" if mon.stagnated else "")
    return SolveReport(R @ mon.best_x, mon.best_residual, it, max_iter,
                       max_iterations_hit=it >= max_iter, converged=mon.converged,
                       wall_time=time.perf_counter() - t0, stage_log=[rec],
                       info={"sketch_dim": precond.sketch_dim, "kappa_AR": precond.kappa_AR})
