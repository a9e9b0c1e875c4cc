"""Dense reference computations used as ground truth by tests and the CLI.

Everything here is deterministic and deliberately unclever: full SVDs,
explicit power matrices, exact kernels. Residuals of the power objectives are
additionally available in exact integer arithmetic
(:func:`exact_power_residual`), because at ``kappa**(2j)`` near ``1/eps_mach``
a float64 evaluation of ``(A^T A)^j x - b`` is itself too noisy to judge a
``1e-6`` guarantee.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config
from .errors import DimensionError, OverflowSentinel, ParameterError, SizeError

#: Largest ``n`` for which an exact ``n x n`` kernel is formed.
MAX_KERNEL_N = 2048
#: ``j * log2(kappa)`` above which a dense power matrix is meaningless in float64.
POWER_LOG2_LIMIT = 45.0
_OVERFLOW = 1e300


@dataclass
class SpectrumInfo:
    sigma_min: float
    sigma_max: float
    kappa: float
    rank_tol: float


@dataclass
class OracleReport:
    """Exact least-squares solution and, optionally, a candidate's standing.

    ``relative_gap`` is ``(residual_of_candidate - exact_cost) / max(exact_cost, tiny)``
    and is ``None`` when no candidate was supplied.
    """

    exact_solution: np.ndarray
    exact_cost: float
    residual_of_candidate: float | None = None
    relative_gap: float | None = None


def _matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    return M


def svd_lstsq(M, b, candidate=None) -> OracleReport:
    """Minimum-norm least-squares solution of ``min ||M x - b||`` by SVD.

    Singular values below ``RANK_TOL * sigma_max`` are treated as zero.
    """
    M = _matrix(M)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != M.shape[0]:
        raise DimensionError(f"b has length {b.shape[0]}, expected {M.shape[0]}")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > config.RANK_TOL * (s[0] if s.size else 0.0)
    coef = (U[:, keep].T @ b) / s[keep]
    x = Vt[keep].T @ coef
    cost = float(np.linalg.norm(M @ x - b))
    rep = OracleReport(exact_solution=x, exact_cost=cost)
    if candidate is not None:
        r = float(np.linalg.norm(M @ np.asarray(candidate, dtype=np.float64) - b))
        rep.residual_of_candidate = r
        rep.relative_gap = (r - cost) / max(cost, np.finfo(float).tiny)
    return rep


def spectrum(A) -> SpectrumInfo:
    """Extreme singular values and condition number; ``kappa = inf`` if rank deficient."""
    s = np.linalg.svd(_matrix(A), compute_uv=False)
    if s.size == 0:
        raise DimensionError("empty matrix")
    smax = float(s[0])
    smin = float(s[-1])
    tol = config.RANK_TOL * smax
    if smin <= tol:
        return SpectrumInfo(sigma_min=smin, sigma_max=smax, kappa=math.inf, rank_tol=tol)
    return SpectrumInfo(sigma_min=smin, sigma_max=smax, kappa=smax / smin, rank_tol=tol)


def _mat_power(G: np.ndarray, j: int) -> np.ndarray:
    result = None
    base = G
    while j:
        if j & 1:
            result = base if result is None else result @ base
        j >>= 1
        if j:
            base = base @ base
    return result


def dense_power_matrix(A, j: int, parity: str = "even", check: bool = True) -> np.ndarray:
    """``(A^T A)^j`` (``parity="even"``) or ``A (A^T A)^j`` (``"odd"``) by repeated squaring.

    With ``check=True`` the call is refused when ``j * log2(kappa(A))`` exceeds
    :data:`POWER_LOG2_LIMIT`. Any entry above ``1e300`` raises
    :class:`OverflowSentinel`.
    """
    A = _matrix(A)
    if j < 1:
        raise ParameterError(f"j must be >= 1, got {j}")
    if parity not in ("even", "odd"):
        raise ParameterError(f"parity must be 'even' or 'odd', got {parity!r}")
    if check:
        kappa = spectrum(A).kappa
        if j * math.log2(kappa) > POWER_LOG2_LIMIT:
            raise ParameterError(
                f"j * log2(kappa) = {j * math.log2(kappa):.1f} exceeds {POWER_LOG2_LIMIT}")
    with np.errstate(over="ignore", invalid="ignore"):
        P = _mat_power(A.T @ A, j)
        if parity == "odd":
            P = A @ P
    if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > _OVERFLOW:
        raise OverflowSentinel(f"power matrix of order {j} overflows")
    return P


def psd_power_solution(A, b, j: int) -> np.ndarray:
    """Exact ``(A^T A)^{-j} b`` through the SVD of ``A`` (no power matrix formed)."""
    A = _matrix(A)
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    return Vt.T @ ((Vt @ np.asarray(b, dtype=np.float64)) / s ** (2 * j))


def range_residual(A, b) -> float:
    """``min_x ||A x - b||``; equals OPT for ``A (A^T A)^j`` whenever ``A`` has full column rank."""
    Q, _ = np.linalg.qr(_matrix(A))
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(b - Q @ (Q.T @ b)))


# ---------------------------------------------------------------------------
# exact integer arithmetic


def _to_ints(a) -> tuple[np.ndarray, int]:
    """Return ``(I, e)`` with ``a == I * 2**e`` exactly, ``I`` a Python-int object array."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ParameterError("non-finite input")
    mant, ex = np.frexp(a)
    mi = (mant * 2.0**53).astype(np.int64)
    ex = ex.astype(np.int64) - 53
    nz = mi != 0
    e0 = int(ex[nz].min()) if nz.any() else 0
    ints = [int(v) << int(x - e0) if v else 0 for v, x in zip(mi.ravel(), ex.ravel())]
    out = np.empty(a.size, dtype=object)
    out[:] = ints
    return out.reshape(a.shape), e0


def _int_norm(r, e: int) -> float:
    """``||r|| * 2**e`` for an integer vector ``r``, correctly rounded to ~1 ulp."""
    N = sum(int(v) * int(v) for v in r)
    if N == 0:
        return 0.0
    shift = max(0, N.bit_length() - 120) & ~1
    return math.ldexp(math.sqrt(float(N >> shift)), shift // 2 + e)


def exact_power_residual(A, x, b, j: int, parity: str = "even") -> float:
    """``||(A^T A)^j x - b||`` (or ``||A (A^T A)^j x - b||``) in exact arithmetic.

    The float inputs are taken at face value; only the final norm is rounded.
    """
    Ai, ea = _to_ints(_matrix(A))
    xi, ex = _to_ints(np.asarray(x, dtype=np.float64).ravel())
    bi, eb = _to_ints(np.asarray(b, dtype=np.float64).ravel())
    v = xi
    for _ in range(j):
        v = Ai.T.dot(Ai.dot(v))
    ev = 2 * j * ea + ex
    if parity == "odd":
        v = Ai.dot(v)
        ev += ea
    elif parity != "even":
        raise ParameterError(f"parity must be 'even' or 'odd', got {parity!r}")
    if v.shape != bi.shape:
        raise DimensionError(f"objective has length {v.shape[0]}, b has {bi.shape[0]}")
    e = min(ev, eb)
    r = [int(p) * (1 << (ev - e)) - int(q) * (1 << (eb - e)) for p, q in zip(v, bi)]
    return _int_norm(r, e)


# ---------------------------------------------------------------------------
# kernels


def exact_kernel(A) -> np.ndarray:
    """``exp(A A^T)`` entrywise; refuses ``n > 2048``."""
    A = _matrix(A)
    if A.shape[0] > MAX_KERNEL_N:
        raise SizeError(f"exact kernel limited to n <= {MAX_KERNEL_N}, got {A.shape[0]}")
    return np.exp(A @ A.T)


def taylor_kernel(A, q: int) -> np.ndarray:
    """Degree-``q`` truncation ``sum_{l <= q} (A A^T)**l / l!`` (entrywise powers)."""
    A = _matrix(A)
    if A.shape[0] > MAX_KERNEL_N:
        raise SizeError(f"exact kernel limited to n <= {MAX_KERNEL_N}, got {A.shape[0]}")
    G = A @ A.T
    term = np.ones_like(G)
    Q = term.copy()
    for l in range(1, q + 1):
        term = term * G / l
        Q += term
    return Q


def sandwich_margins(K, K_approx, eps: float) -> tuple[float, float]:
    """Smallest eigenvalues of ``K_approx - (1-eps) K`` and ``(1+eps) K - K_approx``."""
    K = np.asarray(K, dtype=np.float64)
    Ka = np.asarray(K_approx, dtype=np.float64)
    if K.shape != Ka.shape or K.shape[0] != K.shape[1]:
        raise DimensionError(f"need equal square shapes, got {K.shape} and {Ka.shape}")
    lo = np.linalg.eigvalsh(Ka - (1 - eps) * K)[0]
    hi = np.linalg.eigvalsh((1 + eps) * K - Ka)[0]
    return float(lo), float(hi)


def spectral_sandwich(K, K_approx, eps: float, tol: float = 1e-8) -> bool:
    """True iff ``(1-eps) K <= K_approx <= (1+eps) K`` in Loewner order up to ``tol``."""
    lo, hi = sandwich_margins(K, K_approx, eps)
    return lo >= -tol and hi >= -tol


# ---------------------------------------------------------------------------
# instance generation


def gen_matrix(n: int, d: int, kappa_target: float, seed: int) -> np.ndarray:
    """``U diag(sigma) V^T`` with Haar-like ``U, V`` and ``sigma`` geometric from 1 to ``kappa_target``."""
    if not (n >= d >= 1):
        raise ParameterError(f"need n >= d >= 1, got n={n}, d={d}")
    if not kappa_target >= 1:
        raise ParameterError(f"kappa_target must be >= 1, got {kappa_target}")
    if d == 1 and kappa_target != 1:
        raise ParameterError("a single column always has kappa = 1")
    U, _ = np.linalg.qr(config.rng(seed, 0).standard_normal((n, d)))
    V, _ = np.linalg.qr(config.rng(seed, 1).standard_normal((d, d)))
    sigma = np.geomspace(1.0, float(kappa_target), d)
    return (U * sigma) @ V.T


def gen_unit_rows(n: int, d: int, seed: int) -> np.ndarray:
    """Gaussian rows scaled by ``1/sqrt(d)`` and capped at unit norm."""
    if n < 1 or d < 1:
        raise ParameterError(f"need n, d >= 1, got n={n}, d={d}")
    X = config.rng(seed, 2).standard_normal((n, d)) / math.sqrt(d)
    return X / np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
