"""Regression against the attention kernel ``G = exp(A A^T)`` (entrywise).

The kernel is approximated by a stacked factor ``W`` with ``W^T W ~ G``:
block ``l`` sketches the degree-``l`` Taylor term ``(A A^T)**l / l!`` with a
recursive tensor sketch, and the series is truncated at degree ``q``.
Regression then runs gradient descent on ``W^T W`` preconditioned through an
SVD of a sketch of ``W^T``.

When the factor would have at least ``n`` rows the sketch buys nothing, and
:func:`attention_kernel_regression` solves the exact kernel system densely.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import DimensionError, ParameterError, RadiusError, RankError, SizeError
from .sketch import (SrhtSketch, TensorSrhtSketch, next_pow2, srht_apply, srht_apply_transpose,
                     srht_full, srht_new, tensor_srht_apply, tensor_srht_new)
from .solvers import SolveReport, StageRecord, _Monitor

#: Refuse factors with more than this many stored entries (about 1 GiB).
MAX_FACTOR_ENTRIES = 2**27
#: Largest ``n`` for which the dense kernel branch forms ``G``.
MAX_DENSE_N = 8192
_RADIUS_SLACK = 1e-12


def exact_attention_kernel(A) -> np.ndarray:
    """``G[i, j] = exp(<a_i, a_j>)`` for the rows ``a_i`` of ``A``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {A.shape}")
    return np.exp(A @ A.T)


def tensor_sketch_lim_rand(x, p: int, S: TensorSrhtSketch, T: SrhtSketch) -> np.ndarray:
    """Degree-``p`` tensor sketch of ``x`` (a vector, or one point per column).

    ``w_0 = T x`` and ``w_l = S(w_{l-1} (x) w_{l-1})`` give sketches of the
    ``2**l``-fold tensor powers; the set bits of ``p`` are then combined from
    the lowest up, ``z <- S(z (x) w_i)``.
    """
    if int(p) != p or p < 1:
        raise ParameterError(f"degree p must be an integer >= 1, got {p}")
    p = int(p)
    w = [srht_apply(T, x)]
    for _ in range(p.bit_length() - 1):
        w.append(tensor_srht_apply(S, w[-1], w[-1]))
    bits = [i for i in range(p.bit_length()) if p >> i & 1]
    z = w[bits[0]]
    for i in bits[1:]:
        z = tensor_srht_apply(S, z, w[i])
    return z


# ---------------------------------------------------------------------------
# kernel factor


def kernel_degree(n: int, radius: float, eps: float, c_q: float = config.KERNEL_CQ) -> int:
    """Truncation degree ``ceil(c_q * (radius**2 + log(n / eps)))``, at least 1."""
    return max(1, math.ceil(c_q * (radius**2 + math.log(n / eps))))


def degree_beta(n: int, d: int, l: int) -> int:
    """Rank bound ``min(n, C(d + l - 1, l))`` of the degree-``l`` symmetric tensor power."""
    return min(n, math.comb(d + l - 1, l))


def factor_sizes(n: int, d: int, radius: float, eps: float, beta_hint: int | None = None,
                 c_m: float = config.KERNEL_CM, c_q: float = config.KERNEL_CQ):
    """Return ``(q, rows, betas)`` for the degree blocks ``l = 1..q``.

    Block ``l`` gets ``ceil(c_m * beta_l * l**2 / eps**2)`` rows.
    """
    q = kernel_degree(n, radius, eps, c_q)
    betas = [beta_hint if beta_hint is not None else degree_beta(n, d, l) for l in range(1, q + 1)]
    rows = [math.ceil(c_m * b * l * l / eps**2) for l, b in zip(range(1, q + 1), betas)]
    return q, rows, betas


@dataclass
class KernelFactor:
    """Stacked factor ``W = [Z_0; Z_1/sqrt(1!); ...; Z_q/sqrt(q!)]`` with ``W^T W ~ exp(A A^T)``.

    ``blocks[l]`` is already scaled by ``1/sqrt(l!)``; ``blocks[0]`` is the
    all-ones row. ``beta`` and ``seeds`` are per degree ``l = 1..q``.
    """

    blocks: list
    q: int
    m: int
    radius: float
    beta: list
    seeds: list
    eps: float = 0.0
    delta: float = 0.0

    @property
    def n(self) -> int:
        return self.blocks[0].shape[1]

    def matrix(self) -> np.ndarray:
        return np.vstack(self.blocks)

    def gram(self) -> np.ndarray:
        G = np.zeros((self.n, self.n))
        for Z in self.blocks:
            G += Z.T @ Z
        return G

    def matvec(self, x) -> np.ndarray:
        return np.concatenate([Z @ x for Z in self.blocks])

    def rmatvec(self, y) -> np.ndarray:
        out = np.zeros((self.n,) + np.shape(y)[1:])
        start = 0
        for Z in self.blocks:
            out += Z.T @ y[start:start + Z.shape[0]]
            start += Z.shape[0]
        return out


def _radius(A: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(A, axis=1), initial=0.0))


def _check_radius(r: float, allow_large_radius: bool) -> None:
    if r > 1.0 + _RADIUS_SLACK and not allow_large_radius:
        raise RadiusError(f"row norms must be <= 1, got max {r:.6g}")


def build_kernel_factor(A, eps: float, delta: float, beta_hint: int | None = None, seed: int = 0,
                        c_m: float = config.KERNEL_CM, c_q: float = config.KERNEL_CQ,
                        allow_large_radius: bool = False,
                        max_entries: int = MAX_FACTOR_ENTRIES) -> KernelFactor:
    """Sketch ``exp(A A^T)`` into a factor ``W`` with ``(1-eps) G <= W^T W <= (1+eps) G``.

    Each degree ``l >= 2`` draws its own pair ``(S_l, T_l)`` and applies
    :func:`tensor_sketch_lim_rand` to every row of ``A``; degree 1 is ``T_1 a``
    and degree 0 the constant 1. ``T_l`` is a full randomized Hadamard
    rotation (exact, ``next_pow2(d)`` rows) whenever ``m_l`` reaches the padded
    ``d``, so block 1 may be shorter than ``m_1``. ``delta`` is recorded but the row counts of
    :func:`factor_sizes` do not depend on it.

    Raises
    ------
    RadiusError
        A row has norm above 1 and ``allow_large_radius`` is false.
    SizeError
        The factor would store more than ``max_entries`` numbers.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"expected a non-empty matrix, got shape {A.shape}")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ParameterError(f"need eps, delta in (0, 1), got {eps}, {delta}")
    n, d = A.shape
    r = _radius(A)
    _check_radius(r, allow_large_radius)
    q, rows, betas = factor_sizes(n, d, r, eps, beta_hint, c_m, c_q)
    widest = max(next_pow2(m) for m in rows)
    if (1 + sum(rows)) * n > max_entries or widest * n > max_entries:
        raise SizeError(f"kernel factor with {1 + sum(rows)} rows for n={n} exceeds the memory cap")
    X = A.T
    blocks = [np.ones((1, n))]
    seeds = []
    for l, m_l in zip(range(1, q + 1), rows):
        s_l = config.derive_seed(seed, l)
        seeds.append(s_l)
        # an exact rotation beats sampling once m_l covers the padded data dimension
        if m_l >= next_pow2(d):
            T = srht_full(d, config.derive_seed(s_l, 0))
        else:
            T = srht_new(d, m_l, config.derive_seed(s_l, 0))
        if l == 1:
            Z = srht_apply(T, X)
        else:
            S = tensor_srht_new(m_l, m_l, config.derive_seed(s_l, 1))
            Z = tensor_sketch_lim_rand(X, l, S, T)
        blocks.append(Z * math.exp(-0.5 * math.lgamma(l + 1)))
    return KernelFactor(blocks=blocks, q=q, m=sum(Z.shape[0] for Z in blocks), radius=r, beta=betas,
                        seeds=seeds, eps=eps, delta=delta)


# ---------------------------------------------------------------------------
# preconditioned gradient descent


@dataclass
class KernelPreconditioner:
    """SVD ``S W^T = U diag(Sigma) V^T`` and ``R = U diag(Sigma)**-2``.

    ``phi_condition`` is the condition number of ``W^T W S^T R``, the operator
    gradient descent runs on; it is ``(1 + 2 eps0) / (1 - 2 eps0)`` or better
    when ``S`` embeds ``range(W^T)``.
    """

    s: int
    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    R: np.ndarray
    sketch: SrhtSketch
    phi_condition: float = field(default=math.nan)


def inner_sketch_rows(m: int, n: int, eps0: float, delta: float) -> int:
    """``ceil(m * log(m n / (eps0 delta)) * log(n / delta) / eps0**2)``."""
    return math.ceil(m * math.log(m * n / (eps0 * delta)) * math.log(n / delta) / eps0**2)


def build_kernel_preconditioner(F: KernelFactor, delta: float, seed: int = 0,
                                eps0: float = config.KERNEL_EPS0) -> KernelPreconditioner:
    """Sketch ``W^T`` down to ``s`` rows and invert its singular values twice.

    When ``s`` reaches the padded ``n`` a full randomized Hadamard rotation
    (an exact isometry) is used instead of a sampled one.
    """
    n, m = F.n, F.m
    s = inner_sketch_rows(m, n, eps0, delta)
    S = srht_full(n, seed) if s >= next_pow2(n) else srht_new(n, s, seed)
    Wt = np.vstack(F.blocks).T
    SWt = srht_apply(S, Wt)
    U, sig, Vt = np.linalg.svd(SWt, full_matrices=False)
    if sig.size == 0 or sig[-1] <= config.RANK_TOL * sig[0]:
        raise RankError("sketched kernel factor is numerically rank deficient")
    R = U / sig**2
    M = Wt @ (Wt.T @ srht_apply_transpose(S, R))
    sv = np.linalg.svd(M, compute_uv=False)
    return KernelPreconditioner(s=S.m, U=U, Sigma=sig, V=Vt.T, R=R, sketch=S,
                                phi_condition=float(sv[0] / sv[-1]))


def _dense_factor_solve(F: KernelFactor, y: np.ndarray) -> np.ndarray:
    _, sig, Vt = np.linalg.svd(F.matrix(), full_matrices=False)
    if sig.size < F.n or sig[-1] <= config.RANK_TOL * sig[0]:
        raise RankError("factor Gram matrix is singular")
    return Vt.T @ ((Vt @ y) / sig**2)


def preconditioned_gd(F: KernelFactor, y, eps_final: float, delta_final: float, seed: int = 0,
                      eps0: float = config.KERNEL_EPS0, max_iter: int | None = None) -> SolveReport:
    """Solve ``W^T W x = y`` for a kernel factor ``W`` to ``eps_final ||y||``.

    If ``W`` has at least ``n`` rows the normal equations are solved directly
    through the SVD of ``W``. Otherwise, with ``M = W^T W S^T R`` from
    :func:`build_kernel_preconditioner`, gradient descent
    ``z <- z - M^T (M z - y)`` runs from ``z = 0`` and ``x = S^T R z``.
    """
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != F.n:
        raise DimensionError(f"y has length {y.shape[0]}, factor has n = {F.n}")
    if not (0 < eps_final < 1 and 0 < delta_final < 1):
        raise ParameterError(f"need eps, delta in (0, 1), got {eps_final}, {delta_final}")
    ynorm = float(np.linalg.norm(y))
    if F.m >= F.n:
        x = _dense_factor_solve(F, y) if ynorm else np.zeros(F.n)
        res = float(np.linalg.norm(F.rmatvec(F.matvec(x)) - y))
        rec = StageRecord("dense-factor", eps_final, delta_final, eps_final, 0, res,
                          res <= eps_final * ynorm)
        return SolveReport(x, res, 0, 0, converged=rec.converged,
                           wall_time=time.perf_counter() - t0, stage_log=[rec],
                           info={"branch": "dense-factor", "factor_rows": F.m})
    P = build_kernel_preconditioner(F, delta_final, seed, eps0)
    if max_iter is None:
        max_iter = 10 * max(1, math.ceil(math.log2(P.phi_condition / eps_final))) + 50
    W = F.matrix()

    def to_x(z):
        return srht_apply_transpose(P.sketch, P.R @ z)

    z = np.zeros(F.m)
    mon = _Monitor(max_iter)
    it = 0
    while True:
        x = to_x(z)
        r = W.T @ (W @ x) - y
        res = float(np.linalg.norm(r))
        if mon.observe(z, res, res, res <= eps_final * ynorm) or it >= max_iter:
            break
        g = P.R.T @ srht_apply(P.sketch, W.T @ (W @ r))
        z = z - g
        it += 1
    rec = StageRecord("preconditioned-gd", eps_final, delta_final, eps_final, it,
                      mon.best_residual, mon.converged, "stagnated" if mon.stagnated else "")
    return SolveReport(to_x(mon.best_x), mon.best_residual, it, max_iter,
                       max_iterations_hit=it >= max_iter, converged=mon.converged,
                       wall_time=time.perf_counter() - t0, stage_log=[rec],
                       info={"branch": "sketched", "factor_rows": F.m, "inner_rows": P.s,
                             "phi_condition": P.phi_condition})


def _dense_kernel_solve(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    G = exact_attention_kernel(A)
    lam, V = np.linalg.eigh(G)
    if lam[-1] <= 0 or lam[0] <= config.RANK_TOL * lam[-1]:
        raise RankError("attention kernel is numerically singular")
    return V @ ((V.T @ b) / lam), G


def attention_kernel_regression(A, b, eps_final: float, delta_final: float, seed: int = 0,
                                beta: int | None = None, c_m: float = config.KERNEL_CM,
                                c_q: float = config.KERNEL_CQ, force_factor: bool = False,
                                eps0: float = config.KERNEL_EPS0) -> SolveReport:
    """Find ``x`` with ``||exp(A A^T) x - b|| <= eps_final ||b||`` for rows of norm at most 1.

    The factor is sized for ``eps_final / 4``. If its row count ``m`` is at
    least ``n`` the exact kernel system is solved directly (unless
    ``force_factor``); otherwise the factor is built and
    :func:`preconditioned_gd` runs on it. ``info`` carries the branch taken,
    ``factor_residual`` (relative, ``None`` on the dense branch) and
    ``kernel_residual`` (relative, exact kernel, only for ``n <= 512``).
    """
    t0 = time.perf_counter()
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.ndim != 2 or b.shape[0] != A.shape[0]:
        raise DimensionError(f"need A (n x d) and b of length n, got {A.shape} and {b.shape}")
    if not (0 < eps_final < 1 and 0 < delta_final < 1):
        raise ParameterError(f"need eps, delta in (0, 1), got {eps_final}, {delta_final}")
    n, d = A.shape
    r = _radius(A)
    _check_radius(r, False)
    eps_hat = eps_final / 4
    q, rows, _ = factor_sizes(n, d, r, eps_hat, beta, c_m, c_q)
    m = 1 + sum(rows)
    bnorm = float(np.linalg.norm(b))
    info = {"q": q, "factor_rows": m, "eps_hat": eps_hat}

    if m >= n and not force_factor:
        if n > MAX_DENSE_N:
            raise SizeError(f"dense kernel branch limited to n <= {MAX_DENSE_N}, got {n}")
        x, G = _dense_kernel_solve(A, b)
        res = float(np.linalg.norm(G @ x - b))
        rec = StageRecord("dense-kernel", eps_final, delta_final, eps_final, 0, res,
                          res <= eps_final * bnorm)
        info.update(branch="dense-kernel", factor_residual=None,
                    kernel_residual=res / bnorm if bnorm else 0.0)
        return SolveReport(x, res, 0, 0, converged=rec.converged,
                           wall_time=time.perf_counter() - t0, stage_log=[rec], info=info)

    F = build_kernel_factor(A, eps_hat, delta_final / 2, beta, config.derive_seed(seed, 0),
                            c_m, c_q)
    rep = preconditioned_gd(F, b, eps_final, delta_final / 2, config.derive_seed(seed, 1), eps0)
    rep.info.update(info)
    rep.info["factor_residual"] = rep.residual / bnorm if bnorm else 0.0
    if n <= 512:
        kr = float(np.linalg.norm(exact_attention_kernel(A) @ rep.solution - b))
        rep.info["kernel_residual"] = kr / bnorm if bnorm else 0.0
        rep.residual = kr
        rep.converged = kr <= eps_final * bnorm
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# diagnostics


def kernel_entry_bound_check(B, r: float, eps: float) -> np.ndarray:
    """Entrywise test ``B[i, j] in [(1 - sqrt(eps)) e^{-r}, (1 + eps) e^{r}]``.

    Requires ``eps <= exp(-4 r) / 4``; returns a boolean pass map.
    """
    B = np.asarray(B, dtype=np.float64)
    if r <= 0:
        raise ParameterError(f"radius must be positive, got {r}")
    if not (0 < eps <= 0.25 * math.exp(-4 * r)):
        raise ParameterError(f"eps must lie in (0, exp(-4r)/4], got {eps} for r={r}")
    lo = (1 - math.sqrt(eps)) * math.exp(-r)
    hi = (1 + eps) * math.exp(r)
    return (B >= lo) & (B <= hi)


def psd_minor_failures(B, tol: float = 1e-10) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, with ``B[i, i] B[j, j] < B[i, j]**2 - tol``."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {B.shape}")
    diag = np.diag(B)
    bad = np.outer(diag, diag) < B**2 - tol
    i, j = np.nonzero(np.triu(bad, 1))
    return list(zip(i.tolist(), j.tolist()))


def psd_minor_check(B, tol: float = 1e-10) -> bool:
    """True iff every 2x2 principal minor of ``B`` is nonnegative up to ``tol``."""
    return not psd_minor_failures(B, tol)
