"""Seeded randomized transforms: FWHT, SRHT and TensorSRHT.

Sketches are stored compactly (sign diagonals and sampled indices) and applied
through the fast Walsh-Hadamard transform. The Hadamard matrix used throughout
is the *unnormalized* Sylvester matrix, so an SRHT with ``m`` rows is
``S = P H D / sqrt(m)`` and satisfies ``E[S^T S] = I``.

Typical usage::

    S = srht_new(n=1024, m=256, seed=7)
    SA = srht_apply(S, A)
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import config
from .errors import DimensionError, ParameterError, RankError


def next_pow2(n: int) -> int:
    """Smallest power of two that is >= n (and >= 1)."""
    return 1 << max(int(n) - 1, 0).bit_length()


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fwht(v):
    """Unnormalized fast Walsh-Hadamard transform along axis 0.

    Parameters
    ----------
    v : array_like, shape (L,) or (L, k)
        ``L`` must be a power of two. Columns are transformed independently.

    Returns
    -------
    ndarray
        ``H @ v`` for the Sylvester Hadamard matrix ``H`` of order ``L``.
        Applying the transform twice returns ``L * v``.

    Notes
    -----
    Uses ``H_L = H_{L/b} (x) H_b``: a dense ``b x b`` Hadamard block is
    applied by matrix multiply to the low index, then the transform recurses
    on the high index. Cost is ``O(L (b + log L))`` per column with BLAS-sized
    inner loops.
    """
    x = np.asarray(v, dtype=np.float64)
    L = x.shape[0]
    if not _is_pow2(L):
        raise DimensionError(f"fwht needs a power-of-two length, got {L}")
    tail = x.shape[1:]
    return _fwht_blocked(x.reshape(L, -1)).reshape((L,) + tail)


_FWHT_BLOCK = 64


@functools.lru_cache(maxsize=None)
def _hadamard(k: int) -> np.ndarray:
    H = scipy.linalg.hadamard(k).astype(np.float64)
    H.setflags(write=False)
    return H


def _fwht_blocked(x: np.ndarray) -> np.ndarray:
    L, c = x.shape
    if L <= _FWHT_BLOCK:
        return _hadamard(L) @ x
    b = _FWHT_BLOCK
    y = np.matmul(_hadamard(b), x.reshape(L // b, b, c))
    return _fwht_blocked(y.reshape(L // b, b * c)).reshape(L, c)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SrhtSketch:
    """``S = P H D / sqrt(m)`` acting on vectors of length ``n``.

    ``signs`` is the diagonal of ``D`` (length ``n_pad``), ``sample_rows`` the
    row indices picked by ``P``. Inputs are zero-padded from ``n`` to ``n_pad``.
    """

    m: int
    n: int
    n_pad: int
    signs: np.ndarray
    sample_rows: np.ndarray
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def dense(self) -> np.ndarray:
        """Materialize the ``m x n`` matrix (testing only)."""
        return srht_apply(self, np.eye(self.n))


@dataclass(frozen=True, eq=False)
class TensorSrhtSketch:
    """``S = P (H D1 (x) H D2) / sqrt(m)`` acting on pairs of length-``d_in`` vectors."""

    m: int
    d_in: int
    signs1: np.ndarray
    signs2: np.ndarray
    sample_pairs: np.ndarray  # shape (m, 2)
    seed: int

    def dense(self) -> np.ndarray:
        """Materialize the ``m x d_in**2`` matrix acting on ``kron(x, y)``."""
        H = fwht(np.eye(self.d_in))
        left = H * self.signs1
        right = H * self.signs2
        i, j = self.sample_pairs[:, 0], self.sample_pairs[:, 1]
        rows = left[i][:, :, None] * right[j][:, None, :]
        return rows.reshape(self.m, -1) / math.sqrt(self.m)


def srht_new(n: int, m: int, seed: int) -> SrhtSketch:
    """Draw an SRHT from ``R^n`` to ``R^m``; rows are sampled with replacement."""
    if n < 1 or m < 1:
        raise DimensionError(f"SRHT needs n >= 1 and m >= 1, got n={n}, m={m}")
    n_pad = next_pow2(n)
    signs = config.rng(seed, 0).integers(0, 2, size=n_pad).astype(np.float64) * 2.0 - 1.0
    rows = config.rng(seed, 1).integers(0, n_pad, size=m)
    return SrhtSketch(int(m), int(n), n_pad, _freeze(signs), _freeze(rows), int(seed))


def srht_full(n: int, seed: int) -> SrhtSketch:
    """Randomized Hadamard transform keeping every row (``P = I``).

    This is an exact isometry of the padded space. Used when a requested sketch
    dimension reaches the padded input dimension.
    """
    if n < 1:
        raise DimensionError(f"SRHT needs n >= 1, got {n}")
    n_pad = next_pow2(n)
    signs = config.rng(seed, 0).integers(0, 2, size=n_pad).astype(np.float64) * 2.0 - 1.0
    return SrhtSketch(n_pad, int(n), n_pad, _freeze(signs), _freeze(np.arange(n_pad)), int(seed))


def _rotate(S: SrhtSketch, A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] != S.n:
        raise DimensionError(f"sketch expects {S.n} rows, got {A.shape[0]}")
    padded = np.zeros((S.n_pad,) + A.shape[1:])
    padded[: S.n] = A
    signs = S.signs.reshape((-1,) + (1,) * (A.ndim - 1))
    return fwht(padded * signs)


def srht_apply(S: SrhtSketch, A, compact: bool = False):
    """Compute ``S @ A`` for ``A`` of shape ``(n,)`` or ``(n, d)``.

    With ``compact=True`` duplicate sampled rows are merged: the result has one
    row per distinct sampled index, scaled by ``sqrt(count / m)``. It has the
    same Gram matrix (and the same least-squares geometry) as ``S @ A`` but at
    most ``n_pad`` rows, which matters when ``m`` exceeds ``n_pad``.
    """
    HDA = _rotate(S, A)
    if not compact:
        return HDA[S.sample_rows] / math.sqrt(S.m)
    idx, counts = np.unique(S.sample_rows, return_counts=True)
    w = np.sqrt(counts / S.m).reshape((-1,) + (1,) * (HDA.ndim - 1))
    return HDA[idx] * w


def srht_apply_transpose(S: SrhtSketch, Y) -> np.ndarray:
    """Compute ``S^T @ Y`` for ``Y`` of shape ``(m,)`` or ``(m, k)``."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != S.m:
        raise DimensionError(f"transpose sketch expects {S.m} rows, got {Y.shape[0]}")
    acc = np.zeros((S.n_pad,) + Y.shape[1:])
    np.add.at(acc, S.sample_rows, Y)
    out = fwht(acc) / math.sqrt(S.m)
    out *= S.signs.reshape((-1,) + (1,) * (Y.ndim - 1))
    return out[: S.n]


def tensor_srht_new(d: int, m: int, seed: int) -> TensorSrhtSketch:
    """Draw a TensorSRHT from ``R^d x R^d`` to ``R^m``.

    ``d`` is padded to a power of two; ``D1``, ``D2`` and the sampled index
    pairs come from three independent RNG streams.
    """
    if d < 1 or m < 1:
        raise DimensionError(f"TensorSRHT needs d >= 1 and m >= 1, got d={d}, m={m}")
    d_in = next_pow2(d)
    s1 = config.rng(seed, 0).integers(0, 2, size=d_in).astype(np.float64) * 2.0 - 1.0
    s2 = config.rng(seed, 1).integers(0, 2, size=d_in).astype(np.float64) * 2.0 - 1.0
    pairs = config.rng(seed, 2).integers(0, d_in, size=(m, 2))
    return TensorSrhtSketch(int(m), d_in, _freeze(s1), _freeze(s2), _freeze(pairs), int(seed))


def _pad_to(x: np.ndarray, d_in: int) -> np.ndarray:
    if x.shape[0] > d_in:
        raise DimensionError(f"input length {x.shape[0]} exceeds sketch side {d_in}")
    if x.shape[0] == d_in:
        return x
    out = np.zeros((d_in,) + x.shape[1:])
    out[: x.shape[0]] = x
    return out


def tensor_srht_apply(S: TensorSrhtSketch, x, y) -> np.ndarray:
    """Evaluate ``S (x (x) y)`` without forming the tensor product.

    ``x`` and ``y`` may be vectors or matrices of matching column count, in
    which case every column pair is sketched.
    """
    x = _pad_to(np.asarray(x, dtype=np.float64), S.d_in)
    y = _pad_to(np.asarray(y, dtype=np.float64), S.d_in)
    shape = (-1,) + (1,) * (x.ndim - 1)
    hx = fwht(x * S.signs1.reshape(shape))
    hy = fwht(y * S.signs2.reshape(shape))
    return hx[S.sample_pairs[:, 0]] * hy[S.sample_pairs[:, 1]] / math.sqrt(S.m)


def embedding_dim(n: int, d: int, eps: float, delta: float,
                  constant: float = config.EMBEDDING_CONSTANT) -> int:
    """Default SRHT row count ``ceil(constant * d * log(n / delta) / eps**2)``."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ParameterError(f"need eps, delta in (0, 1), got {eps}, {delta}")
    return int(math.ceil(constant * d * math.log(n / delta) / eps**2))


# ---------------------------------------------------------------------------
# statistical verification


@dataclass
class EmbeddingReport:
    """Singular-value statistics of ``S U`` over repeated sketch draws.

    ``min_singular``/``max_singular`` are the extremes over all trials;
    ``epsilon_observed`` is the worst ``max(|1 - s_min|, |s_max - 1|)``.
    ``gram_distortion`` holds the per-trial ``||U^T S^T S U - I||``.
    """

    min_singular: float
    max_singular: float
    epsilon_observed: float
    trials: int
    failure_rate: float
    per_trial_epsilon: np.ndarray
    gram_distortion: np.ndarray


def orthonormal_basis(A) -> np.ndarray:
    """Orthonormal basis of ``range(A)``; raises :class:`RankError` if rank deficient."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("expected a matrix")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[-1] <= config.RANK_TOL * s[0]:
        raise RankError("matrix does not have full column rank")
    return U


def gram_distortion(SU: np.ndarray) -> float:
    """``||(SU)^T (SU) - I||_2`` computed from the Gram matrix directly."""
    G = SU.T @ SU
    return float(np.max(np.abs(np.linalg.eigvalsh(G - np.eye(G.shape[0])))))


def check_embedding(sketch_factory: Callable[[int], SrhtSketch], A, epsilon: float,
                    trials: int) -> EmbeddingReport:
    """Empirical subspace-embedding test for the sketches ``sketch_factory(t)``.

    Each trial draws a fresh sketch, forms ``S U`` for an orthonormal basis
    ``U`` of ``range(A)`` and records the distortion of its singular values.
    """
    U = orthonormal_basis(A)
    eps_t = np.empty(trials)
    gram = np.empty(trials)
    lo, hi = np.inf, -np.inf
    for t in range(trials):
        SU = srht_apply(sketch_factory(t), U)
        s = np.linalg.svd(SU, compute_uv=False)
        lo, hi = min(lo, s[-1]), max(hi, s[0])
        eps_t[t] = max(abs(1.0 - s[-1]), abs(s[0] - 1.0))
        gram[t] = max(abs(s[0] ** 2 - 1.0), abs(s[-1] ** 2 - 1.0))
    return EmbeddingReport(
        min_singular=float(lo),
        max_singular=float(hi),
        epsilon_observed=float(eps_t.max()),
        trials=trials,
        failure_rate=float(np.mean(eps_t > epsilon)),
        per_trial_epsilon=eps_t,
        gram_distortion=gram,
    )


def famp_error(S: SrhtSketch, A, B) -> tuple[float, float]:
    """Return ``(||A^T B - A^T S^T S B||_F, ||A||_F ||B||_F)``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    err = np.linalg.norm(A.T @ B - srht_apply(S, A).T @ srht_apply(S, B))
    return float(err), float(np.linalg.norm(A) * np.linalg.norm(B))


def check_famp(sketch_factory: Callable[[int], SrhtSketch], A, B, epsilon: float,
               trials: int) -> float:
    """Fraction of trials violating the Frobenius approximate-product bound."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    fails = 0
    for t in range(trials):
        err, scale = famp_error(sketch_factory(t), A, B)
        fails += err > epsilon * scale
    return fails / trials
