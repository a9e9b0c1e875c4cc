"""Repo-wide numerical constants and seed derivation.

All randomness flows through :func:`rng` / :func:`derive_seed`. The bit
generator is Philox-4x64 (counter based); independent streams are obtained
by appending integers to the ``spawn_key`` of a :class:`numpy.random.SeedSequence`,
so ``rng(seed, 1)`` and ``rng(seed, 2)`` never overlap and never depend on
call order.
"""
from __future__ import annotations

import numpy as np

#: Multiplier in m = ceil(C * d * log(n / delta) / eps**2) for SRHT embeddings.
EMBEDDING_CONSTANT = 8.0
#: Distortion of the preconditioning embedding used by both base solvers.
EPS_OSE = 0.1
#: Inner-sketch distortion for the kernel preconditioner.
KERNEL_EPS0 = 0.01
#: Per-degree kernel sketch size multiplier.
KERNEL_CM = 4.0
#: Taylor truncation multiplier, q = ceil(C_q * (r**2 + log(n / eps))).
KERNEL_CQ = 2.0
#: Relative rank tolerance for every SVD-based decision.
RANK_TOL = 1e-12
#: Lower clamp for per-stage tolerances in the chained solvers.
TOL_FLOOR = 1e-14
#: Default cap on the power j.
MAX_POWER = 16
#: Safety multiplier applied to iterative condition-number estimates.
KAPPA_INFLATION = 1.5


def rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` on the sub-stream ``stream``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream: int) -> int:
    """Deterministic 63-bit child seed for the sub-stream ``stream``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 32 | int(lo)) & (2**63 - 1))
