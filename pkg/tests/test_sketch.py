import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from sketchreg import config
from sketchreg.errors import DimensionError, RankError
from sketchreg.sketch import (check_embedding, check_famp, embedding_dim, famp_error, fwht,
                              gram_distortion, next_pow2, orthonormal_basis, srht_apply,
                              srht_apply_transpose, srht_full, srht_new, tensor_srht_apply,
                              tensor_srht_new)


def sylvester(L):
    return scipy.linalg.hadamard(L).astype(float)


# --- fwht -----------------------------------------------------------------


def test_fwht_small_cases():
    np.testing.assert_array_equal(fwht([1.0, 0.0]), [1.0, 1.0])
    np.testing.assert_array_equal(fwht([1.0, 1.0, 1.0, 1.0]), [4.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(fwht([3.0]), [3.0])


def test_fwht_matches_dense_hadamard():
    v = np.random.default_rng(0).standard_normal(8)
    np.testing.assert_allclose(fwht(v), sylvester(8) @ v, atol=1e-12)


@pytest.mark.parametrize("L", [2, 64, 128, 1024, 4096])
def test_fwht_matches_dense_on_matrices(L):
    V = np.random.default_rng(L).standard_normal((L, 3))
    np.testing.assert_allclose(fwht(V), sylvester(L) @ V, atol=1e-10 * math.sqrt(L))


def test_fwht_rejects_non_power_of_two():
    with pytest.raises(DimensionError):
        fwht(np.ones(6))
    with pytest.raises(DimensionError):
        fwht(np.ones(0))


def test_fwht_does_not_mutate_input():
    v = np.arange(8.0)
    fwht(v)
    np.testing.assert_array_equal(v, np.arange(8.0))


@given(k=st.integers(0, 12), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_fwht_involution(k, seed):
    L = 2**k
    v = np.random.default_rng(seed).standard_normal(L)
    assert np.max(np.abs(fwht(fwht(v)) / L - v)) <= 1e-12


# --- SRHT -----------------------------------------------------------------


def test_next_pow2():
    assert [next_pow2(n) for n in (1, 2, 3, 5, 8, 9, 1000)] == [1, 2, 4, 8, 8, 16, 1024]


def test_srht_new_structure_and_determinism():
    S = srht_new(5, 3, seed=7)
    assert S.n_pad == 8 and S.shape == (3, 5)
    assert set(np.unique(S.signs)) <= {-1.0, 1.0}
    assert np.all((S.sample_rows >= 0) & (S.sample_rows < 8))
    T = srht_new(5, 3, seed=7)
    np.testing.assert_array_equal(S.signs, T.signs)
    np.testing.assert_array_equal(S.sample_rows, T.sample_rows)
    with pytest.raises(ValueError):
        S.signs[0] = 2.0


def test_srht_new_rejects_empty():
    with pytest.raises(DimensionError):
        srht_new(0, 3, 1)
    with pytest.raises(DimensionError):
        srht_new(4, 0, 1)


def test_srht_dense_entries_have_magnitude_one_over_sqrt_m():
    S = srht_new(4, 4, seed=11).dense()
    np.testing.assert_allclose(np.abs(S), 0.5, atol=1e-15)


def test_srht_apply_matches_dense_materialization():
    S = srht_new(8, 5, seed=3)
    A = np.random.default_rng(1).standard_normal((8, 3))
    P = np.zeros((5, 8))
    P[np.arange(5), S.sample_rows] = 1.0
    dense = P @ sylvester(8) @ np.diag(S.signs) / math.sqrt(5)
    np.testing.assert_allclose(srht_apply(S, A), dense @ A, atol=1e-12)


def test_srht_apply_pads_rows():
    S = srht_new(6, 4, seed=2)
    A = np.random.default_rng(2).standard_normal((6, 2))
    padded = np.vstack([A, np.zeros((2, 2))])
    full = srht_new(8, 4, seed=2)
    np.testing.assert_allclose(srht_apply(S, A), srht_apply(full, padded), atol=1e-12)


def test_srht_apply_zero_and_mismatch():
    S = srht_new(8, 4, seed=0)
    np.testing.assert_array_equal(srht_apply(S, np.zeros((8, 2))), np.zeros((4, 2)))
    with pytest.raises(DimensionError):
        srht_apply(S, np.zeros((7, 2)))


@given(seed=st.integers(0, 2**31), a=st.floats(-5, 5), b=st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_srht_apply_linear(seed, a, b):
    g = np.random.default_rng(seed)
    A, B = g.standard_normal((13, 3)), g.standard_normal((13, 3))
    S = srht_new(13, 6, seed)
    lhs = srht_apply(S, a * A + b * B)
    rhs = a * srht_apply(S, A) + b * srht_apply(S, B)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


def test_compact_apply_preserves_gram():
    S = srht_new(16, 200, seed=5)
    A = np.random.default_rng(5).standard_normal((16, 4))
    full = srht_apply(S, A)
    comp = srht_apply(S, A, compact=True)
    assert comp.shape[0] <= 16
    np.testing.assert_allclose(comp.T @ comp, full.T @ full, atol=1e-12)


def test_transpose_apply_is_adjoint():
    S = srht_new(11, 7, seed=9)
    np.testing.assert_allclose(srht_apply_transpose(S, np.eye(7)), S.dense().T, atol=1e-12)


def test_srht_full_is_isometry():
    S = srht_full(12, seed=4)
    D = S.dense()
    np.testing.assert_allclose(D.T @ D, np.eye(12), atol=1e-12)


def test_srht_expected_gram_is_identity():
    # average of S^T S over many draws approaches I (unnormalized H, 1/sqrt(m) scaling)
    acc = np.zeros((4, 4))
    trials = 2000
    for t in range(trials):
        D = srht_new(4, 2, seed=t).dense()
        acc += D.T @ D
    np.testing.assert_allclose(acc / trials, np.eye(4), atol=0.1)


# --- TensorSRHT -----------------------------------------------------------


def test_tensor_srht_structure():
    S = tensor_srht_new(3, 5, seed=1)
    assert S.d_in == 4 and S.sample_pairs.shape == (5, 2)
    assert not np.array_equal(S.signs1, S.signs2) or S.d_in < 4


def test_tensor_srht_zero_inputs():
    S = tensor_srht_new(4, 6, seed=2)
    y = np.ones(4)
    np.testing.assert_array_equal(tensor_srht_apply(S, np.zeros(4), y), np.zeros(6))
    np.testing.assert_array_equal(tensor_srht_apply(S, y, np.zeros(4)), np.zeros(6))


@pytest.mark.parametrize("d_in", [1, 2, 4, 8, 16])
def test_tensor_srht_matches_kronecker(d_in):
    S = tensor_srht_new(d_in, 9, seed=d_in)
    g = np.random.default_rng(d_in)
    x, y = g.standard_normal(d_in), g.standard_normal(d_in)
    H = sylvester(d_in)
    big = np.kron(H @ np.diag(S.signs1), H @ np.diag(S.signs2))
    idx = S.sample_pairs[:, 0] * d_in + S.sample_pairs[:, 1]
    expect = big[idx] @ np.kron(x, y) / 3.0
    np.testing.assert_allclose(tensor_srht_apply(S, x, y), expect, atol=1e-12)
    np.testing.assert_allclose(S.dense() @ np.kron(x, y), expect, atol=1e-12)


def test_tensor_srht_batched_columns():
    S = tensor_srht_new(4, 5, seed=3)
    g = np.random.default_rng(3)
    X, Y = g.standard_normal((3, 4)), g.standard_normal((3, 4))
    Z = tensor_srht_apply(S, X, Y)
    for c in range(4):
        np.testing.assert_allclose(Z[:, c], tensor_srht_apply(S, X[:, c], Y[:, c]), atol=1e-14)


def test_tensor_srht_too_long():
    S = tensor_srht_new(4, 5, seed=3)
    with pytest.raises(DimensionError):
        tensor_srht_apply(S, np.ones(5), np.ones(4))


def test_tensor_srht_norm_in_expectation():
    g = np.random.default_rng(0)
    x = g.standard_normal(8)
    y = g.standard_normal(8)
    x /= np.linalg.norm(x)
    y /= np.linalg.norm(y)
    sq = [np.sum(tensor_srht_apply(tensor_srht_new(8, 16, s), x, y) ** 2) for s in range(200)]
    assert abs(np.mean(sq) - 1.0) <= 0.1


# --- verification utilities --------------------------------------------------


def test_embedding_dim_formula():
    assert embedding_dim(1024, 16, 0.25, 0.05) == math.ceil(8 * 16 * math.log(1024 / 0.05) / 0.0625)


def test_orthonormal_basis_rank_error():
    A = np.ones((6, 2))
    with pytest.raises(RankError):
        orthonormal_basis(A)


def test_check_embedding_structural_smoke():
    A = np.eye(8)[:, :3]
    rep = check_embedding(lambda t: srht_new(8, 8, t), A, 0.5, 5)
    assert rep.trials == 5 and np.isfinite(rep.epsilon_observed)
    assert rep.min_singular <= rep.max_singular
    assert 0.0 <= rep.failure_rate <= 1.0


def test_check_embedding_two_routes_agree():
    U = orthonormal_basis(np.random.default_rng(1).standard_normal((64, 5)))
    for seed in range(10):
        SU = srht_apply(srht_new(64, 40, seed), U)
        s = np.linalg.svd(SU, compute_uv=False)
        via_svd = max(abs(s[0] ** 2 - 1), abs(s[-1] ** 2 - 1))
        assert abs(via_svd - gram_distortion(SU)) <= 1e-10


def test_check_embedding_default_size_statistics():
    A = np.random.default_rng(2).standard_normal((1024, 16))
    m = embedding_dim(1024, 16, 0.25, 0.05)
    rep = check_embedding(lambda t: srht_new(1024, m, config.derive_seed(9, t)), A, 0.25, 30)
    assert rep.failure_rate <= 0.05
    assert 0.75 <= rep.min_singular and rep.max_singular <= 1.25


def test_famp_zero_matrices():
    Z = np.zeros((16, 3))
    assert famp_error(srht_new(16, 4, 0), Z, Z) == (0.0, 0.0)
    assert check_famp(lambda t: srht_new(16, 4, t), Z, Z, 0.1, 10) == 0.0


def test_famp_large_m_rarely_fails():
    U = orthonormal_basis(np.random.default_rng(3).standard_normal((256, 4)))
    assert check_famp(lambda t: srht_new(256, 4096, t), U, U, 0.5, 20) <= 0.05


def test_famp_single_row_usually_fails():
    g = np.random.default_rng(4)
    A, B = g.standard_normal((256, 4)), g.standard_normal((256, 4))
    assert check_famp(lambda t: srht_new(256, 1, t), A, B, 0.05, 20) >= 0.9


def test_famp_dimension_mismatch():
    with pytest.raises(DimensionError):
        check_famp(lambda t: srht_new(8, 4, t), np.ones((8, 2)), np.ones((7, 2)), 0.1, 1)
