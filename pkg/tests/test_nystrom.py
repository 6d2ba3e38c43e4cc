import math

import numpy as np
import numpy.testing as npt
import pytest
import scipy.linalg

from feddl.kernels import KernelParams, gaussian_kernel, pairwise_sq_dist
from feddl.nystrom import (
    CompletionParams,
    CrossBlock,
    LandmarkBlock,
    MatrixKind,
    assemble_cross_block,
    evaluate_bounds,
    nystrom_complete,
    rank_k_pinv,
    resolve_ridge,
)

PARAMS = KernelParams(gamma=0.5)


def kernel_block(Xa, Xb):
    return gaussian_kernel(pairwise_sq_dist(Xa, Xb), PARAMS)


def test_rank_k_pinv_full_rank_is_inverse():
    W = LandmarkBlock(values=np.array([[1.0, 0.5], [0.5, 1.0]]), kind=MatrixKind.KERNEL)
    M = rank_k_pinv(W, CompletionParams(rank_k=0))
    npt.assert_allclose(M, [[4 / 3, -2 / 3], [-2 / 3, 4 / 3]], rtol=1e-14)


def test_rank_k_pinv_rank_one_hand_value():
    # keep only the eigenvalue 1.5 with eigenvector (1,1)/sqrt(2)
    W = LandmarkBlock(values=np.array([[1.0, 0.5], [0.5, 1.0]]), kind=MatrixKind.KERNEL)
    M = rank_k_pinv(W, CompletionParams(rank_k=1))
    npt.assert_allclose(M, np.full((2, 2), 1 / 3), rtol=1e-14)


def test_rank_k_pinv_signed_matches_pinvh(rng):
    # squared-distance blocks are indefinite; signed inversion must agree
    # with the general symmetric pseudo-inverse
    X = rng.normal(size=(3, 8))
    D2 = pairwise_sq_dist(X, X)
    W = LandmarkBlock(values=D2, kind=MatrixKind.DISTANCE)
    M = rank_k_pinv(W, CompletionParams(rank_k=0))
    npt.assert_allclose(M, scipy.linalg.pinvh(D2), rtol=1e-8, atol=1e-10)


def test_rank_k_pinv_penrose_property(rng):
    X = rng.normal(size=(2, 6))
    W = LandmarkBlock(values=kernel_block(X, X), kind=MatrixKind.KERNEL)
    M = rank_k_pinv(W, CompletionParams(rank_k=0))
    npt.assert_allclose(M @ W.values @ M, M, rtol=1e-9, atol=1e-12)
    npt.assert_allclose(W.values @ M @ W.values, W.values, rtol=1e-9, atol=1e-12)


def test_rank_k_pinv_truncates_rank(rng):
    X = rng.normal(size=(2, 5))
    W = LandmarkBlock(values=kernel_block(X, X), kind=MatrixKind.KERNEL)
    M = rank_k_pinv(W, CompletionParams(rank_k=2))
    eigs = np.abs(scipy.linalg.eigvalsh(M))
    assert np.sum(eigs > 1e-10 * eigs.max()) == 2


def test_nystrom_exact_when_landmarks_are_the_data_kernel(rng):
    X = rng.normal(size=(3, 12))
    K = kernel_block(X, X)
    W = LandmarkBlock(values=K, kind=MatrixKind.KERNEL)
    completed = nystrom_complete(K.copy(), W, CompletionParams(rank_k=12))
    assert np.linalg.norm(completed.values - K) / np.linalg.norm(K) < 1e-10


def test_nystrom_exact_when_landmarks_are_the_data_distance(rng):
    X = rng.normal(size=(3, 10))
    D2 = pairwise_sq_dist(X, X)
    W = LandmarkBlock(values=D2, kind=MatrixKind.DISTANCE)
    completed = nystrom_complete(D2.copy(), W, CompletionParams(rank_k=0))
    assert np.linalg.norm(completed.values - D2) / np.linalg.norm(D2) < 1e-10


def test_nystrom_preserves_known_columns(rng):
    # landmarks are a subset of the data; the completed entries against
    # landmark points must reproduce the uploaded blocks
    X = rng.normal(size=(2, 20))
    idx = np.arange(0, 20, 4)  # 5 landmarks
    Y = X[:, idx]
    B = kernel_block(X, Y)
    W = LandmarkBlock(values=kernel_block(Y, Y), kind=MatrixKind.KERNEL)
    completed = nystrom_complete(B, W, CompletionParams(rank_k=0))
    npt.assert_allclose(completed.values[:, idx], B, rtol=0, atol=1e-12)


def test_nystrom_distance_postprocessing(rng):
    X = rng.normal(size=(2, 15))
    Y = rng.normal(size=(2, 4))
    B = pairwise_sq_dist(X, Y)
    W = LandmarkBlock(values=pairwise_sq_dist(Y, Y), kind=MatrixKind.DISTANCE)
    completed = nystrom_complete(B, W, CompletionParams())
    assert completed.kind is MatrixKind.DISTANCE
    assert completed.values.min() >= 0
    npt.assert_array_equal(np.diag(completed.values), np.zeros(15))
    npt.assert_array_equal(completed.values, completed.values.T)


def test_nystrom_kernel_postprocessing(rng):
    X = rng.normal(size=(2, 15))
    Y = rng.normal(size=(2, 4))
    B = kernel_block(X, Y)
    W = LandmarkBlock(values=kernel_block(Y, Y), kind=MatrixKind.KERNEL)
    completed = nystrom_complete(B, W, CompletionParams())
    assert completed.kind is MatrixKind.KERNEL
    assert completed.values.min() >= 0 and completed.values.max() <= 1
    npt.assert_array_equal(np.diag(completed.values), np.ones(15))


def test_nystrom_provenance(rng):
    X = rng.normal(size=(2, 6))
    Y = rng.normal(size=(2, 3))
    W = LandmarkBlock(values=kernel_block(Y, Y), kind=MatrixKind.KERNEL)
    completed = nystrom_complete(
        kernel_block(X, Y), W, CompletionParams(rank_k=2), privacy_mode="data"
    )
    assert completed.provenance == {
        "n_landmarks": 3,
        "rank_k": 2,
        "ridge_lambda": 0.0,
        "privacy_mode": "data",
    }
    assert completed.n_points == 6


def test_resolve_ridge_explicit_wins():
    W = np.eye(3)
    assert resolve_ridge(W, CompletionParams(ridge_lambda=0.5)) == 0.5


def test_resolve_ridge_auto_triggers_near_singularity():
    eps = 5e-12
    W = np.array([[1.0, 1.0 - eps], [1.0 - eps, 1.0]])  # eigenvalues ~ {eps, 2}
    lam = resolve_ridge(W, CompletionParams(eigen_floor=0.0))
    assert lam == pytest.approx(1e-6 * (1.0 - eps))
    # a well-conditioned block needs no ridge
    assert resolve_ridge(np.eye(2), CompletionParams()) == 0.0


def test_auto_ridge_applied_end_to_end():
    eps = 5e-12
    Wv = np.array([[1.0, 1.0 - eps], [1.0 - eps, 1.0]])
    W = LandmarkBlock(values=Wv, kind=MatrixKind.KERNEL)
    B = np.array([[0.9, 0.8], [0.2, 0.3], [0.5, 0.5]])
    completed = nystrom_complete(B, W, CompletionParams(eigen_floor=0.0))
    assert completed.provenance["ridge_lambda"] > 0
    assert np.isfinite(completed.values).all()


def test_assemble_cross_block_ranges():
    blocks = [np.zeros((3, 4)), np.ones((2, 4)), np.full((5, 4), 2.0)]
    cb = assemble_cross_block(blocks, client_ids=[7, 3, 9])
    assert cb.values.shape == (10, 4)
    assert cb.row_ranges == ((7, 0, 3), (3, 3, 5), (9, 5, 10))
    npt.assert_array_equal(cb.values[3:5], np.ones((2, 4)))


def test_assemble_cross_block_validation():
    with pytest.raises(ValueError, match="at least one"):
        assemble_cross_block([])
    with pytest.raises(ValueError, match="incompatible"):
        assemble_cross_block([np.zeros((2, 3)), np.zeros((2, 4))])
    with pytest.raises(ValueError, match="client ids"):
        assemble_cross_block([np.zeros((2, 3))], client_ids=[1, 2])


def test_cross_block_requires_contiguous_tiling():
    with pytest.raises(ValueError, match="contiguously"):
        CrossBlock(values=np.zeros((4, 2)), row_ranges=((0, 0, 2), (1, 3, 4)))
    with pytest.raises(ValueError, match="cover"):
        CrossBlock(values=np.zeros((4, 2)), row_ranges=((0, 0, 2),))


def test_landmark_block_validation():
    with pytest.raises(ValueError, match="square"):
        LandmarkBlock(values=np.zeros((2, 3)), kind=MatrixKind.DISTANCE)
    with pytest.raises(ValueError, match=">= 2"):
        LandmarkBlock(values=np.zeros((1, 1)), kind=MatrixKind.DISTANCE)
    with pytest.raises(ValueError, match="not symmetric"):
        LandmarkBlock(values=np.array([[0.0, 1.0], [2.0, 0.0]]), kind=MatrixKind.DISTANCE)
    with pytest.raises(ValueError, match="zero diagonal"):
        LandmarkBlock(values=np.array([[1.0, 0.5], [0.5, 1.0]]), kind=MatrixKind.DISTANCE)
    with pytest.raises(ValueError, match="unit diagonal"):
        LandmarkBlock(values=np.array([[0.0, 0.5], [0.5, 0.0]]), kind=MatrixKind.KERNEL)


def test_completion_params_validation():
    with pytest.raises(ValueError):
        CompletionParams(rank_k=-1)
    with pytest.raises(ValueError):
        CompletionParams(ridge_lambda=-0.1)
    with pytest.raises(ValueError):
        CompletionParams(eigen_floor=1.0)


def test_evaluate_bounds_dominates_realized_error(rng):
    X = rng.normal(size=(2, 25))
    Y = rng.normal(size=(2, 8))
    B = kernel_block(X, Y)
    W = LandmarkBlock(values=kernel_block(Y, Y), kind=MatrixKind.KERNEL)
    K_hat = nystrom_complete(B, W, CompletionParams(rank_k=8))
    K_true = kernel_block(X, X)
    rep = evaluate_bounds(Y, K_hat, PARAMS, X=X, K_true=K_true)
    assert rep.realized_frobenius is not None and rep.bound_frobenius is not None
    assert rep.realized_frobenius <= rep.bound_frobenius
    assert rep.noise_term == 0.0 and rep.xi_m is None
    assert rep.n_points == 25 and rep.n_landmarks == 8 and rep.rank_k == 8


def test_evaluate_bounds_noise_inflation(rng):
    X = rng.normal(size=(4, 20))
    Y = rng.normal(size=(4, 6))
    B = kernel_block(X, Y)
    W = LandmarkBlock(values=kernel_block(Y, Y), kind=MatrixKind.KERNEL)
    K_hat = nystrom_complete(B, W, CompletionParams(), privacy_mode="data")
    clean = evaluate_bounds(Y, K_hat, PARAMS, X=X)
    noisy = evaluate_bounds(Y, K_hat, PARAMS, X=X, privacy_mode="data", sigma=0.3, t=1.0)
    m, t = 4, 1.0
    assert noisy.xi_m == pytest.approx(math.sqrt(m + math.sqrt(2 * m * t) + 2 * t))
    assert noisy.noise_term > 0
    assert noisy.bound_frobenius > clean.bound_frobenius
