"""Gaussian-kernel primitives and the maximum mean discrepancy (MMD).

Conventions used throughout the package:

* data matrices are ``m x n`` arrays whose *columns* are points
  (``m`` features, ``n`` points);
* ``pairwise_sq_dist`` returns *squared* Euclidean distances;
* the Gaussian kernel is ``k(x, y) = exp(-gamma * ||x - y||^2)``;
* the MMD between a shard ``X`` (n_x points) and a candidate set ``Y``
  (n_y points) is the unbiased estimator

      [1' K_XX 1 - n_x] / (n_x (n_x - 1))
    - 2 * 1' K_XY 1 / (n_x n_y)
    + [1' K_YY 1 - n_y] / (n_y (n_y - 1))

  which requires at least two points on each side.

All reductions go through ``numpy`` sums (pairwise summation with a fixed
traversal order), so results do not depend on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "pairwise_sq_dist",
    "gaussian_kernel",
    "mmd",
    "mmd_gradient",
    "median_heuristic_gamma",
]


@dataclass(frozen=True)
class KernelParams:
    """Bandwidth parameter of the Gaussian kernel.

    ``gamma`` must be finite and non-negative.  ``gamma == 0`` yields the
    degenerate all-ones kernel; it is accepted (useful in tests) but not a
    sensible operating point.
    """

    gamma: float

    def __post_init__(self) -> None:
        g = float(self.gamma)
        if not np.isfinite(g):
            raise ValueError(f"gamma must be finite, got {self.gamma!r}")
        if g < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of column points, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def pairwise_sq_dist(X, Y) -> np.ndarray:
    """Squared Euclidean distances between column points of ``X`` and ``Y``.

    Returns an ``n_x x n_y`` matrix with entry ``(i, j)`` equal to
    ``||X[:, i] - Y[:, j]||^2``, computed through the Gram expansion

        D2 = diag(X'X) 1' - 2 X'Y + 1 diag(Y'Y)'

    with negative round-off clamped to zero.  When both arguments hold the
    same points the result is symmetrised and its diagonal pinned to
    exactly zero.
    """
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(
            f"feature dimensions differ: X has {X.shape[0]} rows, Y has {Y.shape[0]}"
        )
    sx = np.einsum("ij,ij->j", X, X)
    sy = sx if Y is X else np.einsum("ij,ij->j", Y, Y)
    D2 = sx[:, None] - 2.0 * (X.T @ Y) + sy[None, :]
    np.maximum(D2, 0.0, out=D2)
    same = Y is X or (X.shape == Y.shape and np.array_equal(X, Y))
    if same:
        D2 = 0.5 * (D2 + D2.T)
        np.fill_diagonal(D2, 0.0)
    return D2


def gaussian_kernel(D2, params: KernelParams) -> np.ndarray:
    """Entry-wise Gaussian kernel ``exp(-gamma * D2)``.

    ``D2`` must hold finite, non-negative squared distances; the result
    lies in ``(0, 1]``.
    """
    D2 = np.asarray(D2, dtype=np.float64)
    if not np.isfinite(D2).all():
        raise ValueError("D2 contains non-finite entries")
    if D2.size and D2.min() < 0:
        raise ValueError("D2 contains negative entries; expected squared distances")
    return np.exp(-params.gamma * D2)


def _self_term(A: np.ndarray, params: KernelParams) -> float:
    """``[1' K_AA 1 - n] / (n (n - 1))`` for the columns of ``A``."""
    n = A.shape[1]
    K = gaussian_kernel(pairwise_sq_dist(A, A), params)
    return (float(K.sum()) - n) / (n * (n - 1))


def _cross_term(Xp: np.ndarray, Y: np.ndarray, params: KernelParams) -> float:
    """``-2 * 1' K_XY 1 / (n_x n_y)``."""
    K = gaussian_kernel(pairwise_sq_dist(Xp, Y), params)
    return -2.0 * float(K.sum()) / (Xp.shape[1] * Y.shape[1])


def mmd(Xp, Y, params: KernelParams) -> float:
    """Unbiased Gaussian-kernel MMD estimate between column sets.

    Both sides need at least two points.  The estimator can be slightly
    negative; it is exactly zero when both sides are copies of a single
    repeated point.
    """
    Xp = _as_points(Xp, "Xp")
    Y = _as_points(Y, "Y")
    if Xp.shape[0] != Y.shape[0]:
        raise ValueError(
            f"feature dimensions differ: Xp has {Xp.shape[0]} rows, Y has {Y.shape[0]}"
        )
    if Xp.shape[1] < 2 or Y.shape[1] < 2:
        raise ValueError(
            f"mmd needs >= 2 points on each side, got {Xp.shape[1]} and {Y.shape[1]}"
        )
    return _self_term(Xp, params) + _cross_term(Xp, Y, params) + _self_term(Y, params)


def mmd_gradient(Xp, Y, params: KernelParams) -> np.ndarray:
    """Gradient of ``mmd(Xp, Y)`` with respect to the landmark matrix ``Y``.

        (-4 gamma / (n_p n_y)) [ Xp K_XY - Y diag(1' K_XY) ]
      + ( 4 gamma / (n_y (n_y - 1))) [ Y K_YY - Y diag(1' K_YY) ]

    Returns an array with the shape of ``Y``.  ``gamma == 0`` gives an
    exactly zero gradient.
    """
    Xp = _as_points(Xp, "Xp")
    Y = _as_points(Y, "Y")
    if Xp.shape[0] != Y.shape[0]:
        raise ValueError(
            f"feature dimensions differ: Xp has {Xp.shape[0]} rows, Y has {Y.shape[0]}"
        )
    n_p, n_y = Xp.shape[1], Y.shape[1]
    if n_p < 2 or n_y < 2:
        raise ValueError(f"mmd_gradient needs >= 2 points on each side, got {n_p} and {n_y}")
    g = params.gamma
    Kxy = gaussian_kernel(pairwise_sq_dist(Xp, Y), params)
    Kyy = gaussian_kernel(pairwise_sq_dist(Y, Y), params)
    cross = (Xp @ Kxy) - Y * Kxy.sum(axis=0)[None, :]
    self_ = (Y @ Kyy) - Y * Kyy.sum(axis=0)[None, :]
    return (-4.0 * g / (n_p * n_y)) * cross + (4.0 * g / (n_y * (n_y - 1))) * self_


def median_heuristic_gamma(Y, max_sample: int = 256) -> float:
    """Bandwidth heuristic: ``1 / (2 * median pairwise squared distance)``.

    Evaluated on at most ``max_sample`` columns of ``Y`` (evenly spaced,
    so the choice is deterministic).  Falls back to ``1.0`` when the
    median vanishes (all sampled points identical).
    """
    Y = _as_points(Y, "Y")
    n = Y.shape[1]
    if n > max_sample:
        idx = np.linspace(0, n - 1, max_sample).round().astype(int)
        Y = Y[:, idx]
        n = max_sample
    if n < 2:
        return 1.0
    D2 = pairwise_sq_dist(Y, Y)
    med = float(np.median(D2[np.triu_indices(n, k=1)]))
    if not np.isfinite(med) or med <= 0.0:
        return 1.0
    return 1.0 / (2.0 * med)
