"""Low-dimensional embeddings computed from a completed distance matrix.

Both engines consume the completed matrix of *squared* Euclidean
distances (``CompletedMatrix`` of distance kind, or a plain symmetric
array with a zero diagonal) and perform full-batch gradient descent on a
dense objective — appropriate for the desk scales this package targets.

t-SNE
    Conditional affinities ``p_{j|i} ∝ exp(-d2_ij / (2 tau_i^2))`` with a
    per-row binary search on the precision so that the perplexity
    ``2^{H(p_.|i)}`` (entropy in bits) matches the target; symmetrised
    joint ``p_ij = (p_{i|j} + p_{j|i}) / (2N)``; Student-t low-dimensional
    affinities; gradient descent with momentum and early exaggeration on
    ``KL(P || Q)``.

UMAP
    Smooth-kNN calibration on the (unsquared) distances: per point the
    ``n_neighbors`` nearest define ``rho_i`` (nearest-neighbour distance)
    and a scale ``sigma_i`` solving
    ``sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(n_neighbors)``;
    fuzzy-union symmetrisation ``mu_ij = mu_{i|j} + mu_{j|i} -
    mu_{i|j} mu_{j|i}``; full-batch descent on the dense fuzzy
    cross-entropy with low-dimensional memberships
    ``1 / (1 + a ||z_i - z_j||^{2b})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalAbort
from .nystrom import CompletedMatrix, MatrixKind

__all__ = [
    "EmbedConfig",
    "AffinityMatrix",
    "Embedding",
    "tsne_affinities",
    "tsne_kl_gradient",
    "tsne_embed",
    "umap_graph",
    "umap_ce_gradient",
    "umap_embed",
]

#: probability floor used wherever a log of an affinity is taken.
_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class EmbedConfig:
    """Shared configuration for both embedding engines.

    Engine-specific fields are ignored by the other engine.  Use
    ``tsne_defaults`` / ``umap_defaults`` for conventional settings.
    """

    out_dim: int = 2
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    early_exaggeration_iters: int = 250
    perplexity: float = 30.0
    n_neighbors: int = 15
    a: float = 1.0
    b: float = 1.0
    init_scale: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.out_dim < 1:
            raise ValueError(f"out_dim must be >= 1, got {self.out_dim}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be finite and > 0, got {self.learning_rate!r}")
        for name in ("momentum", "final_momentum"):
            v = getattr(self, name)
            if not (0 <= v < 1):
                raise ValueError(f"{name} must lie in [0, 1), got {v!r}")
        if self.early_exaggeration < 1:
            raise ValueError(f"early_exaggeration must be >= 1, got {self.early_exaggeration!r}")
        if self.early_exaggeration_iters < 0 or self.momentum_switch_iter < 0:
            raise ValueError("iteration thresholds must be >= 0")
        if not (self.perplexity > 0 and np.isfinite(self.perplexity)):
            raise ValueError(f"perplexity must be finite and > 0, got {self.perplexity!r}")
        if self.n_neighbors < 1:
            raise ValueError(f"n_neighbors must be >= 1, got {self.n_neighbors}")
        for name in ("a", "b"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        if self.init_scale < 0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale!r}")

    @classmethod
    def tsne_defaults(cls, **overrides) -> "EmbedConfig":
        return replace(cls(), **overrides)

    @classmethod
    def umap_defaults(cls, **overrides) -> "EmbedConfig":
        base = cls(
            iterations=500,
            learning_rate=0.1,
            momentum=0.0,
            final_momentum=0.0,
            momentum_switch_iter=0,
            early_exaggeration=1.0,
            early_exaggeration_iters=0,
            init_scale=1.0,
        )
        return replace(base, **overrides)


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric affinity/membership matrix with construction diagnostics.

    ``fallback_rows`` lists rows where the per-row calibration could not
    bracket its target (e.g. all-equal distances) and a uniform row was
    substituted.
    """

    values: np.ndarray
    kind: str
    fallback_rows: tuple[int, ...] = ()


@dataclass
class Embedding:
    """Low-dimensional point coordinates plus the objective trace.

    ``objective_trace[k]`` is the loss at iterate ``k`` (entry 0 is the
    initial configuration), length ``iterations + 1``.
    """

    Z: np.ndarray
    objective_trace: np.ndarray
    engine: str
    diagnostics: dict = field(default_factory=dict)


def _distance_values(D) -> np.ndarray:
    """Accept a CompletedMatrix (distance kind) or a plain symmetric array."""
    if isinstance(D, CompletedMatrix):
        if D.kind is not MatrixKind.DISTANCE:
            raise ValueError("embedding inputs must be distance-kind matrices")
        vals = D.values
    else:
        vals = np.asarray(D, dtype=np.float64)
    if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {vals.shape}")
    if not np.isfinite(vals).all():
        raise ValueError("distance matrix contains non-finite entries")
    if vals.size and vals.min() < 0:
        raise ValueError("distance matrix contains negative entries")
    if float(np.abs(vals - vals.T).max()) > 1e-8 * max(1.0, float(vals.max())):
        raise ValueError("distance matrix is not symmetric")
    return 0.5 * (vals + vals.T)


def _row_affinity(d2_row: np.ndarray, target_perp: float) -> tuple[np.ndarray, bool]:
    """Binary search on the precision ``beta = 1/(2 tau^2)`` of one row.

    Returns the conditional distribution over the other points and a flag
    marking a fallback to the uniform distribution when the search cannot
    reach the target (within ``1e-4``).
    """
    n_other = d2_row.size
    d = d2_row - d2_row.min()
    beta, lo, hi = 1.0, 0.0, math.inf
    p = np.full(n_other, 1.0 / n_other)
    for _ in range(128):
        e = np.exp(-beta * d)
        s = float(e.sum())
        p = e / s
        # Perplexity is base-invariant: exp of the entropy in nats equals
        # 2 to the entropy in bits.
        h = math.log(s) + beta * float((d * e).sum()) / s
        perp = math.exp(h)
        if abs(perp - target_perp) <= 1e-4:
            return p, False
        if perp > target_perp:  # too flat -> sharpen
            lo = beta
            beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
    # Could not bracket (e.g. all distances equal): uniform fallback.
    return np.full(n_other, 1.0 / n_other), True


def tsne_affinities(D, perplexity: float = 30.0) -> AffinityMatrix:
    """Symmetrised joint t-SNE affinities from squared distances.

    Requires ``3 <= n`` points and ``0 < perplexity < n``.  Each
    conditional row sums to one; the joint matrix ``(P + P') / (2N)``
    sums to one and has a zero diagonal.
    """
    D2 = _distance_values(D)
    n = D2.shape[0]
    if n < 3:
        raise ValueError(f"t-SNE affinities need >= 3 points, got {n}")
    if not (0 < perplexity < n):
        raise ValueError(f"perplexity must lie in (0, {n}), got {perplexity!r}")
    cond = np.zeros((n, n))
    fallbacks = []
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        row, fb = _row_affinity(D2[i, mask], perplexity)
        cond[i, mask] = row
        if fb:
            fallbacks.append(i)
    P = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    return AffinityMatrix(values=P, kind="tsne_joint", fallback_rows=tuple(fallbacks))


def _student_t_weights(Z: np.ndarray) -> tuple[np.ndarray, float]:
    """Unnormalised Student-t weights ``1/(1+||z_i-z_j||^2)`` and their sum."""
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = sq[:, None] - 2.0 * (Z @ Z.T) + sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    W = 1.0 / (1.0 + d2)
    np.fill_diagonal(W, 0.0)
    return W, float(W.sum())


def tsne_kl_gradient(P: np.ndarray, Z: np.ndarray) -> tuple[float, np.ndarray]:
    """KL divergence ``KL(P || Q)`` and its gradient with respect to ``Z``.

    ``Q`` uses Student-t affinities; the gradient is
    ``4 sum_j (p_ij - q_ij) (1 + ||z_i - z_j||^2)^{-1} (z_i - z_j)``.
    Probabilities are floored at 1e-12 inside the logarithm only.
    """
    W, s = _student_t_weights(Z)
    Q = W / s
    PQ = (P - Q) * W
    grad = 4.0 * (PQ.sum(axis=1)[:, None] * Z - PQ @ Z)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.log(np.maximum(P, _LOG_FLOOR) / np.maximum(Q, _LOG_FLOOR))
    kl = float(np.sum(np.where(P > 0, P * logterm, 0.0)))
    return kl, grad


def _canonical_rank(A: np.ndarray) -> np.ndarray:
    """Canonical position of every point, derived from row statistics.

    The keys (row sum, row sum-of-squares, row maximum) are accumulated
    over the *sorted* row, so a column permutation cannot change them
    even in the last bit; assigning seeded initialisation noise by
    canonical position then makes the embedding equivariant to global
    point reordering.  Exact key ties fall back to input order.
    """
    S = np.sort(A, axis=1)
    k1 = S.sum(axis=1)
    k2 = (S * S).sum(axis=1)
    k3 = S[:, -1] if A.size else k1
    order = np.lexsort((k3, k2, k1))
    rank = np.empty(A.shape[0], dtype=np.intp)
    rank[order] = np.arange(A.shape[0])
    return rank


def tsne_embed(P: AffinityMatrix | np.ndarray, config: EmbedConfig) -> Embedding:
    """Momentum gradient descent on ``KL(P || Q)``.

    Early exaggeration multiplies ``P`` for the configured number of
    iterations; the momentum coefficient switches at its configured
    iteration; the trace records the loss against the *unexaggerated*
    affinities at every iterate.

    After the exaggeration phase every step is descent-safeguarded: a
    proposed momentum step that would increase the loss is halved (with
    the velocity damped accordingly) until the loss is non-increasing,
    so the recorded trace never rises once exaggeration ends.
    """
    Pm = P.values if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=np.float64)
    n = Pm.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    noise = rng.normal(size=(n, config.out_dim))
    Z = config.init_scale * noise[_canonical_rank(Pm)]
    V = np.zeros_like(Z)
    trace = np.empty(config.iterations + 1)
    damped_steps = 0
    for it in range(config.iterations):
        exaggerate = it < config.early_exaggeration_iters
        P_eff = Pm * config.early_exaggeration if exaggerate else Pm
        kl_eff, grad = tsne_kl_gradient(P_eff, Z)
        trace[it] = _kl_only(Pm, Z) if exaggerate else kl_eff
        mom = config.momentum if it < config.momentum_switch_iter else config.final_momentum
        V = mom * V - config.learning_rate * grad
        if exaggerate:
            Z = Z + V
        else:
            kl_now = kl_eff
            step = V
            cand = Z + step
            kl_new = _kl_only(Pm, cand)
            shrink = 0
            while kl_new > kl_now and shrink < 30:
                step = 0.5 * step
                cand = Z + step
                kl_new = _kl_only(Pm, cand)
                shrink += 1
            if kl_new > kl_now:  # stay put and restart the velocity
                V = np.zeros_like(Z)
                cand = Z
            elif shrink:
                damped_steps += 1
                V = step
            Z = cand
        Z = Z - Z.mean(axis=0)
        if not np.isfinite(Z).all():
            raise NumericalAbort(f"t-SNE produced non-finite coordinates at iteration {it + 1}")
    trace[config.iterations] = _kl_only(Pm, Z)
    return Embedding(
        Z=Z,
        objective_trace=trace,
        engine="tsne",
        diagnostics={"damped_steps": damped_steps},
    )


def _kl_only(P: np.ndarray, Z: np.ndarray) -> float:
    W, s = _student_t_weights(Z)
    Q = W / s
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.log(np.maximum(P, _LOG_FLOOR) / np.maximum(Q, _LOG_FLOOR))
    return float(np.sum(np.where(P > 0, P * logterm, 0.0)))


def _smooth_knn_sigma(d_shifted: np.ndarray, target: float) -> float:
    """Binary search for the scale solving ``sum exp(-d/sigma) = target``.

    ``d_shifted`` holds the rho-shifted non-negative neighbour distances.
    """

    def total(sigma: float) -> float:
        return float(np.exp(-d_shifted / sigma).sum())

    lo, hi = 0.0, 1.0
    for _ in range(64):
        if total(hi) >= target:
            break
        lo, hi = hi, hi * 2.0
    else:
        return hi
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0:
            break
        if total(mid) < target:
            lo = mid
        else:
            hi = mid
    return max(0.5 * (lo + hi), 1e-12)


def umap_graph(D, n_neighbors: int = 15) -> AffinityMatrix:
    """Fuzzy neighbourhood graph from squared distances.

    Works on the square roots of the entries (plain distances);
    neighbours are chosen by distance with ties broken by index.  Each
    point's nearest neighbour receives membership one; memberships are
    symmetrised with the fuzzy union.
    """
    D2 = _distance_values(D)
    n = D2.shape[0]
    if n < 2:
        raise ValueError(f"the UMAP graph needs >= 2 points, got {n}")
    if not (1 <= n_neighbors <= n - 1):
        raise ValueError(f"n_neighbors must lie in [1, {n - 1}], got {n_neighbors}")
    Dd = np.sqrt(D2)
    target = math.log2(n_neighbors) if n_neighbors > 1 else 1.0
    cond = np.zeros((n, n))
    for i in range(n):
        d = Dd[i].copy()
        d[i] = math.inf
        order = np.argsort(d, kind="stable")[:n_neighbors]
        nd = d[order]
        rho = float(nd[0])
        shifted = np.maximum(nd - rho, 0.0)
        if n_neighbors == 1:
            cond[i, order] = 1.0
            continue
        sigma = _smooth_knn_sigma(shifted, target)
        cond[i, order] = np.exp(-shifted / sigma)
    mu = cond + cond.T - cond * cond.T
    np.fill_diagonal(mu, 0.0)
    return AffinityMatrix(values=mu, kind="umap_membership")


def umap_ce_gradient(
    mu: np.ndarray, Z: np.ndarray, a: float = 1.0, b: float = 1.0
) -> tuple[float, np.ndarray]:
    """Fuzzy cross-entropy and its gradient for low-dim memberships
    ``w = 1 / (1 + a d^{2b})``.

    ``1 - w`` (and ``w``) are floored at 1e-12 consistently in the loss
    and the gradient, so finite differences of the returned loss match
    the returned gradient away from the floor region.
    ."""
    n = Z.shape[0]
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = sq[:, None] - 2.0 * (Z @ Z.T) + sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    off = ~np.eye(n, dtype=bool)
    d2b = np.power(np.maximum(d2, _LOG_FLOOR), b) if b != 1.0 else d2
    w = 1.0 / (1.0 + a * d2b)
    one_minus_w = np.maximum(1.0 - w, _LOG_FLOOR)
    wf = np.maximum(w, _LOG_FLOOR)

    with np.errstate(divide="ignore", invalid="ignore"):
        attract = np.where(mu > 0, mu * np.log(np.maximum(mu, _LOG_FLOOR) / wf), 0.0)
        rep_mu = 1.0 - mu
        repulse = np.where(
            rep_mu > 0, rep_mu * np.log(np.maximum(rep_mu, _LOG_FLOOR) / one_minus_w), 0.0
        )
    loss = float(np.sum(np.where(off, attract + repulse, 0.0)))

    # d w / d d2 = -a b d2^{b-1} w^2; chain through both log terms.
    d2bm1 = np.power(np.maximum(d2, _LOG_FLOOR), b - 1.0) if b != 1.0 else 1.0
    dldw = np.where(off & (w > _LOG_FLOOR), -mu / wf, 0.0) + np.where(
        off & (1.0 - w > _LOG_FLOOR), (1.0 - mu) / one_minus_w, 0.0
    )
    coeff = dldw * (-a * b * d2bm1 * w * w)  # d loss / d d2_ij (per ordered pair)
    coeff = np.where(off, coeff, 0.0)
    grad = 4.0 * (coeff.sum(axis=1)[:, None] * Z - coeff @ Z)
    return loss, grad


def _spectral_layout(M: np.ndarray, out_dim: int, noise: np.ndarray) -> np.ndarray:
    """Graph-spectral starting layout for the membership matrix ``M``.

    Computes the leading non-trivial eigenvectors of the symmetrically
    normalised adjacency by subspace iteration started from the seeded
    ``noise`` block.  Subspace iteration (rather than a LAPACK
    eigensolver) keeps the result equivariant under point reordering
    even when the leading eigenvalues are degenerate, because every step
    is an equivariant map of the equivariant starting block.  The layout
    is scaled to a maximum absolute coordinate of 10.
    """
    n = M.shape[0]
    deg = M.sum(axis=1)
    active = deg > 0
    V = np.zeros((n, out_dim))
    n_act = int(active.sum())
    if n_act >= 2:
        d_isqrt = 1.0 / np.sqrt(deg[active])
        S = d_isqrt[:, None] * M[np.ix_(active, active)] * d_isqrt[None, :]
        trivial = np.sqrt(deg[active])
        trivial = trivial / np.linalg.norm(trivial)
        B = noise[active]
        for _ in range(50):
            B = S @ B
            B = B - trivial[:, None] * (trivial @ B)[None, :]
            # Gram-Schmidt keeps the block well conditioned; rank-deficient
            # directions are left at zero.
            for j in range(out_dim):
                for i in range(j):
                    B[:, j] -= (B[:, i] @ B[:, j]) * B[:, i]
                nrm = np.linalg.norm(B[:, j])
                B[:, j] = B[:, j] / nrm if nrm > 1e-12 else 0.0
        V[active] = B
    peak = np.abs(V).max()
    if peak > 0:
        V *= 10.0 / peak
    return V


def umap_embed(mu: AffinityMatrix | np.ndarray, config: EmbedConfig) -> Embedding:
    """Descent-safeguarded full-batch gradient descent on the dense
    fuzzy cross-entropy, started from a graph-spectral layout.

    Any step that would increase the loss is halved (damping the
    velocity) until it does not, so the objective trace is
    non-increasing from the first iteration.
    """
    M = mu.values if isinstance(mu, AffinityMatrix) else np.asarray(mu, dtype=np.float64)
    n = M.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    rank = _canonical_rank(M)
    start_noise = rng.normal(size=(n, config.out_dim))[rank]
    jitter = rng.normal(size=(n, config.out_dim))[rank]
    Z = config.init_scale * (_spectral_layout(M, config.out_dim, start_noise) + 1e-4 * jitter)
    V = np.zeros_like(Z)
    trace = np.empty(config.iterations + 1)
    damped_steps = 0
    loss, grad = umap_ce_gradient(M, Z, a=config.a, b=config.b)
    for it in range(config.iterations):
        trace[it] = loss
        mom = config.momentum if it < config.momentum_switch_iter else config.final_momentum
        # The repulsive part of the cross-entropy diverges for
        # near-coincident non-neighbours; clip the descent direction
        # elementwise (the conventional remedy) so one colliding pair
        # cannot fling points across the layout.
        V = mom * V - config.learning_rate * np.clip(grad, -4.0, 4.0)
        step = V
        cand = Z + step
        loss_new, grad_new = umap_ce_gradient(M, cand, a=config.a, b=config.b)
        shrink = 0
        while loss_new > loss and shrink < 30:
            step = 0.5 * step
            cand = Z + step
            loss_new, grad_new = umap_ce_gradient(M, cand, a=config.a, b=config.b)
            shrink += 1
        if loss_new > loss:  # stay put and restart the velocity
            V = np.zeros_like(Z)
            grad_new = grad
            loss_new = loss
            cand = Z
        elif shrink:
            damped_steps += 1
            V = step
        Z, loss, grad = cand, loss_new, grad_new
        if not np.isfinite(Z).all():
            raise NumericalAbort(f"UMAP produced non-finite coordinates at iteration {it + 1}")
    trace[config.iterations] = loss
    return Embedding(
        Z=Z,
        objective_trace=trace,
        engine="umap",
        diagnostics={"damped_steps": damped_steps},
    )
