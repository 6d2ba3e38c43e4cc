"""Evaluation metrics for embeddings and clusterings.

* ``ca_knn`` — classification accuracy of a k-nearest-neighbour vote on
  a stratified train/test split of the embedding;
* ``npa_knn`` — neighbourhood preservation: mean overlap between each
  point's k nearest neighbours under the high-dimensional distances and
  under the embedding;
* ``nmi`` — normalised mutual information with geometric normalisation
  ``I(a; b) / sqrt(H(a) H(b))``;
* ``silhouette`` — mean silhouette coefficient (singletons score 0);
* ``ari`` — adjusted Rand index.

``MetricsReport`` bundles one run's numbers; ``summarize_reports``
aggregates several runs (one per seed) into mean/std pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nystrom import CompletedMatrix

__all__ = [
    "MetricsReport",
    "MetricsSummary",
    "ca_knn",
    "npa_knn",
    "nmi",
    "silhouette",
    "ari",
    "summarize_reports",
]


def _pairwise_dist_rows(Z: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = sq[:, None] - 2.0 * (Z @ Z.T) + sq[None, :]
    return np.sqrt(np.maximum(d2, 0.0))


def _check_labels(labels, n: int, name: str = "labels") -> np.ndarray:
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.shape[0] != n:
        raise ValueError(f"{name} must be 1-D of length {n}, got shape {lab.shape}")
    return lab


def ca_knn(
    Z: np.ndarray,
    labels,
    k: int = 10,
    split_ratio: float = 0.7,
    seed: int = 0,
) -> float:
    """k-NN classification accuracy on a stratified split of ``Z``.

    Per class, a ``split_ratio`` fraction (rounded, at least one point)
    goes to the training side.  Votes are majority with ties resolved
    toward the smallest label id; neighbour ties resolve by index.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    lab = _check_labels(labels, n)
    if not (0 < split_ratio < 1):
        raise ValueError(f"split_ratio must lie in (0, 1), got {split_ratio!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    classes, enc = np.unique(lab, return_inverse=True)
    train_idx, test_idx = [], []
    for ci in range(classes.size):
        members = np.flatnonzero(enc == ci)
        members = members[rng.permutation(members.size)]
        n_train = min(max(int(round(split_ratio * members.size)), 1), members.size)
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    if test.size == 0:
        raise ValueError("stratified split produced an empty test side; lower split_ratio")
    if k > train.size:
        raise ValueError(f"k={k} exceeds the training-side size {train.size}")
    sq_tr = np.einsum("ij,ij->i", Z[train], Z[train])
    sq_te = np.einsum("ij,ij->i", Z[test], Z[test])
    d2 = sq_te[:, None] - 2.0 * (Z[test] @ Z[train].T) + sq_tr[None, :]
    nbr = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = enc[train][nbr]
    n_classes = classes.size
    counts = np.zeros((test.size, n_classes), dtype=np.int64)
    for j in range(k):
        np.add.at(counts, (np.arange(test.size), votes[:, j]), 1)
    pred = counts.argmax(axis=1)  # argmax returns the smallest index on ties
    return float(np.mean(pred == enc[test]))


def npa_knn(
    D_high,
    Z: np.ndarray,
    k: int = 10,
    labels=None,
    variant: str = "overlap",
) -> float:
    """Neighbourhood preservation of the embedding.

    ``variant="overlap"`` (default): mean fraction of each point's k
    nearest high-dimensional neighbours that are also among its k
    nearest embedding neighbours.  ``variant="labels"``: mean fraction
    of each point's k nearest *embedding* neighbours sharing the point's
    true label (requires ``labels``); an alternative reading of
    neighbourhood quality, provided for comparison.  Self is excluded;
    ties break by index.
    """
    if isinstance(D_high, CompletedMatrix):
        Dh = D_high.values
    else:
        Dh = np.asarray(D_high, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if Dh.shape != (n, n):
        raise ValueError(f"high-dim distances must be {n}x{n}, got {Dh.shape}")
    if not (1 <= k <= n - 1):
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    if variant not in ("overlap", "labels"):
        raise ValueError(f"variant must be 'overlap' or 'labels', got {variant!r}")
    Dl = _pairwise_dist_rows(Z)
    if variant == "labels":
        lab = _check_labels(labels, n)
        agree = 0.0
        for i in range(n):
            lo = Dl[i].copy()
            lo[i] = math.inf
            nl = np.argsort(lo, kind="stable")[:k]
            agree += float(np.mean(lab[nl] == lab[i]))
        return agree / n
    overlap = 0.0
    for i in range(n):
        hi = Dh[i].copy()
        lo = Dl[i].copy()
        hi[i] = lo[i] = math.inf
        nh = set(np.argsort(hi, kind="stable")[:k].tolist())
        nl = set(np.argsort(lo, kind="stable")[:k].tolist())
        overlap += len(nh & nl) / k
    return overlap / n


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def nmi(a, b) -> float:
    """Normalised mutual information ``I(a;b) / sqrt(H(a) H(b))``.

    When either labelling has zero entropy: 1.0 if both are the same
    single-class labelling, otherwise 0.0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("nmi needs two equal-length non-empty 1-D labellings")
    n = a.size
    table = _contingency(a, b)
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0.0 or hb == 0.0:
        return 1.0 if ha == hb == 0.0 else 0.0
    nz = table > 0
    nij = table[nz].astype(np.float64)
    outer = (table.sum(axis=1)[:, None] * table.sum(axis=0)[None, :])[nz]
    mi = float((nij / n * np.log(n * nij / outer)).sum())
    return mi / math.sqrt(ha * hb)


def silhouette(Z: np.ndarray, labels) -> float:
    """Mean silhouette coefficient over all points.

    Per point ``(b - a) / max(a, b)`` with ``a`` the mean distance to its
    own cluster (excluding itself) and ``b`` the smallest mean distance
    to another cluster.  Singleton-cluster points score 0; a 0/0 (all
    coincident points) also scores 0.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    lab = _check_labels(labels, n)
    classes, enc = np.unique(lab, return_inverse=True)
    if classes.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    D = _pairwise_dist_rows(Z)
    sizes = np.bincount(enc, minlength=classes.size)
    # sums[i, c] = total distance from point i to all members of cluster c
    sums = np.zeros((n, classes.size))
    for ci in range(classes.size):
        sums[:, ci] = D[:, enc == ci].sum(axis=1)
    scores = np.zeros(n)
    for i in range(n):
        ci = enc[i]
        if sizes[ci] == 1:
            continue  # singleton scores 0
        a_i = sums[i, ci] / (sizes[ci] - 1)
        others = [sums[i, cj] / sizes[cj] for cj in range(classes.size) if cj != ci]
        b_i = min(others)
        denom = max(a_i, b_i)
        scores[i] = 0.0 if denom == 0.0 else (b_i - a_i) / denom
    return float(scores.mean())


def _comb2(x: np.ndarray) -> float:
    x = x.astype(np.float64)
    return float((x * (x - 1.0) / 2.0).sum())


def ari(a, b) -> float:
    """Adjusted Rand index via pair counting.

    Degenerate cases where the expected and maximum index coincide
    (both labellings trivial and identical) return 1.0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("ari needs two equal-length non-empty 1-D labellings")
    n = a.size
    table = _contingency(a, b)
    index = _comb2(table.ravel())
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    total = n * (n - 1.0) / 2.0
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    denom = max_index - expected
    if denom == 0.0:
        return 1.0
    return (index - expected) / denom


@dataclass(frozen=True)
class MetricsReport:
    """Metrics of a single run."""

    ca: dict[int, float] = field(default_factory=dict)
    npa: dict[int, float] = field(default_factory=dict)
    nmi: float | None = None
    sc: float | None = None
    ari: float | None = None

    def rows(self) -> list[tuple[str, float]]:
        out: list[tuple[str, float]] = []
        for k in sorted(self.ca):
            out.append((f"ca_knn_{k}", self.ca[k]))
        for k in sorted(self.npa):
            out.append((f"npa_knn_{k}", self.npa[k]))
        for name in ("nmi", "sc", "ari"):
            v = getattr(self, name)
            if v is not None:
                out.append((name, v))
        return out


@dataclass(frozen=True)
class MetricsSummary:
    """Per-metric mean and sample standard deviation across seeds."""

    mean: dict[str, float]
    std: dict[str, float]
    n_runs: int

    def format(self, name: str, digits: int = 4) -> str:
        return f"{self.mean[name]:.{digits}f}±{self.std[name]:.{digits}f}"


def summarize_reports(reports: list[MetricsReport]) -> MetricsSummary:
    """Aggregate per-seed reports into mean ± sample-std (ddof=1; a single
    run reports std 0)."""
    if not reports:
        raise ValueError("at least one report is required")
    names = [name for name, _ in reports[0].rows()]
    values = {name: [] for name in names}
    for rep in reports:
        for name, v in rep.rows():
            values[name].append(v)
    mean = {k: float(np.mean(v)) for k, v in values.items()}
    std = {
        k: (float(np.std(v, ddof=1)) if len(v) > 1 else 0.0) for k, v in values.items()
    }
    return MetricsSummary(mean=mean, std=std, n_runs=len(reports))
