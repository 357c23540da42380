"""Cosine k-means coarse quantizer: k-means++ seeding plus Lloyd refinement.

Centroids are kept unit-length after every update so that inner-product
assignment agrees with cosine similarity on the unit-normalized corpus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .store import EmbeddingMatrix

MAX_NLIST = 65536


@dataclass(frozen=True)
class Centroids:
    """Row-major float32 centroid vectors, one unit row per inverted list."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != np.float32:
            raise ValueError("centroid data must be a 2-D float32 array")
        if self.data.shape[0] < 1:
            raise ValueError("need at least one centroid")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("centroids must be finite")

    @property
    def nlist(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def default_nlist(count: int) -> int:
    """round(sqrt(count)), clamped to [1, 65536] and never above count."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return max(1, min(MAX_NLIST, count, round(math.sqrt(count))))


def default_nprobe(nlist: int) -> int:
    return max(1, nlist // 16)


def assign_to_centroids(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row by inner product, ties to the lowest index."""
    n = data.shape[0]
    out = np.empty(n, dtype=np.int32)
    # block the score matrix to ~64MB regardless of nlist
    block = max(1, (1 << 24) // max(1, centroids.shape[0]))
    ct = np.ascontiguousarray(centroids.T)
    for start in range(0, n, block):
        scores = data[start : start + block] @ ct
        out[start : start + block] = np.argmax(scores, axis=1)
    return out


def _kmeanspp_init(data: np.ndarray, nlist: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    chosen = np.empty(nlist, dtype=np.int64)
    chosen[0] = rng.integers(n)
    # squared euclidean distance to nearest chosen centroid; rows are unit
    best = np.maximum(2.0 - 2.0 * (data @ data[chosen[0]]), 0.0).astype(np.float64)
    picked = np.zeros(n, dtype=bool)
    picked[chosen[0]] = True
    for i in range(1, nlist):
        best[picked] = 0.0
        total = float(best.sum())
        if total > 0.0:
            cum = np.cumsum(best)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            if picked[idx]:
                idx = int(np.flatnonzero(~picked)[0])
        else:
            # all remaining mass is zero (duplicate-heavy data)
            idx = int(np.flatnonzero(~picked)[0])
        chosen[i] = idx
        picked[idx] = True
        np.minimum(best, np.maximum(2.0 - 2.0 * (data @ data[idx]), 0.0), out=best)
    return data[chosen].copy()


def repair_empty_assignments(
    data: np.ndarray, centroids: np.ndarray, assign: np.ndarray
) -> np.ndarray:
    """Give each empty cluster the worst-fit point from a cluster with >= 2 members.

    The stolen point is the one with the lowest inner product against its own
    assigned centroid (ties to the lowest position). Restricting donors to
    clusters of two or more keeps the repair from emptying another cluster.
    """
    nlist = centroids.shape[0]
    counts = np.bincount(assign, minlength=nlist)
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return assign
    assign = assign.copy()
    own_score = np.einsum("ij,ij->i", data, centroids[assign]).astype(np.float64)
    for e in empties:
        eligible = counts[assign] >= 2
        scores = np.where(eligible, own_score, np.inf)
        victim = int(np.argmin(scores))
        counts[assign[victim]] -= 1
        assign[victim] = e
        counts[e] = 1
    return assign


def train_kmeans(
    vectors: EmbeddingMatrix | np.ndarray,
    nlist: int,
    seed: int = 0,
    max_iters: int = 25,
    sample_cap: int = 256,
) -> Centroids:
    """Train unit-length centroids; deterministic given (vectors, nlist, seed, max_iters).

    Training runs on a seeded subsample of at most sample_cap * nlist rows.
    Lloyd iterations stop at an assignment fixpoint or after max_iters.
    """
    data = vectors.data if isinstance(vectors, EmbeddingMatrix) else np.asarray(vectors, np.float32)
    n = data.shape[0]
    if nlist > n:
        raise CapacityError(f"cannot train {nlist} centroids from {n} vectors")
    if nlist < 1:
        raise ValueError("nlist must be >= 1")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(seed)
    budget = sample_cap * nlist
    if n > budget:
        train = data[np.sort(rng.choice(n, budget, replace=False))]
    else:
        train = data
    cents = _kmeanspp_init(train, nlist, rng)
    train64 = train.astype(np.float64)
    prev = None
    for _ in range(max_iters):
        assign = assign_to_centroids(train, cents)
        assign = repair_empty_assignments(train, cents, assign)
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        counts = np.bincount(assign, minlength=nlist).astype(np.float64)
        sums = np.empty((nlist, train.shape[1]))
        for d in range(train.shape[1]):
            sums[:, d] = np.bincount(assign, weights=train64[:, d], minlength=nlist)
        means = sums / counts[:, None]
        norms = np.linalg.norm(means, axis=1)
        new = cents.astype(np.float64)
        live = norms > 0.0
        new[live] = means[live] / norms[live, None]
        cents = new.astype(np.float32)
    return Centroids(cents)
