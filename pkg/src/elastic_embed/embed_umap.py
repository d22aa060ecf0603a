"""UMAP from a precomputed distance matrix.

Directed memberships ``v_{j|i} = exp(-(d_ij - rho_i) / sigma_i)`` over the
``k`` nearest neighbors, with ``rho_i`` the distance to the nearest neighbor
and ``sigma_i`` chosen so that ``sum_j v_{j|i} = log2(k)``. They are
symmetrized with the probabilistic t-conorm ``a + b - ab`` and embedded by
stochastic gradient descent on the fuzzy cross-entropy with kernel
``w = 1 / (1 + a |y_i - y_j|^{2b})``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numba
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distmat import DistanceMatrix
from .embedding import Embedding

__all__ = [
    "FuzzyGraph",
    "UmapParams",
    "smooth_knn",
    "t_conorm",
    "fuzzy_union",
    "kernel",
    "classical_mds",
    "umap_embed",
]

SUM_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class FuzzyGraph:
    """Sparse memberships ``(rows[e], cols[e]) -> vals[e]``.

    ``symmetric`` is set once the directed memberships have been combined by
    :func:`fuzzy_union`.
    """

    n: int
    rows: NDArray[np.int64]
    cols: NDArray[np.int64]
    vals: NDArray[np.float64]
    rho: NDArray[np.float64]
    sigma: NDArray[np.float64]
    clamped: NDArray[np.bool_]
    k: int
    symmetric: bool = False

    def dense(self) -> NDArray[np.float64]:
        V = np.zeros((self.n, self.n))
        V[self.rows, self.cols] = self.vals
        return V


@dataclass(frozen=True)
class UmapParams:
    k: int = 15
    d: int = 2
    a: float = 1.929
    b: float = 0.7915
    n_epochs: int = 500
    learning_rate: float = 1.0
    negative_sample_rate: int = 5
    seed: int = 0
    cost_every: int = 10

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError("kernel coefficients a and b must be positive")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.d < 1 or self.n_epochs < 1 or self.negative_sample_rate < 0:
            raise ValueError("invalid UMAP parameters")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def _member_sum(dist: NDArray, rho: float, sigma: float) -> float:
    return float(np.sum(np.exp(-np.maximum(dist - rho, 0.0) / sigma)))


def _calibrate(dist: NDArray, target: float, max_iter: int = 200) -> tuple[float, float, bool]:
    """``(rho, sigma, clamped)`` for one node's sorted neighbor distances."""
    nonzero = dist[dist > 0.0]
    rho = float(nonzero[0]) if nonzero.size else 0.0
    excess = np.maximum(dist - rho, 0.0)
    scale = float(excess.mean()) if excess.max() > 0.0 else 1.0
    lo, hi = np.log(scale) - 20.0, np.log(scale) + 20.0
    if excess.max() == 0.0:
        # every membership is 1 whatever sigma is
        return rho, float(np.exp(hi)), True
    if _member_sum(dist, rho, np.exp(lo)) >= target:
        return rho, float(np.exp(lo)), True
    if _member_sum(dist, rho, np.exp(hi)) <= target:
        return rho, float(np.exp(hi)), True
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = _member_sum(dist, rho, np.exp(mid))
        if abs(s - target) < 1e-10:
            break
        if s > target:
            hi = mid
        else:
            lo = mid
    sigma = float(np.exp(mid))
    return rho, sigma, abs(_member_sum(dist, rho, sigma) - target) > SUM_TOL


def smooth_knn(m: DistanceMatrix | ArrayLike, k: int = 15) -> FuzzyGraph:
    """Directed fuzzy memberships of every node's ``k`` nearest neighbors.

    Neighbors exclude the node itself and are ordered by distance, then by
    index. The nearest neighbor always gets membership 1.
    """
    D = m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=np.float64)
    N = D.shape[0]
    if not 2 <= k < N:
        raise ValueError(f"k must satisfy 2 <= k < N = {N}, got {k}")
    target = float(np.log2(k))
    rows = np.repeat(np.arange(N), k)
    cols = np.empty(N * k, dtype=np.int64)
    vals = np.empty(N * k)
    rho, sigma = np.empty(N), np.empty(N)
    clamped = np.zeros(N, dtype=bool)
    for i in range(N):
        others = np.delete(np.arange(N), i)
        order = others[np.argsort(D[i, others], kind="stable")][:k]
        dist = D[i, order]
        rho[i], sigma[i], clamped[i] = _calibrate(dist, target)
        cols[i * k : (i + 1) * k] = order
        vals[i * k : (i + 1) * k] = np.exp(-np.maximum(dist - rho[i], 0.0) / sigma[i])
    return FuzzyGraph(N, rows, cols, vals, rho, sigma, clamped, k)


def t_conorm(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return a + b - a * b


def fuzzy_union(g: FuzzyGraph) -> FuzzyGraph:
    """Combine ``v_{j|i}`` and ``v_{i|j}`` with the t-conorm; zero edges are
    dropped. A graph that is already symmetrized is returned unchanged."""
    if g.symmetric:
        return g
    V = g.dense()
    U = np.clip(t_conorm(V, V.T), 0.0, 1.0)
    rows, cols = np.nonzero(U)
    return FuzzyGraph(g.n, rows.astype(np.int64), cols.astype(np.int64), U[rows, cols], g.rho, g.sigma, g.clamped, g.k, True)


def kernel(dist: ArrayLike, a: float = 1.929, b: float = 0.7915) -> NDArray[np.float64]:
    """Low-dimensional similarity ``1 / (1 + a dist^{2b})``."""
    d = np.asarray(dist, dtype=np.float64)
    return 1.0 / (1.0 + a * d ** (2.0 * b))


def classical_mds(D: ArrayLike, d: int = 2) -> NDArray[np.float64]:
    """Top-``d`` eigenvectors of the double-centered squared-distance Gram
    matrix, each column signed so its largest-magnitude entry is positive."""
    D = np.asarray(D, dtype=np.float64)
    N = D.shape[0]
    J = np.eye(N) - 1.0 / N
    B = -0.5 * J @ (D * D) @ J
    w, V = np.linalg.eigh(B)
    idx = np.argsort(w, kind="stable")[::-1][:d]
    Y = V[:, idx] * np.sqrt(np.maximum(w[idx], 0.0))
    for c in range(Y.shape[1]):
        if Y[np.argmax(np.abs(Y[:, c])), c] < 0.0:
            Y[:, c] = -Y[:, c]
    return Y


def _cross_entropy(V: NDArray, Y: NDArray, a: float, b: float) -> float:
    d2 = np.sum((Y[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
    W = np.clip(1.0 / (1.0 + a * d2**b), 1e-12, 1.0 - 1e-12)
    off = ~np.eye(V.shape[0], dtype=bool)
    v, w = V[off], W[off]
    vl = np.where(v > 0.0, v * np.log(np.maximum(v, 1e-12) / w), 0.0)
    ul = np.where(v < 1.0, (1.0 - v) * np.log(np.maximum(1.0 - v, 1e-12) / (1.0 - w)), 0.0)
    return float(np.sum(vl + ul))


@numba.njit(cache=True)
def _sgd_epochs(Y, head, tail, eps, epoch_next, neg_eps, epoch_next_neg, a, b, lr, n_epochs, start, stop, seed):  # pragma: no cover - compiled
    if start == 0:
        np.random.seed(seed)
    N, d = Y.shape
    for n in range(start, stop):
        alpha = lr * (1.0 - n / n_epochs)
        for e in range(head.shape[0]):
            if epoch_next[e] > n:
                continue
            j = head[e]
            k = tail[e]
            d2 = 0.0
            for c in range(d):
                diff = Y[j, c] - Y[k, c]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = -2.0 * a * b * d2 ** (b - 1.0) / (a * d2**b + 1.0)
            else:
                coeff = 0.0
            for c in range(d):
                g = coeff * (Y[j, c] - Y[k, c])
                g = min(max(g, -4.0), 4.0)
                Y[j, c] += g * alpha
                Y[k, c] -= g * alpha
            epoch_next[e] += eps[e]
            n_neg = int((n - epoch_next_neg[e]) / neg_eps[e])
            for _ in range(n_neg):
                k = np.random.randint(N)
                if k == j:
                    continue
                d2 = 0.0
                for c in range(d):
                    diff = Y[j, c] - Y[k, c]
                    d2 += diff * diff
                coeff = 2.0 * b / ((0.001 + d2) * (a * d2**b + 1.0))
                for c in range(d):
                    g = min(max(coeff * (Y[j, c] - Y[k, c]), -4.0), 4.0)
                    Y[j, c] += g * alpha
            epoch_next_neg[e] += n_neg * neg_eps[e]


def umap_embed(g: FuzzyGraph, params: UmapParams | None = None, distances: DistanceMatrix | ArrayLike | None = None) -> Embedding:
    """Embed a fuzzy graph by SGD on the fuzzy cross-entropy.

    Edges are sampled in proportion to their membership, each attractive
    move followed by ``negative_sample_rate`` repulsive moves against
    uniformly drawn nodes; the learning rate decays linearly to zero. The
    start layout is classical MDS of ``distances`` scaled to a largest
    coordinate of 10, or a seeded uniform layout in [-10, 10] if no
    distances are given.
    """
    params = params or UmapParams()
    g = fuzzy_union(g)
    N = g.n
    if distances is not None:
        D = distances.values if isinstance(distances, DistanceMatrix) else np.asarray(distances, dtype=np.float64)
        if D.shape != (N, N):
            raise ValueError("distance matrix does not match the graph")
        Y = classical_mds(D, params.d)
        peak = np.max(np.abs(Y))
        Y = Y * (10.0 / peak) if peak > 0.0 else Y
        init = "mds"
    else:
        Y = np.random.default_rng(params.seed).uniform(-10.0, 10.0, (N, params.d))
        init = "uniform"
    Y = np.ascontiguousarray(Y, dtype=np.float64)

    vals = g.vals
    keep = vals >= vals.max() / params.n_epochs
    head, tail, vals = g.rows[keep], g.cols[keep], vals[keep]
    eps = vals.max() / vals
    neg_eps = eps / params.negative_sample_rate if params.negative_sample_rate > 0 else np.full_like(eps, np.inf)
    epoch_next = eps.copy()
    epoch_next_neg = neg_eps.copy()

    V = g.dense()
    history = [_cross_entropy(V, Y, params.a, params.b)]
    seed = int(params.seed) % (2**32)
    step = max(1, params.cost_every)
    for start in range(0, params.n_epochs, step):
        stop = min(start + step, params.n_epochs)
        _sgd_epochs(Y, head, tail, eps, epoch_next, neg_eps, epoch_next_neg,
                    params.a, params.b, params.learning_rate, params.n_epochs, start, stop, seed)
        history.append(_cross_entropy(V, Y, params.a, params.b))
    hp = {**asdict(params), "init": init}
    return Embedding(Y, params.seed, "umap", hp, np.array(history))
