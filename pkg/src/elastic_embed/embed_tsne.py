"""t-SNE from a precomputed distance matrix, with the usual Kullback-Leibler
cost or the Fisher-Rao cost (et-SNE).

For et-SNE the joint similarities ``P`` and ``Q`` are treated as points on
the sphere of discrete densities and the cost is their great-circle distance
``C = arccos(B)``, ``B = sum_ij sqrt(p_ij q_ij)``. With Student-t weights
``w_ij = 1 / (1 + |y_i - y_j|^2)`` and ``q_ij = w_ij / Z`` the gradient is

    dC/dy_i = 2 / sqrt(1 - B^2) * sum_j (sqrt(p_ij q_ij) - B q_ij) w_ij (y_i - y_j)

Both optimizers use exact O(N^2) gradients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distmat import DistanceMatrix
from .embedding import Embedding

__all__ = [
    "Affinities",
    "TsneParams",
    "perplexity_calibrate",
    "joint_q",
    "kl_cost_grad",
    "fisher_rao_cost_grad",
    "tsne_embed",
    "etsne_embed",
]

FLOOR = 1e-12
PREFACTOR_CAP = 1e6


@dataclass(frozen=True, eq=False)
class Affinities:
    """Joint similarities ``P`` plus the row-wise calibration behind them."""

    P: NDArray[np.float64]
    conditional: NDArray[np.float64]
    beta: NDArray[np.float64]
    perplexity: float

    @property
    def sigma(self) -> NDArray[np.float64]:
        return np.sqrt(0.5 / self.beta)


@dataclass(frozen=True)
class TsneParams:
    n_iter: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    min_gain: float = 0.01
    init_std: float = 1e-2

    def __post_init__(self) -> None:
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.early_exaggeration >= 1:
            raise ValueError("early_exaggeration must be >= 1")


def _entropy_bits(p: NDArray) -> float:
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log2(nz)))


def _row_conditional(d2: NDArray, beta: float) -> NDArray:
    e = np.exp(-(d2 - d2.min()) * beta)
    return e / e.sum()


def _calibrate_row(d2: NDArray, target_bits: float, tol: float, max_iter: int) -> tuple[NDArray, float]:
    # bisection on log(beta); entropy decreases monotonically in beta
    lo, hi = -50.0, 50.0
    scale = np.median(d2) if np.median(d2) > 0 else 1.0
    log_beta = -np.log(scale)
    p = _row_conditional(d2, np.exp(log_beta))
    for _ in range(max_iter):
        p = _row_conditional(d2, np.exp(log_beta))
        H = _entropy_bits(p)
        if abs(H - target_bits) < tol:
            break
        if H > target_bits:
            lo = log_beta
        else:
            hi = log_beta
        log_beta = 0.5 * (lo + hi)
    return p, float(np.exp(log_beta))


def perplexity_calibrate(
    m: DistanceMatrix | ArrayLike, perplexity: float = 30.0, *, tol: float = 1e-7, max_iter: int = 200
) -> Affinities:
    """Gaussian conditional similarities on squared distances, each row's
    bandwidth chosen by bisection so that ``2**H(P_i) == perplexity``, then
    symmetrized as ``p_ij = (p_{j|i} + p_{i|j}) / 2N``."""
    D = m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=np.float64)
    N = D.shape[0]
    if not 1.0 < perplexity < N:
        raise ValueError(f"perplexity must satisfy 1 < perplexity < N = {N}, got {perplexity}")
    target = float(np.log2(perplexity))
    cond = np.zeros((N, N))
    beta = np.zeros(N)
    D2 = D * D
    for i in range(N):
        others = np.arange(N) != i
        p, b = _calibrate_row(D2[i, others], target, tol, max_iter)
        cond[i, others] = p
        beta[i] = b
    P = (cond + cond.T) / (2.0 * N)
    P /= P.sum()
    return Affinities(P, cond, beta, float(perplexity))


def _weights(Y: NDArray) -> NDArray:
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T, 0.0)
    W = 1.0 / (1.0 + d2)
    np.fill_diagonal(W, 0.0)
    return W


def joint_q(Y: ArrayLike) -> NDArray[np.float64]:
    """Student-t joint similarities of an embedding (zero diagonal, sums to 1)."""
    W = _weights(np.asarray(Y, dtype=np.float64))
    return W / W.sum()


def _pair_sum(M: NDArray, Y: NDArray) -> NDArray:
    # sum_j M_ij (y_i - y_j)
    return M.sum(axis=1)[:, None] * Y - M @ Y


def kl_cost_grad(P: NDArray, Y: NDArray, exaggeration: float = 1.0) -> tuple[float, NDArray]:
    """KL(P || Q) and its gradient. ``exaggeration`` scales ``P`` in the
    gradient only; the returned cost always uses the plain ``P``."""
    W = _weights(Y)
    Q = W / W.sum()
    off = ~np.eye(P.shape[0], dtype=bool)
    p, q = P[off], Q[off]
    cost = float(np.sum(p * (np.log(np.maximum(p, FLOOR)) - np.log(np.maximum(q, FLOOR)))))
    grad = 4.0 * _pair_sum((exaggeration * P - Q) * W, Y)
    return cost, grad


def fisher_rao_cost_grad(P: NDArray, Y: NDArray, exaggeration: float = 1.0) -> tuple[float, NDArray]:
    """Great-circle distance between ``sqrt(P)`` and ``sqrt(Q)`` and its
    gradient. ``exaggeration`` scales the attractive ``sqrt(p q)`` term of
    the gradient only."""
    W = _weights(Y)
    Q = W / W.sum()
    S = np.sqrt(np.maximum(P, 0.0) * Q)
    np.fill_diagonal(S, 0.0)
    B = float(S.sum())
    cost = float(np.arccos(np.clip(B, 0.0, 1.0)))
    prefactor = min(2.0 / np.sqrt(max(1.0 - B * B, FLOOR)), PREFACTOR_CAP)
    grad = prefactor * _pair_sum((exaggeration * S - B * Q) * W, Y)
    return cost, grad


def _optimize(P: NDArray, d: int, params: TsneParams, seed: int, cost_grad) -> tuple[NDArray, NDArray]:
    N = P.shape[0]
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, params.init_std, (N, d))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = np.empty(params.n_iter + 1)
    history[0] = cost_grad(P, Y)[0]
    for it in range(params.n_iter):
        alpha = params.early_exaggeration if it < params.exaggeration_iters else 1.0
        mom = params.momentum if it < params.momentum_switch else params.final_momentum
        _, grad = cost_grad(P, Y, alpha)
        same = (grad > 0.0) == (update > 0.0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, params.min_gain, out=gains)
        update = mom * update - params.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        history[it + 1] = cost_grad(P, Y)[0]
    return Y, history


def _check(aff: Affinities, d: int) -> NDArray:
    if d < 1:
        raise ValueError("embedding dimension must be >= 1")
    return aff.P


def tsne_embed(aff: Affinities, d: int = 2, params: TsneParams | None = None, seed: int = 0) -> Embedding:
    """Minimize KL(P || Q) by momentum gradient descent with adaptive gains
    and early exaggeration."""
    params = params or TsneParams()
    Y, hist = _optimize(_check(aff, d), d, params, seed, kl_cost_grad)
    hp = {"perplexity": aff.perplexity, **asdict(params)}
    return Embedding(Y, seed, "kl", hp, hist)


def etsne_embed(aff: Affinities, d: int = 2, params: TsneParams | None = None, seed: int = 0) -> Embedding:
    """Same optimizer as :func:`tsne_embed` on the Fisher-Rao cost."""
    params = params or TsneParams()
    Y, hist = _optimize(_check(aff, d), d, params, seed, fisher_rao_cost_grad)
    hp = {"perplexity": aff.perplexity, **asdict(params)}
    return Embedding(Y, seed, "fisher_rao", hp, hist)
