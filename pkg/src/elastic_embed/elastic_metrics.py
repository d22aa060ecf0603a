"""Elastic distances: amplitude distance between curves (joint over rotation
and reparameterization), phase distance between warpings, and the
Fisher-Rao geodesic distance between discrete densities.

The amplitude distance is found by coordinate descent. Each round solves the
rotation subproblem exactly (orthogonal Procrustes on an SRVF
cross-covariance) and the reparameterization subproblem exactly over
piecewise-linear warpings on the ``T x T`` lattice (dynamic programming with
a bounded slope set).

Alignment objective
-------------------
For a warping ``gamma`` that is linear between grid points the alignment
integral ``int <q_f(t), O q_g(gamma(t))> sqrt(gamma'(t)) dt`` is evaluated
with the trapezoidal rule twice: once on the grid of ``f`` (interpolating
``q_g``), once on the grid of ``g`` after substituting ``s = gamma(t)``
(interpolating ``q_f``). The objective is the mean of the two. Swapping ``f``
and ``g`` maps it to itself with ``gamma -> gamma^{-1}`` and ``O -> O^T``, so
the discrete distance is symmetric like the continuous one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .curve_core import Curve, Srvf, to_srvf, trapz, uniform_grid

__all__ = [
    "Warping",
    "Rotation",
    "AlignmentResult",
    "AlignOptions",
    "DiscreteDensity",
    "DP_STEPS",
    "identity_warping",
    "warp_srvf",
    "rotate_srvf",
    "optimal_rotation",
    "optimal_warping",
    "alignment_inner_product",
    "align_srvfs",
    "amplitude_distance",
    "phase_distance",
    "fisher_rao_pdf_distance",
    "cyclic_shift",
]


def _dp_steps(max_step: int = 3) -> NDArray[np.int64]:
    steps = [
        (a, b)
        for a in range(1, max_step + 1)
        for b in range(1, max_step + 1)
        if math.gcd(a, b) == 1
    ]
    # the earlier step wins a tie, so order by angular distance to the diagonal
    steps.sort(key=lambda s: (abs(math.atan2(s[1], s[0]) - math.pi / 4), -s[0]))
    return np.array(steps, dtype=np.int64)


#: Allowed local lattice moves ``(di, dj)``, ordered by tie-break priority.
DP_STEPS = _dp_steps(3)
MIN_SRVF_NORM = 1e-6


@dataclass(frozen=True, eq=False)
class Warping:
    """Samples of a warping function gamma on the uniform grid.

    ``gamma(0) = 0`` and ``gamma(1) = 1`` exactly and the samples are strictly
    increasing.
    """

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("warping must be a 1-D array with at least 2 samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("warping contains non-finite values")
        if v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("warping must satisfy gamma(0)=0 and gamma(1)=1")
        if np.any(np.diff(v) <= 0.0):
            raise ValueError("non-monotone warping")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> int:
        return self.values.size

    def slope(self) -> NDArray[np.float64]:
        return _slope(self.values)

    def inverse(self) -> "Warping":
        return Warping(_inverse(self.values))


def identity_warping(T: int) -> Warping:
    return Warping(uniform_grid(T))


@dataclass(frozen=True, eq=False)
class Rotation:
    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("rotation must be a square matrix")
        if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) > 1e-8:
            raise ValueError("rotation matrix is not orthogonal")
        if abs(np.linalg.det(m) - 1.0) > 1e-8:
            raise ValueError("rotation matrix must have determinant +1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, n: int) -> "Rotation":
        return cls(np.eye(n))


@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of aligning ``g`` onto ``f``.

    ``distance == arccos(alignment_inner_product(q_f, q_g, rotation, warping))``
    where ``q_f`` and ``q_g`` are the unit-normalized SRVFs, ``q_g`` taken
    after the cyclic ``shift`` (0 unless seed search was enabled).
    """

    distance: float
    rotation: Rotation
    warping: Warping
    inner_product: float
    rounds: int
    shift: int = 0


@dataclass(frozen=True)
class AlignOptions:
    """Knobs for :func:`amplitude_distance`.

    ``rotation_starts`` extra initial rotations are screened at resolution
    ``coarse_T`` with ``screen_rounds`` descent rounds each. Set it to 0 for
    the plain single-start descent.
    """

    rotation: bool = True
    seed_search: bool = False
    n_seeds: int = 10
    max_rounds: int = 20
    tol: float = 1e-6
    rotation_starts: int = 8
    coarse_T: int = 34
    screen_rounds: int = 3


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    masses: NDArray[np.float64]

    def __post_init__(self) -> None:
        p = np.array(self.masses, dtype=np.float64, copy=True)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("density masses must be a non-empty 1-D array")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise ValueError("density masses must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"unnormalized density (sum = {p.sum():.9g})")
        p.setflags(write=False)
        object.__setattr__(self, "masses", p)

    @classmethod
    def from_weights(cls, weights: ArrayLike) -> "DiscreteDensity":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum())


# ---------------------------------------------------------------------------
# array helpers


def _srvf_values(q: Srvf | ArrayLike) -> NDArray[np.float64]:
    return q.values if isinstance(q, Srvf) else np.asarray(q, dtype=np.float64)


def _as_warping(g: Warping | ArrayLike) -> Warping:
    return g if isinstance(g, Warping) else Warping(np.asarray(g, dtype=np.float64))


def _as_matrix(O: Rotation | ArrayLike) -> NDArray:
    return O.matrix if isinstance(O, Rotation) else np.asarray(O, dtype=np.float64)


def _interp_rows(values: NDArray, pos: NDArray) -> NDArray:
    """Linear interpolation of the rows of ``values`` at fractional indices."""
    T = values.shape[0]
    r = np.clip(np.floor(pos).astype(np.int64), 0, T - 2)
    alpha = (pos - r)[:, None]
    return (1.0 - alpha) * values[r] + alpha * values[r + 1]


def _slope(gamma: NDArray) -> NDArray:
    # first-order one-sided ends keep the slope non-negative for any
    # increasing sequence
    return np.maximum(np.gradient(gamma, 1.0 / (gamma.size - 1), edge_order=1), 0.0)


def _inverse(gamma: NDArray) -> NDArray:
    t = np.linspace(0.0, 1.0, gamma.size)
    inv = np.interp(t, gamma, t)
    inv[0], inv[-1] = 0.0, 1.0
    return inv


def _unit(v: NDArray) -> NDArray:
    # the SRVF norm is the square root of the curve length
    norm = math.sqrt(trapz(np.sum(v * v, axis=1)))
    if not norm > MIN_SRVF_NORM:
        raise ValueError("degenerate curve: SRVF norm is (numerically) zero")
    return v / norm


def _clamped_arccos(x: float) -> float:
    return float(np.arccos(np.clip(x, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# group actions


def warp_srvf(q: Srvf | ArrayLike, g: Warping | ArrayLike) -> Srvf:
    """Group action of a warping on an SRVF: ``(q o gamma) sqrt(gamma')``."""
    vals = _srvf_values(q)
    g = _as_warping(g)
    if g.T != vals.shape[0]:
        raise ValueError("SRVF and warping must share the grid size")
    moved = _interp_rows(vals, g.values * (vals.shape[0] - 1))
    return Srvf(moved * np.sqrt(g.slope())[:, None])


def rotate_srvf(q: Srvf | ArrayLike, O: Rotation | ArrayLike) -> Srvf:
    return Srvf(_srvf_values(q) @ _as_matrix(O).T)


# ---------------------------------------------------------------------------
# rotation


def _procrustes(M: NDArray) -> NDArray:
    """``argmax_{O in SO(n)} sum(O * M)``."""
    U, _, Vt = np.linalg.svd(M)
    D = np.ones(M.shape[0])
    if np.linalg.det(U @ Vt) < 0.0:
        D[-1] = -1.0
    return (U * D) @ Vt


def _point_weights(gamma: NDArray) -> NDArray:
    """Trapezoid weights for a piecewise-linear warp with sqrt(slope) folded in."""
    h = 1.0 / (gamma.size - 1)
    c = 0.5 * h * np.sqrt(np.maximum(np.diff(gamma) / h, 0.0))
    u = np.zeros(gamma.size)
    u[:-1] += c
    u[1:] += c
    return u


def _cross(a: NDArray, b: NDArray, gamma: NDArray) -> NDArray:
    """Cross-covariance ``M`` such that the objective at rotation ``O`` is ``sum(O * M)``."""
    T = a.shape[0]
    b_at = _interp_rows(b, gamma * (T - 1))
    M = (a * _point_weights(gamma)[:, None]).T @ b_at
    inv = _inverse(gamma)
    a_at = _interp_rows(a, inv * (T - 1))
    M += (a_at * _point_weights(inv)[:, None]).T @ b
    return 0.5 * M


def optimal_rotation(
    q_f: Srvf | ArrayLike, q_g: Srvf | ArrayLike, warping: Warping | ArrayLike | None = None
) -> Rotation:
    """Rotation ``O`` in SO(n) maximizing ``int <q_f, O q_g> dt``.

    Closed-form Procrustes solution from the SVD of the cross-covariance
    ``int q_f q_g^T dt``. The last singular direction is flipped when needed
    so that reflections are excluded. With ``warping`` the cross-covariance
    is taken against ``q_g o gamma`` under the alignment quadrature.
    """
    a, b = _srvf_values(q_f), _srvf_values(q_g)
    if a.shape != b.shape:
        raise ValueError("SRVFs must share grid size and dimension")
    gamma = uniform_grid(a.shape[0]) if warping is None else _as_warping(warping).values
    return Rotation(_procrustes(_cross(a, b, gamma)))


def alignment_inner_product(
    q_f: Srvf | ArrayLike,
    q_g: Srvf | ArrayLike,
    rotation: Rotation | ArrayLike | None = None,
    warping: Warping | ArrayLike | None = None,
) -> float:
    """``int <q_f(t), O q_g(gamma(t))> sqrt(gamma'(t)) dt`` under the
    symmetric trapezoidal quadrature described in the module docstring."""
    a, b = _srvf_values(q_f), _srvf_values(q_g)
    if a.shape != b.shape:
        raise ValueError("SRVFs must share grid size and dimension")
    O = np.eye(a.shape[1]) if rotation is None else _as_matrix(rotation)
    gamma = uniform_grid(a.shape[0]) if warping is None else _as_warping(warping).values
    return float(np.sum(O * _cross(a, b, gamma)))


# ---------------------------------------------------------------------------
# warping by dynamic programming


@numba.njit(cache=True, nogil=True)
def _edge_score(G, k, l, i, j, h):  # pragma: no cover - compiled
    T = G.shape[0]
    # grid of f: t_s for s in [k, i], q_g interpolated along the segment
    m = (j - l) / (i - k)
    acc = 0.0
    for s in range(k, i + 1):
        pos = l + m * (s - k)
        r = int(math.floor(pos))
        if r > T - 2:
            r = T - 2
        alpha = pos - r
        val = (1.0 - alpha) * G[s, r] + alpha * G[s, r + 1]
        if s == k or s == i:
            acc += 0.5 * val
        else:
            acc += val
    f_side = acc * h * math.sqrt(m)
    # grid of g: s_r for r in [l, j], q_f interpolated along the segment
    mi = (i - k) / (j - l)
    acc = 0.0
    for r in range(l, j + 1):
        pos = k + mi * (r - l)
        s = int(math.floor(pos))
        if s > T - 2:
            s = T - 2
        alpha = pos - s
        val = (1.0 - alpha) * G[s, r] + alpha * G[s + 1, r]
        if r == l or r == j:
            acc += 0.5 * val
        else:
            acc += val
    g_side = acc * h * math.sqrt(mi)
    return 0.5 * (f_side + g_side)


@numba.njit(cache=True, nogil=True)
def _dp_kernel(G, steps):  # pragma: no cover - compiled
    T = G.shape[0]
    h = 1.0 / (T - 1)
    ns = steps.shape[0]
    E = np.full((T, T), -np.inf)
    P = np.full((T, T), -1, dtype=np.int64)
    E[0, 0] = 0.0
    for i in range(1, T):
        for j in range(1, T):
            best = -np.inf
            arg = -1
            for s in range(ns):
                k = i - steps[s, 0]
                l = j - steps[s, 1]
                if k < 0 or l < 0:
                    continue
                prev = E[k, l]
                if prev == -np.inf:
                    continue
                val = prev + _edge_score(G, k, l, i, j, h)
                if val > best:
                    best = val
                    arg = s
            E[i, j] = best
            P[i, j] = arg
    pi = np.empty(2 * T, dtype=np.int64)
    pj = np.empty(2 * T, dtype=np.int64)
    i = T - 1
    j = T - 1
    n = 0
    pi[n] = i
    pj[n] = j
    n += 1
    while i > 0 or j > 0:
        s = P[i, j]
        i -= steps[s, 0]
        j -= steps[s, 1]
        pi[n] = i
        pj[n] = j
        n += 1
    return E[T - 1, T - 1], pi[:n][::-1].copy(), pj[:n][::-1].copy()


def _path_to_gamma(pi: NDArray, pj: NDArray, T: int) -> NDArray:
    gamma = np.interp(np.arange(T, dtype=np.float64), pi.astype(np.float64), pj.astype(np.float64)) / (T - 1)
    gamma[0], gamma[-1] = 0.0, 1.0
    return gamma


def _dp_gamma(a: NDArray, b: NDArray) -> NDArray:
    _, pi, pj = _dp_kernel(np.ascontiguousarray(a @ b.T), DP_STEPS)
    return _path_to_gamma(pi, pj, a.shape[0])


def optimal_warping(
    q_f: Srvf | ArrayLike, q_g: Srvf | ArrayLike, *, return_path: bool = False
) -> Warping | tuple[Warping, float, NDArray, NDArray]:
    """Piecewise-linear warping maximizing the quadrature of
    ``int <q_f(t), q_g(gamma(t))> sqrt(gamma'(t)) dt``.

    The maximum is over monotone lattice paths from ``(0, 0)`` to
    ``(T-1, T-1)`` built from the moves in :data:`DP_STEPS`. Among equal
    scores the move nearer the diagonal is kept. With ``return_path`` the
    path score and its vertices are returned as well.
    """
    a, b = _srvf_values(q_f), _srvf_values(q_g)
    if a.shape != b.shape:
        raise ValueError("SRVFs must share grid size and dimension")
    score, pi, pj = _dp_kernel(np.ascontiguousarray(a @ b.T), DP_STEPS)
    gamma = Warping(_path_to_gamma(pi, pj, a.shape[0]))
    if return_path:
        return gamma, float(score), pi, pj
    return gamma


# ---------------------------------------------------------------------------
# amplitude distance


def _descend(
    a: NDArray, b: NDArray, O: NDArray, opts: AlignOptions, *, max_rounds: int
) -> tuple[float, NDArray, NDArray, int]:
    """Alternate warping and rotation updates from a starting rotation."""
    best_ip, best_O, best_gamma = -np.inf, O, uniform_grid(a.shape[0])
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        gamma = _dp_gamma(a, b @ O.T)
        M = _cross(a, b, gamma)
        if opts.rotation:
            O = _procrustes(M)
        ip = float(np.sum(O * M))
        improved = ip - best_ip
        if ip > best_ip:
            best_ip, best_O, best_gamma = ip, O, gamma
        if improved < opts.tol:
            break
    return best_ip, best_O, best_gamma, rounds


def _start_rotations(n: int, count: int) -> list[NDArray]:
    if n == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return [np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]) for t in angles]
    # half-turns in each coordinate plane
    starts = [np.eye(n)]
    for i in range(n):
        for j in range(i + 1, n):
            m = np.eye(n)
            m[i, i] = m[j, j] = -1.0
            starts.append(m)
    return starts[:count]


def _coarsen(v: NDArray, T_c: int) -> NDArray:
    return _interp_rows(v, np.linspace(0.0, v.shape[0] - 1.0, T_c))


def align_srvfs(q_f: Srvf | ArrayLike, q_g: Srvf | ArrayLike, opts: AlignOptions | None = None) -> AlignmentResult:
    """Coordinate descent over rotation and warping for two SRVFs.

    Both inputs are projected onto the unit sphere first. The primary run
    starts from the Procrustes rotation at the identity warping and
    alternates warping and rotation updates until the inner product improves
    by less than ``opts.tol`` or ``opts.max_rounds`` rounds have run.

    Coordinate descent can stall in a poor rotation basin when the shapes are
    dissimilar, so ``opts.rotation_starts`` fixed initial rotations are also
    screened on a coarse grid. The most promising one is refined at full
    resolution and the better of the two runs is kept.
    """
    opts = opts or AlignOptions()
    a = _srvf_values(q_f)
    b = _srvf_values(q_g)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape != b.shape:
        raise ValueError("curves must share the number of samples")
    a, b = _unit(a), _unit(b)
    T, n = a.shape

    O0 = _procrustes(_cross(a, b, uniform_grid(T))) if opts.rotation else np.eye(n)
    ip, O, gamma, rounds = _descend(a, b, O0, opts, max_rounds=opts.max_rounds)

    if opts.rotation and opts.rotation_starts > 0 and T > opts.coarse_T:
        ac, bc = _unit(_coarsen(a, opts.coarse_T)), _unit(_coarsen(b, opts.coarse_T))
        screened = [
            _descend(ac, bc, R, opts, max_rounds=opts.screen_rounds)
            for R in _start_rotations(n, opts.rotation_starts)
        ]
        best_c = max(range(len(screened)), key=lambda k: screened[k][0])
        ip2, O2, gamma2, rounds2 = _descend(a, b, screened[best_c][1], opts, max_rounds=opts.max_rounds)
        if ip2 > ip:
            ip, O, gamma, rounds = ip2, O2, gamma2, rounds + rounds2

    return AlignmentResult(
        distance=_clamped_arccos(ip),
        rotation=Rotation(O),
        warping=Warping(gamma),
        inner_product=ip,
        rounds=rounds,
    )


def cyclic_shift(c: Curve, shift: int) -> Curve:
    """Move the start point of a closed curve forward by ``shift`` samples."""
    pts = c.points[:-1]
    rolled = np.roll(pts, -shift, axis=0)
    return Curve(np.vstack([rolled, rolled[:1]]))


def amplitude_distance(f: Curve, g: Curve, opts: AlignOptions | None = None) -> AlignmentResult:
    """Elastic amplitude distance between two preprocessed curves.

    With ``opts.seed_search`` the start point of ``g`` (treated as a closed
    contour) is tried at ``opts.n_seeds`` evenly spaced cyclic shifts and the
    smallest distance is kept.
    """
    opts = opts or AlignOptions()
    if f.n != g.n:
        raise ValueError(f"dimension mismatch: {f.n} vs {g.n}")
    if f.T != g.T:
        raise ValueError("curves must share the number of samples")
    q_f = to_srvf(f)
    if not opts.seed_search:
        return align_srvfs(q_f, to_srvf(g), opts)
    period = g.T - 1
    shifts = sorted({int(round(s * period / opts.n_seeds)) % period for s in range(opts.n_seeds)})
    best: AlignmentResult | None = None
    for shift in shifts:
        res = align_srvfs(q_f, to_srvf(cyclic_shift(g, shift)), opts)
        if best is None or res.distance < best.distance:
            best = AlignmentResult(res.distance, res.rotation, res.warping, res.inner_product, res.rounds, shift)
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# phase and Fisher-Rao


def phase_distance(g1: Warping | ArrayLike, g2: Warping | ArrayLike) -> float:
    """``arccos int sqrt(gamma1' gamma2') dt``, in [0, pi/2]."""
    g1, g2 = _as_warping(g1), _as_warping(g2)
    if g1.T != g2.T:
        raise ValueError("warpings must share the grid size")
    return _clamped_arccos(trapz(np.sqrt(g1.slope() * g2.slope())))


def fisher_rao_pdf_distance(p1: DiscreteDensity | ArrayLike, p2: DiscreteDensity | ArrayLike) -> float:
    """Great-circle distance between square-root densities (Bhattacharyya angle)."""
    if not isinstance(p1, DiscreteDensity):
        p1 = DiscreteDensity(p1)
    if not isinstance(p2, DiscreteDensity):
        p2 = DiscreteDensity(p2)
    if p1.masses.size != p2.masses.size:
        raise ValueError("densities must share the support size")
    return _clamped_arccos(float(np.sum(np.sqrt(p1.masses * p2.masses))))
