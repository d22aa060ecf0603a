"""Curves in R^n, arc-length resampling, scale normalization and the
square-root velocity function (SRVF).

A curve is stored as ``T`` samples of ``f: [0, 1] -> R^n`` at the uniform
parameters ``t_k = k / (T - 1)``. The SRVF ``q = f' / sqrt(|f'|)`` maps a
unit-length curve onto the unit sphere of L^2([0, 1], R^n), where the elastic
metric becomes the ordinary arc-length distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, sparse

__all__ = [
    "Curve",
    "Srvf",
    "DegenerateCurveError",
    "DEFAULT_T",
    "uniform_grid",
    "trapz",
    "derivative",
    "resample",
    "normalize_scale",
    "preprocess",
    "to_srvf",
    "from_srvf",
    "rotate",
    "read_curve_csv",
    "write_curve_csv",
]

DEFAULT_T = 100
SPEED_FLOOR = 1e-8


class DegenerateCurveError(ValueError):
    """Raised when a curve has zero arc length or zero velocity norm."""


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Curve:
    """Ordered samples of a curve in R^n (``points`` has shape ``(T, n)``)."""

    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"curve points must be a (T, n) array, got shape {pts.shape}")
        if pts.shape[0] < 3:
            raise ValueError(f"curve needs at least 3 points, got {pts.shape[0]}")
        if pts.shape[1] < 2:
            raise ValueError(f"curve dimension must be >= 2, got {pts.shape[1]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def T(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def grid(self) -> NDArray[np.float64]:
        return uniform_grid(self.T)

    def length(self) -> float:
        """Polyline arc length."""
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def is_closed(self, tol: float = 1e-9) -> bool:
        scale = max(self.length(), 1.0)
        return bool(np.linalg.norm(self.points[-1] - self.points[0]) <= tol * scale)


@dataclass(frozen=True, eq=False)
class Srvf:
    """Square-root velocity function sampled on a uniform grid."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError(f"SRVF values must be a (T, n) array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("SRVF contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> NDArray[np.float64]:
        return uniform_grid(self.T)

    def norm(self) -> float:
        """L^2 norm under the trapezoidal rule."""
        return float(np.sqrt(trapz(np.sum(self.values**2, axis=1))))

    def inner(self, other: "Srvf") -> float:
        if other.values.shape != self.values.shape:
            raise ValueError("SRVFs must share grid size and dimension")
        return float(trapz(np.sum(self.values * other.values, axis=1)))


def uniform_grid(T: int) -> NDArray[np.float64]:
    return np.linspace(0.0, 1.0, T)


def trapz(y: ArrayLike, axis: int = 0) -> NDArray[np.float64] | float:
    """Trapezoidal integral over [0, 1] of samples on the uniform grid."""
    y = np.moveaxis(np.asarray(y, dtype=np.float64), axis, 0)
    h = 1.0 / (y.shape[0] - 1)
    return h * (np.sum(y, axis=0) - 0.5 * (y[0] + y[-1]))


def derivative(values: ArrayLike) -> NDArray[np.float64]:
    """d/dt of samples on the uniform grid: central differences inside,
    second-order one-sided differences at the two ends."""
    values = np.asarray(values, dtype=np.float64)
    h = 1.0 / (values.shape[0] - 1)
    return np.gradient(values, h, axis=0, edge_order=2)


def _as_curve(c: Curve | ArrayLike) -> Curve:
    return c if isinstance(c, Curve) else Curve(np.asarray(c, dtype=np.float64))


def _equalize_chords(place, pos: NDArray, total: float) -> NDArray:
    """Solve ``|out_{k+1} - out_k| = L`` for the interior positions and ``L``
    by sparse least squares, starting from ``pos``."""
    T = pos.shape[0]
    n = T - 2
    rows = np.concatenate([np.arange(1, T - 1), np.arange(0, T - 2), np.arange(T - 1)])
    cols = np.concatenate([np.arange(0, n), np.arange(0, n), np.full(T - 1, n)])
    sparsity = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(T - 1, n + 1))

    def residual(z: NDArray) -> NDArray:
        out = place(np.concatenate([[0.0], z[:-1], [total]]))
        return np.linalg.norm(np.diff(out, axis=0), axis=1) - z[-1]

    chords = np.linalg.norm(np.diff(place(pos), axis=0), axis=1)
    z0 = np.concatenate([pos[1:-1], [chords.mean()]])
    fit = optimize.least_squares(
        residual, z0, jac_sparsity=sparsity, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=60
    )
    return np.concatenate([[0.0], fit.x[:-1], [total]])


def resample(c: Curve | ArrayLike, T_out: int, *, max_iter: int = 50, tol: float = 1e-13) -> Curve:
    """Resample a curve to ``T_out`` points equally spaced in arc length.

    Points are placed on the input polyline so that consecutive chords of the
    *output* are equal, which makes the operation idempotent. A single
    interpolation pass leaves chords that cut the corners of the input
    slightly short; the positions are refined by fixed-point iteration and,
    if that stalls, by a least-squares solve of the equal-chord equations.
    The placement with the smallest chord spread is returned. On rough
    polylines sampled about as finely as the output an exact equal-chord
    placement may not exist. Endpoints are copied exactly.
    """
    if T_out < 3:
        raise ValueError(f"T_out must be >= 3, got {T_out}")
    c = _as_curve(c)
    pts = c.points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if not total > 0.0:
        raise DegenerateCurveError("degenerate curve")

    # drop zero-length segments so arc length is strictly increasing
    keep = np.concatenate([[True], seg > 0.0])
    s_knots, p_knots = s[keep], pts[keep]

    def place(pos: NDArray) -> NDArray:
        out = np.column_stack([np.interp(pos, s_knots, p_knots[:, d]) for d in range(pts.shape[1])])
        out[0], out[-1] = pts[0], pts[-1]
        return out

    def spread(out: NDArray) -> float:
        chords = np.linalg.norm(np.diff(out, axis=0), axis=1)
        return float(chords.max() - chords.min())

    target = np.linspace(0.0, 1.0, T_out)
    pos = target * total
    out = place(pos)
    best_pos, best = pos, spread(out)
    converged = False
    for _ in range(max_iter):
        chords = np.linalg.norm(np.diff(out, axis=0), axis=1)
        u = np.concatenate([[0.0], np.cumsum(chords)])
        if not u[-1] > 0.0:
            break
        u /= u[-1]
        if np.max(np.abs(u - target)) <= tol:
            converged = True
            break
        pos = np.interp(target, u, pos)
        pos[0], pos[-1] = 0.0, total
        out = place(pos)
        if spread(out) < best:
            best_pos, best = pos, spread(out)
    if not converged:
        polished = _equalize_chords(place, best_pos, total)
        if np.all(np.diff(polished) >= 0.0) and spread(place(polished)) < best:
            best_pos = polished
        out = place(best_pos)
    return Curve(out)


def normalize_scale(c: Curve | ArrayLike) -> Curve:
    """Divide by ``sqrt(int |f'|^2 dt)`` and subtract the (trapezoidal) centroid."""
    c = _as_curve(c)
    pts = c.points
    speed2 = np.sum(derivative(pts) ** 2, axis=1)
    norm = float(np.sqrt(trapz(speed2)))
    if not norm > 0.0 or not np.isfinite(norm):
        raise DegenerateCurveError("degenerate curve")
    scaled = pts / norm
    centroid = trapz(scaled)
    return Curve(scaled - centroid)


def preprocess(c: Curve | ArrayLike, T: int = DEFAULT_T) -> Curve:
    """Arc-length resample to ``T`` points, then scale-normalize and center."""
    return normalize_scale(resample(c, T))


def to_srvf(c: Curve | ArrayLike) -> Srvf:
    c = _as_curve(c)
    v = derivative(c.points)
    speed = np.maximum(np.linalg.norm(v, axis=1), SPEED_FLOOR)
    return Srvf(v / np.sqrt(speed)[:, None])


def from_srvf(q: Srvf | ArrayLike, start: ArrayLike | None = None) -> Curve:
    """Integrate ``q |q|`` with the cumulative trapezoidal rule from ``start``."""
    vals = q.values if isinstance(q, Srvf) else np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("SRVF contains non-finite values")
    T, n = vals.shape
    start = np.zeros(n) if start is None else np.asarray(start, dtype=np.float64)
    if start.shape != (n,):
        raise ValueError(f"start point must have shape ({n},)")
    vel = vals * np.linalg.norm(vals, axis=1)[:, None]
    h = 1.0 / (T - 1)
    incr = 0.5 * h * (vel[1:] + vel[:-1])
    pts = np.vstack([np.zeros((1, n)), np.cumsum(incr, axis=0)]) + start
    return Curve(pts)


def rotate(c: Curve | ArrayLike, O: ArrayLike) -> Curve:
    """Apply a matrix pointwise: ``t -> O f(t)``."""
    c = _as_curve(c)
    return Curve(c.points @ np.asarray(O, dtype=np.float64).T)


def read_curve_csv(path: str | Path) -> Curve:
    """Read a headerless ``x,y[,z...]`` point file."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad number ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing numbers of coordinates")
    return Curve(np.array(rows, dtype=np.float64))


def write_curve_csv(c: Curve | ArrayLike, path: str | Path) -> None:
    # repr() gives the shortest decimal that round-trips to the same double
    c = _as_curve(c)
    with open(path, "w") as fh:
        for row in c.points:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
