"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from elastic_embed.elastic_metrics import DP_STEPS


def smooth_curve_fn(rng: np.random.Generator, n: int = 2, terms: int = 4):
    """Random smooth open curve ``t -> R^n`` as a callable on arrays."""
    a = rng.normal(size=(terms, n)) / np.arange(1, terms + 1)[:, None] ** 2
    b = rng.normal(size=(terms, n)) / np.arange(1, terms + 1)[:, None] ** 2
    v = rng.normal(size=n)
    m = np.arange(1, terms + 1)[:, None]

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ang = 2.0 * np.pi * m * t[None, :]
        return (np.cos(ang).T @ a) + (np.sin(ang).T @ b) + t[:, None] * v[None, :]

    return f


def smooth_warp_fn(rng: np.random.Generator, strength: float = 0.25):
    """``t + sum_m c_m sin(pi m t)`` with slope kept above 0.3."""
    m = np.arange(1, 4)
    c = rng.uniform(-1.0, 1.0, 3) * strength / (np.pi * m)
    dense = np.linspace(0.0, 1.0, 2001)
    while (1.0 + np.sum(c[:, None] * np.pi * m[:, None] * np.cos(np.pi * m[:, None] * dense), axis=0)).min() < 0.3:
        c *= 0.9

    def g(t):
        t = np.asarray(t, dtype=float)
        out = t + np.sum(c[:, None] * np.sin(np.pi * m[:, None] * t[None, :]), axis=0)
        out[..., 0], out[..., -1] = 0.0, 1.0
        return out

    return g


def rotation2(theta: float) -> np.ndarray:
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def lattice_paths(T: int, steps=DP_STEPS):
    """Every monotone path from (0, 0) to (T-1, T-1) built from ``steps``."""
    steps = [tuple(int(x) for x in s) for s in steps]
    out = []

    def walk(path):
        i, j = path[-1]
        if (i, j) == (T - 1, T - 1):
            out.append(list(path))
            return
        for di, dj in steps:
            if i + di <= T - 1 and j + dj <= T - 1:
                path.append((i + di, j + dj))
                walk(path)
                path.pop()

    walk([(0, 0)])
    return out


def _one_side(a: np.ndarray, b: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> float:
    """Trapezoid on the grid of ``a`` of <a(t), b(gamma(t))> sqrt(gamma') for
    the piecewise-linear gamma through the lattice vertices (xs, ys)."""
    T = a.shape[0]
    t = np.linspace(0.0, 1.0, T)
    gamma = np.interp(t, xs / (T - 1), ys / (T - 1))
    b_at = np.column_stack([np.interp(gamma, t, b[:, c]) for c in range(b.shape[1])])
    vals = np.sum(a * b_at, axis=1)
    slope = np.diff(gamma) * (T - 1)
    h = 1.0 / (T - 1)
    return float(np.sum(0.5 * h * np.sqrt(slope) * (vals[:-1] + vals[1:])))


def path_score(a: np.ndarray, b: np.ndarray, path) -> float:
    """Symmetric quadrature of the alignment integral along a lattice path."""
    xs = np.array([p[0] for p in path], dtype=float)
    ys = np.array([p[1] for p in path], dtype=float)
    return 0.5 * (_one_side(a, b, xs, ys) + _one_side(b, a, ys, xs))


def brute_force_warping(a: np.ndarray, b: np.ndarray):
    best, best_path = -np.inf, None
    for path in lattice_paths(a.shape[0]):
        s = path_score(a, b, path)
        if s > best:
            best, best_path = s, path
    return best, best_path


def all_triples(n: int):
    return itertools.permutations(range(n), 3)
