"""Pairwise distance matrices: parallel computation, the ``.eldm`` binary
format, CSV export and empirical checks of the metric axioms.

``.eldm`` layout::

    ELDM1\\n
    <N>\\n
    <metric_tag>\\n
    <labels as a JSON list, or null>\\n
    N*N little-endian float64 values, row-major
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .curve_core import Curve
from .elastic_metrics import (
    AlignOptions,
    DiscreteDensity,
    amplitude_distance,
    fisher_rao_pdf_distance,
    phase_distance,
    identity_warping,
)

__all__ = [
    "METRIC_TAGS",
    "DistanceMatrix",
    "PairwiseError",
    "AxiomReport",
    "pair_distance",
    "compute_matrix",
    "save_matrix",
    "load_matrix",
    "write_matrix_csv",
    "validate_metric_axioms",
    "cache_key",
]

METRIC_TAGS = ("elastic_amplitude", "euclidean", "phase", "fisher_rao")
MAGIC = b"ELDM1\n"
SYMMETRY_TOL = 1e-6


class PairwiseError(RuntimeError):
    """A single pairwise evaluation failed; ``pair`` holds its indices."""

    def __init__(self, i: int, j: int, cause: BaseException):
        super().__init__(f"distance ({i}, {j}) failed: {cause}")
        self.pair = (i, j)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric ``N x N`` matrix of pairwise distances with its metric tag."""

    values: NDArray[np.float64]
    metric_tag: str
    labels: list[str] | None = None

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {v.shape}")
        if self.metric_tag not in METRIC_TAGS:
            raise ValueError(f"unknown metric tag {self.metric_tag!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("distance matrix contains non-finite entries")
        if np.any(v < 0.0):
            raise ValueError("negative entry")
        if v.size and np.max(np.abs(v - v.T)) > SYMMETRY_TOL:
            raise ValueError(f"asymmetric matrix (max |d_ij - d_ji| = {np.max(np.abs(v - v.T)):.3g})")
        if v.size and np.max(np.abs(np.diag(v))) > SYMMETRY_TOL:
            raise ValueError("non-zero diagonal")
        if self.labels is not None:
            labels = [str(x) for x in self.labels]
            if len(labels) != v.shape[0]:
                raise ValueError(f"label count mismatch: {len(labels)} labels for N={v.shape[0]}")
            object.__setattr__(self, "labels", labels)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# computation


def _flat(c: Curve) -> NDArray:
    return c.points.ravel()


def pair_distance(a, b, metric_tag: str, opts: AlignOptions | None = None) -> float:
    """Distance between two preprocessed curves (or two densities for
    ``fisher_rao``) under ``metric_tag``.

    ``phase`` is the phase distance of the optimal warping found while
    computing the amplitude distance, i.e. how far from the identity the
    alignment had to move.
    """
    if metric_tag == "elastic_amplitude":
        return amplitude_distance(a, b, opts).distance
    if metric_tag == "euclidean":
        return float(np.linalg.norm(_flat(a) - _flat(b)))
    if metric_tag == "phase":
        res = amplitude_distance(a, b, opts)
        return phase_distance(identity_warping(res.warping.T), res.warping)
    if metric_tag == "fisher_rao":
        return fisher_rao_pdf_distance(a, b)
    raise ValueError(f"unknown metric tag {metric_tag!r}")


def _check_items(items: Sequence, metric_tag: str) -> None:
    if len(items) < 2:
        raise ValueError("need at least 2 items")
    if metric_tag == "fisher_rao":
        if not all(isinstance(x, DiscreteDensity) for x in items):
            raise TypeError("fisher_rao matrices take DiscreteDensity items")
        sizes = {x.masses.size for x in items}
        if len(sizes) != 1:
            raise ValueError(f"densities have differing support sizes {sorted(sizes)}")
        return
    if not all(isinstance(x, Curve) for x in items):
        raise TypeError(f"{metric_tag} matrices take Curve items")
    dims = {c.n for c in items}
    if len(dims) != 1:
        raise ValueError(f"curves have differing dimensions {sorted(dims)}")
    if metric_tag == "euclidean" and len({c.T for c in items}) != 1:
        raise ValueError("euclidean metric needs curves resampled to a common T")


def compute_matrix(
    items: Sequence,
    metric_tag: str,
    opts: AlignOptions | None = None,
    *,
    labels: Sequence[str] | None = None,
    threads: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> DistanceMatrix:
    """Pairwise distances over the upper triangle, mirrored to the lower.

    Rows are distributed over ``threads`` workers. Each entry is computed on
    its own, so the result is bitwise-identical for any thread count.
    """
    if metric_tag not in METRIC_TAGS:
        raise ValueError(f"unknown metric tag {metric_tag!r}")
    _check_items(items, metric_tag)
    N = len(items)
    D = np.zeros((N, N))

    def row(i: int) -> int:
        for j in range(i + 1, N):
            try:
                D[i, j] = pair_distance(items[i], items[j], metric_tag, opts)
            except Exception as exc:  # noqa: BLE001 - re-raised with the pair
                raise PairwiseError(i, j, exc) from exc
        return N - 1 - i

    total, done = N * (N - 1) // 2, 0
    if threads <= 1:
        results = map(row, range(N))
        for n_pairs in results:
            done += n_pairs
            if progress:
                progress(done, total)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for n_pairs in pool.map(row, range(N)):
                done += n_pairs
                if progress:
                    progress(done, total)
    iu = np.triu_indices(N, 1)
    D[(iu[1], iu[0])] = D[iu]
    return DistanceMatrix(D, metric_tag, list(labels) if labels is not None else None)


def cache_key(items: Sequence, metric_tag: str, opts: AlignOptions | None = None) -> str:
    """Content hash of the inputs of :func:`compute_matrix`."""
    h = hashlib.sha256()
    h.update(metric_tag.encode())
    h.update(json.dumps(asdict(opts or AlignOptions()), sort_keys=True).encode())
    for x in items:
        arr = x.masses if isinstance(x, DiscreteDensity) else x.points
        h.update(np.asarray(arr.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# persistence


def save_matrix(m: DistanceMatrix, path: str | Path) -> None:
    header = MAGIC + f"{m.size}\n{m.metric_tag}\n{json.dumps(m.labels)}\n".encode()
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(m.values, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_matrix(path: str | Path) -> DistanceMatrix:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError("bad magic")
    pos = len(MAGIC)
    fields = []
    for _ in range(3):
        end = data.find(b"\n", pos)
        if end < 0:
            raise ValueError("size mismatch")
        fields.append(data[pos:end].decode())
        pos = end + 1
    try:
        N = int(fields[0])
        labels = json.loads(fields[2])
    except ValueError as exc:
        raise ValueError(f"corrupt header: {exc}") from None
    if N < 0:
        raise ValueError("corrupt header: negative size")
    body = data[pos:]
    if len(body) != 8 * N * N:
        raise ValueError("size mismatch")
    values = np.frombuffer(body, dtype="<f8").reshape(N, N).astype(np.float64)
    return DistanceMatrix(values, fields[1], labels)


def write_matrix_csv(m: DistanceMatrix, path: str | Path) -> None:
    with open(path, "w") as fh:
        for row in m.values:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# axiom checks


@dataclass(frozen=True)
class AxiomReport:
    max_asymmetry: float
    max_abs_diagonal: float
    min_off_diagonal: float
    triples_checked: int
    violations: int
    sampled: bool
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def validate_metric_axioms(
    m: DistanceMatrix | ArrayLike, slack: float = 0.0, *, max_exhaustive: float = 1e7, n_samples: int = 10_000, seed: int = 0
) -> AxiomReport:
    """Symmetry, diagonal and triangle-inequality report.

    A triple ``(i, j, k)`` with distinct indices and ``i < k`` violates the
    triangle inequality when ``d(i, k) > d(i, j) + d(j, k) + slack``. All
    triples are checked unless ``N**3 > max_exhaustive``, in which case
    ``n_samples`` random triples are drawn.
    """
    D = m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=np.float64)
    N = D.shape[0]
    off = ~np.eye(N, dtype=bool)
    max_asym = float(np.max(np.abs(D - D.T))) if N else 0.0
    max_diag = float(np.max(np.abs(np.diag(D)))) if N else 0.0
    min_off = float(np.min(D[off])) if N > 1 else 0.0

    if N < 3:
        return AxiomReport(max_asym, max_diag, min_off, 0, 0, False, slack)
    if N**3 <= max_exhaustive:
        upper = np.triu(np.ones((N, N), dtype=bool), 1)
        violations = 0
        for j in range(N):
            bad = D > D[:, j, None] + D[None, j, :] + slack
            bad &= upper
            bad[j, :] = False
            bad[:, j] = False
            violations += int(bad.sum())
        checked = N * (N - 1) * (N - 2) // 2
        return AxiomReport(max_asym, max_diag, min_off, checked, violations, False, slack)

    rng = np.random.default_rng(seed)
    triples = np.array([rng.choice(N, 3, replace=False) for _ in range(n_samples)])
    i, j, k = triples[:, 0], triples[:, 1], triples[:, 2]
    violations = int(np.sum(D[i, k] > D[i, j] + D[j, k] + slack))
    return AxiomReport(max_asym, max_diag, min_off, n_samples, violations, True, slack)
