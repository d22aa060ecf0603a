"""Shape corpora: manifest loading, PGM bitmaps, contour tracing and a
seeded synthetic benchmark with controlled nuisance transformations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .curve_core import DEFAULT_T, Curve, DegenerateCurveError, preprocess, read_curve_csv

__all__ = [
    "ShapeDataset",
    "TEMPLATES",
    "load_dataset",
    "read_pgm",
    "write_pgm",
    "trace_contour",
    "synth_shapes",
    "synth_warping",
    "write_manifest",
]


@dataclass
class ShapeDataset:
    curves: list[Curve]
    labels: list[str]
    names: list[str]
    manifest: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (len(self.curves) == len(self.labels) == len(self.names)):
            raise ValueError(
                f"label count mismatch: {len(self.curves)} curves, "
                f"{len(self.labels)} labels, {len(self.names)} names"
            )

    def __len__(self) -> int:
        return len(self.curves)

    def preprocessed(self, T: int = DEFAULT_T) -> "ShapeDataset":
        return ShapeDataset([preprocess(c, T) for c in self.curves], list(self.labels), list(self.names), dict(self.manifest))


# ---------------------------------------------------------------------------
# PGM bitmaps


def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path: str | Path) -> NDArray[np.int64]:
    """Read a P2 (ASCII) or P5 (binary) graymap into an integer array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    width, height, maxval = int(w), int(h), int(maxval)
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad PGM header")
    if magic == b"P2":
        values, _ = _pgm_tokens(data, width * height, pos)
        img = np.array([int(v) for v in values], dtype=np.int64)
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    return img.reshape(height, width)


def write_pgm(img: NDArray, path: str | Path) -> None:
    img = np.asarray(img)
    maxval = max(int(img.max()), 1) if img.size else 1
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{255 if maxval <= 255 else maxval}\n".encode()
    Path(path).write_bytes(header + img.astype(dtype).tobytes())


# ---------------------------------------------------------------------------
# contour tracing

# Moore neighbourhood in clockwise screen order (row axis points down),
# starting from the west neighbour.
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]


def trace_contour(bitmap: NDArray, threshold: int = 127) -> Curve:
    """Boundary of the largest 8-connected foreground component.

    Moore-neighbour following from the first foreground pixel in raster
    order; tracing stops when the first move out of the start pixel is about
    to be repeated. Returns boundary pixel centres as ``(x, y)`` with ``y``
    pointing up, ordered counterclockwise, without a duplicated closing point.
    """
    img = np.asarray(bitmap)
    if img.dtype != bool:
        img = img > threshold
    if not img.any():
        raise ValueError("empty image: no foreground pixels")
    labels, count = ndimage.label(img, structure=np.ones((3, 3), dtype=int))
    if count > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
        keep = int(np.argmax(sizes)) + 1
    else:
        keep = 1
    fg = np.pad(labels == keep, 1)

    rows, cols = np.nonzero(fg)
    start = (int(rows[0]), int(cols[0]))
    # raster order guarantees the west neighbour of the start is background
    back_dir = 0
    boundary = [start]
    first_move: tuple | None = None
    cur = start
    for _ in range(8 * fg.size):
        nxt = None
        for step in range(1, 9):
            d = (back_dir + step) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if fg[cand]:
                nxt = cand
                # the neighbour examined just before ``cand`` is background;
                # express it relative to ``cand`` for the next search
                prev = (cur[0] + _MOORE[(d - 1) % 8][0], cur[1] + _MOORE[(d - 1) % 8][1])
                back_dir = _MOORE.index((prev[0] - cand[0], prev[1] - cand[1]))
                break
        if nxt is None:  # isolated pixel
            break
        move = (cur, nxt)
        if first_move is None:
            first_move = move
        elif move == first_move:
            break
        boundary.append(nxt)
        cur = nxt
    if boundary[-1] == start and len(boundary) > 1:
        boundary.pop()
    if len(boundary) < 3:
        raise DegenerateCurveError("degenerate contour: fewer than 3 boundary pixels")

    r = np.array([p[0] for p in boundary], dtype=np.float64) - 1.0
    c = np.array([p[1] for p in boundary], dtype=np.float64) - 1.0
    pts = np.column_stack([c, (img.shape[0] - 1) - r])
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area2 < 0:
        pts = np.vstack([pts[:1], pts[1:][::-1]])
    return Curve(pts)


def _close(c: Curve) -> Curve:
    return c if c.is_closed() else Curve(np.vstack([c.points, c.points[:1]]))


# ---------------------------------------------------------------------------
# manifests


def load_dataset(manifest_path: str | Path, T: int = DEFAULT_T, threshold: int = 127) -> ShapeDataset:
    """Load a JSON manifest ``{"entries": [{"file", "label", "name"}, ...]}``.

    Paths are relative to the manifest. ``.pgm`` files are traced into closed
    contours; anything else is read as point CSV. Every curve is arc-length
    resampled to ``T`` points and scale-normalized.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{manifest_path}: invalid JSON ({exc})") from None
    entries = doc.get("entries") if isinstance(doc, dict) else None
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{manifest_path}: manifest must contain a non-empty 'entries' list")
    curves, labels, names = [], [], []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict) or "file" not in entry or "label" not in entry:
            raise ValueError(f"{manifest_path}: entry {k} needs 'file' and 'label'")
        path = (manifest_path.parent / entry["file"]).resolve()
        if not path.exists():
            raise FileNotFoundError(f"missing file: {entry['file']} (resolved to {path})")
        if path.suffix.lower() == ".pgm":
            try:
                raw = _close(trace_contour(read_pgm(path), threshold))
            except (ValueError, DegenerateCurveError) as exc:
                raise ValueError(f"{entry['file']}: empty contour ({exc})") from None
        else:
            raw = read_curve_csv(path)
        curves.append(preprocess(raw, T))
        labels.append(str(entry["label"]))
        names.append(str(entry.get("name", path.stem)))
    return ShapeDataset(curves, labels, names, {"source": str(manifest_path), "T": T})


def write_manifest(entries: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"entries": list(entries)}, indent=2) + "\n")


# ---------------------------------------------------------------------------
# synthetic shapes


def _polar(radius: Callable[[NDArray], NDArray]) -> Callable[[NDArray], NDArray]:
    def shape(u: NDArray) -> NDArray:
        th = 2.0 * np.pi * u
        r = radius(th)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    return shape


def _ellipse(u: NDArray) -> NDArray:
    th = 2.0 * np.pi * u
    return np.column_stack([np.cos(th), 0.5 * np.sin(th)])


def _rectangle(u: NDArray) -> NDArray:
    # 2 x 1 rectangle traversed at unit speed, starting mid right side
    corners = np.array([[1.0, 0.0], [1.0, 0.5], [-1.0, 0.5], [-1.0, -0.5], [1.0, -0.5], [1.0, 0.0]])
    seg = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
    return np.column_stack([np.interp(u, s, corners[:, 0]), np.interp(u, s, corners[:, 1])])


def _s_curve(u: NDArray) -> NDArray:
    return np.column_stack([0.6 * np.sin(2.0 * np.pi * u), 2.0 * u - 1.0])


#: Base templates, in order of use, as maps ``u in [0, 1] -> R^2``.
TEMPLATES: dict[str, Callable[[NDArray], NDArray]] = {
    "ellipse": _ellipse,
    "rectangle": _rectangle,
    "star3": _polar(lambda th: 1.0 + 0.35 * np.cos(3.0 * th)),
    "star5": _polar(lambda th: 1.0 + 0.3 * np.cos(5.0 * th)),
    "s_curve": _s_curve,
}


def synth_warping(t: NDArray, rng: np.random.Generator, min_slope: float = 0.05) -> NDArray:
    """``t + sum_m c_m sin(pi m t)``, coefficients shrunk until the slope stays
    above ``min_slope``."""
    c = rng.uniform(-1.0, 1.0, 3) / (np.pi * np.arange(1, 4))
    m = np.arange(1, 4)
    dense = np.linspace(0.0, 1.0, 2001)
    while True:
        slope = 1.0 + np.sum(c[:, None] * np.pi * m[:, None] * np.cos(np.pi * m[:, None] * dense), axis=0)
        if slope.min() > min_slope:
            break
        c *= 0.9
    gamma = t + np.sum(c[:, None] * np.sin(np.pi * m[:, None] * t), axis=0)
    gamma[0], gamma[-1] = 0.0, 1.0
    return gamma


def synth_shapes(
    n_classes: int,
    per_class: int,
    nuisance: float,
    seed: int,
    *,
    T: int = DEFAULT_T,
    warp: bool = True,
) -> ShapeDataset:
    """Seeded synthetic benchmark built from :data:`TEMPLATES`.

    Each instance gets a random rotation in [0, 2 pi), scale in [0.5, 2], a
    translation, a smooth random reparameterization (unless ``warp`` is
    false) and isotropic point jitter with standard deviation
    ``nuisance * diameter``. Curves are returned raw (not preprocessed).
    """
    if not 1 <= n_classes <= len(TEMPLATES):
        raise ValueError(f"n_classes must be in [1, {len(TEMPLATES)}], got {n_classes}")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, T)
    curves, labels, names = [], [], []
    for name in list(TEMPLATES)[:n_classes]:
        template = TEMPLATES[name]
        for k in range(per_class):
            theta = rng.uniform(0.0, 2.0 * np.pi)
            scale = rng.uniform(0.5, 2.0)
            shift = rng.normal(0.0, 1.0, 2)
            u = synth_warping(t, rng) if warp else t
            base = template(u)
            O = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            pts = scale * base @ O.T + shift
            diameter = float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)))
            if nuisance > 0:
                pts = pts + rng.normal(0.0, nuisance * diameter, pts.shape)
            curves.append(Curve(pts))
            labels.append(name)
            names.append(f"{name}_{k:03d}")
    manifest = {"generator": "synth_shapes", "n_classes": n_classes, "per_class": per_class,
                "nuisance": nuisance, "seed": seed, "T": T, "warp": warp}
    return ShapeDataset(curves, labels, names, manifest)
