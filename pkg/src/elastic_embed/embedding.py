"""Low-dimensional embeddings and their CSV + JSON sidecar export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = ["Embedding", "write_embedding", "read_embedding_csv", "sidecar_path"]


@dataclass(frozen=True, eq=False)
class Embedding:
    """``N x d`` coordinates plus everything needed to regenerate them."""

    Y: NDArray[np.float64]
    seed: int
    cost_kind: str
    hyperparams: dict[str, Any] = field(default_factory=dict)
    cost_history: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        Y = np.array(self.Y, dtype=np.float64, copy=True)
        if Y.ndim != 2:
            raise ValueError(f"embedding must be (N, d), got shape {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("embedding has non-finite coordinates")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "cost_history", np.asarray(self.cost_history, dtype=np.float64))

    @property
    def final_cost(self) -> float | None:
        return float(self.cost_history[-1]) if self.cost_history.size else None


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_embedding(
    emb: Embedding, csv_path: str | Path, labels: Sequence[str] | None = None, extra: dict | None = None
) -> Path:
    """Write ``label,y1,...,yd`` rows and a JSON sidecar next to ``csv_path``."""
    N = emb.Y.shape[0]
    labels = [str(x) for x in labels] if labels is not None else [""] * N
    if len(labels) != N:
        raise ValueError(f"label count mismatch: {len(labels)} labels for {N} points")
    with open(csv_path, "w") as fh:
        for lab, row in zip(labels, emb.Y):
            fh.write(",".join([lab] + [repr(float(x)) for x in row]) + "\n")
    meta = {
        "seed": emb.seed,
        "cost_kind": emb.cost_kind,
        "hyperparams": emb.hyperparams,
        "final_cost": emb.final_cost,
        "n_points": N,
        "dim": emb.Y.shape[1],
    }
    if extra:
        meta.update(extra)
    side = sidecar_path(csv_path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_embedding_csv(path: str | Path) -> tuple[list[str], NDArray[np.float64]]:
    labels, rows = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad number ({exc})") from None
            labels.append(parts[0])
    if not rows:
        raise ValueError("no points")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing dimensions")
    return labels, np.array(rows, dtype=np.float64)
