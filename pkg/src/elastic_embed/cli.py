"""Command-line entry point: ``elastic-embed {synth,distmat,embed,eval,plot}``.

Exit codes: 0 on success, 1 for user errors (bad arguments, missing or
malformed files), 2 when an internal invariant is violated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify_eval import ClassifierConfig, ReducerConfig, evaluate, run_reducer
from .curve_core import DEFAULT_T, write_curve_csv
from .datasets import load_dataset, synth_shapes, write_manifest
from .distmat import (
    PairwiseError,
    cache_key,
    compute_matrix,
    load_matrix,
    save_matrix,
    validate_metric_axioms,
)
from .elastic_metrics import AlignOptions
from .embed_tsne import TsneParams
from .embedding import read_embedding_csv, write_embedding
from .seeding import derive_seed

__all__ = ["main", "build_parser", "render_svg"]

CACHE_ENV = "ELASTIC_EMBED_CACHE"
METRICS = {"elastic": "elastic_amplitude", "euclidean": "euclidean", "phase": "phase"}
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


class UserError(Exception):
    """Bad arguments or input files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        raise UserError(message)


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _existing(path: str | None, what: str) -> Path:
    if path is None:
        raise UserError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise UserError(f"{what} not found: {p}")
    return p


def _progress(quiet: bool):
    if quiet:
        return None
    last = [0.0]

    def report(done: int, total: int) -> None:
        now = time.monotonic()
        if done == total or now - last[0] > 2.0:
            last[0] = now
            print(f"distmat: {done}/{total} pairs", file=sys.stderr, flush=True)

    return report


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = synth_shapes(args.classes, args.per_class, args.nuisance, args.seed, T=args.T)
    entries = []
    for curve, label, name in zip(ds.curves, ds.labels, ds.names):
        write_curve_csv(curve, out / f"{name}.csv")
        entries.append({"file": f"{name}.csv", "label": label, "name": name})
    write_manifest(entries, out / "manifest.json")
    _write_json(out / "synth.json", {"seed": args.seed, **ds.manifest})
    print(out / "manifest.json")
    return 0


def cmd_distmat(args: argparse.Namespace) -> int:
    manifest = _existing(args.manifest, "manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(manifest, T=args.T)
    tag = METRICS[args.metric]
    opts = AlignOptions(seed_search=args.seed_search)

    t0 = time.perf_counter()
    cached = None
    cache_dir = os.environ.get(CACHE_ENV)
    if cache_dir:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cached = cache_dir / f"{cache_key(ds.curves, tag, opts)}.eldm"
    if cached is not None and cached.exists():
        m = load_matrix(cached)
        m = type(m)(m.values, m.metric_tag, ds.labels)
        from_cache = True
    else:
        m = compute_matrix(ds.curves, tag, opts, labels=ds.labels, threads=args.threads, progress=_progress(args.quiet))
        from_cache = False
        if cached is not None:
            save_matrix(m, cached)
    wall = time.perf_counter() - t0

    save_matrix(m, out / "matrix.eldm")
    report = validate_metric_axioms(m, args.slack)
    _write_json(out / "matrix.json", {
        "N": m.size,
        "metric": tag,
        "wall_time_s": wall,
        "from_cache": from_cache,
        "axioms": report.to_dict(),
        "names": ds.names,
        "config": {"manifest": str(manifest), "T": args.T, "align": asdict(opts), "seed": args.seed, "threads": args.threads},
    })
    print(out / "matrix.eldm")
    return 0


def _reducer_config(args: argparse.Namespace) -> ReducerConfig:
    return ReducerConfig(
        kind=args.reducer,
        d=args.dim,
        perplexity=args.perplexity,
        k_neighbors=args.k_neighbors,
        tsne=TsneParams(n_iter=args.iterations, learning_rate=args.learning_rate),
        n_epochs=args.epochs,
    )


def cmd_embed(args: argparse.Namespace) -> int:
    m = load_matrix(_existing(args.matrix, "matrix"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _reducer_config(args)
    emb = run_reducer(m, config, derive_seed(args.seed, "reducer"))
    extra = {"master_seed": args.seed, "reducer": asdict(config), "metric": m.metric_tag, "matrix": str(args.matrix)}
    write_embedding(emb, out / "embedding.csv", m.labels, extra)
    print(out / "embedding.csv")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    m = load_matrix(_existing(args.matrix, "matrix"))
    if m.labels is None:
        raise UserError("matrix has no labels")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(m, _reducer_config(args), ClassifierConfig(kind=args.classifier, k=args.knn_k, n_trees=args.trees), args.folds, args.seed)
    report.config["matrix"] = str(args.matrix)
    report.write_json(out / "report.json")
    report.write_confusion_csv(out / "confusion.csv")
    print(f"macro_f1={report.macro_f1:.4f} mcc={report.mcc:.4f}")
    return 0


def render_svg(labels: Sequence[str], Y: np.ndarray, width: int = 640, height: int = 480) -> str:
    """Scatter plot of the first two embedding columns, colored by class."""
    if len(labels) == 0:
        raise ValueError("no points")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[1] == 1:
        Y = np.column_stack([Y[:, 0], np.zeros(len(Y))])
    classes = sorted(set(labels))
    color = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}
    legend_w, pad = 150, 20
    lo, hi = Y[:, :2].min(axis=0), Y[:, :2].max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    plot_w, plot_h = width - legend_w - 2 * pad, height - 2 * pad
    px = pad + (Y[:, 0] - lo[0]) / span[0] * plot_w
    py = pad + plot_h - (Y[:, 1] - lo[1]) / span[1] * plot_h
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        '<g class="points">',
    ]
    for lab, x, y in zip(labels, px, py):
        lines.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color[lab]}" fill-opacity="0.8"/>')
    lines.append("</g>")
    lines.append('<g class="legend" font-family="sans-serif" font-size="12">')
    for i, c in enumerate(classes):
        y = pad + 10 + 18 * i
        x = width - legend_w + 10
        text = c.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        lines.append(f'<circle cx="{x}" cy="{y}" r="5" fill="{color[c]}"/>')
        lines.append(f'<text x="{x + 12}" y="{y + 4}">{text}</text>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_plot(args: argparse.Namespace) -> int:
    src = _existing(args.embedding, "embedding")
    labels, Y = read_embedding_csv(src)
    Path(args.out).write_text(render_svg(labels, Y))
    print(args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_reducer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", help="input .eldm file")
    p.add_argument("--reducer", choices=("tsne", "etsne", "umap"), default="umap")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--k-neighbors", type=int, default=15, help="UMAP neighborhood size")
    p.add_argument("--iterations", type=int, default=1000, help="t-SNE iterations")
    p.add_argument("--learning-rate", type=float, default=200.0, help="t-SNE learning rate")
    p.add_argument("--epochs", type=int, default=500, help="UMAP epochs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elastic-embed", description="Elastic shape distances, embeddings and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic shape dataset and manifest")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--nuisance", type=float, default=0.02)
    p.add_argument("--T", type=int, default=DEFAULT_T)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("distmat", help="pairwise distance matrix from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=tuple(METRICS), default="elastic")
    p.add_argument("--T", type=int, default=DEFAULT_T)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed-search", action="store_true", help="search over start points of closed contours")
    p.add_argument("--slack", type=float, default=0.03, help="triangle-inequality slack in the report")
    p.add_argument("--seed", type=int, default=0, help="recorded only; the matrix is deterministic")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("embed", help="embed a distance matrix")
    _add_reducer_args(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="embed, then cross-validate a classifier")
    _add_reducer_args(p)
    p.add_argument("--classifier", choices=("knn", "rf"), default="knn")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="SVG scatter plot of an embedding CSV")
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", "-o", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PairwiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.__cause__, (ValueError, OSError)) else 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as an invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
