import json
import re

import numpy as np
import pytest

from elastic_embed import cli
from elastic_embed.distmat import load_matrix
from elastic_embed.embedding import read_embedding_csv, sidecar_path

FAST = ["--k-neighbors", "5", "--perplexity", "3", "--epochs", "100", "--iterations", "300"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--classes", "3", "--per-class", "4", "--nuisance", "0.005", "--seed", "2",
                     "-o", str(root / "data")]) == 0
    assert cli.main(["distmat", "--manifest", str(root / "data" / "manifest.json"), "--metric", "elastic",
                     "--quiet", "-o", str(root / "el")]) == 0
    return root


# ---------------------------------------------------------------------------
# exit codes


def test_exit_code_user_errors(tmp_path, capsys):
    assert cli.main([]) == 1
    assert cli.main(["distmat", "--manifest", str(tmp_path / "nope.json"), "-o", str(tmp_path)]) == 1
    assert "not found" in capsys.readouterr().err
    assert cli.main(["embed", "--matrix", str(tmp_path / "x.eldm"), "-o", str(tmp_path)]) == 1
    assert cli.main(["embed", "--reducer", "pca", "-o", str(tmp_path)]) == 1
    (tmp_path / "bad.eldm").write_bytes(b"junk")
    assert cli.main(["embed", "--matrix", str(tmp_path / "bad.eldm"), "-o", str(tmp_path)]) == 1


def test_exit_code_internal_error(workdir, tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise AssertionError("invariant")

    monkeypatch.setattr(cli, "run_reducer", broken)
    assert cli.main(["embed", "--matrix", str(workdir / "el" / "matrix.eldm"), "-o", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# distmat


def test_distmat_outputs(workdir):
    m = load_matrix(workdir / "el" / "matrix.eldm")
    assert m.size == 12 and m.metric_tag == "elastic_amplitude"
    meta = json.loads((workdir / "el" / "matrix.json").read_text())
    assert meta["N"] == 12 and meta["metric"] == "elastic_amplitude" and "seed" in meta["config"]
    assert meta["wall_time_s"] >= 0 and "violations" in meta["axioms"]


def test_distmat_euclidean_differs(workdir):
    out = workdir / "eu"
    assert cli.main(["distmat", "--manifest", str(workdir / "data" / "manifest.json"), "--metric", "euclidean",
                     "--quiet", "-o", str(out)]) == 0
    a = load_matrix(workdir / "el" / "matrix.eldm")
    b = load_matrix(out / "matrix.eldm")
    assert a.size == b.size and not np.array_equal(a.values, b.values)
    assert (out / "matrix.eldm").read_bytes() != (workdir / "el" / "matrix.eldm").read_bytes()


def test_distmat_threads_bitwise(workdir, tmp_path):
    man = str(workdir / "data" / "manifest.json")
    for t in ("1", "8"):
        assert cli.main(["distmat", "--manifest", man, "--threads", t, "--quiet", "-o", str(tmp_path / t)]) == 0
    assert (tmp_path / "1" / "matrix.eldm").read_bytes() == (tmp_path / "8" / "matrix.eldm").read_bytes()
    assert (tmp_path / "1" / "matrix.eldm").read_bytes() == (workdir / "el" / "matrix.eldm").read_bytes()


def test_distmat_cache(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.CACHE_ENV, str(tmp_path / "cache"))
    man = str(workdir / "data" / "manifest.json")
    assert cli.main(["distmat", "--manifest", man, "--metric", "euclidean", "--quiet", "-o", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "cache").glob("*.eldm"))) == 1

    def fail(*args, **kwargs):
        raise AssertionError("cache was not used")

    monkeypatch.setattr(cli, "compute_matrix", fail)
    assert cli.main(["distmat", "--manifest", man, "--metric", "euclidean", "--quiet", "-o", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "matrix.json").read_text())["from_cache"] is True
    assert (tmp_path / "a" / "matrix.eldm").read_bytes() == (tmp_path / "b" / "matrix.eldm").read_bytes()


# ---------------------------------------------------------------------------
# embed


def test_embed_umap_rows(workdir, tmp_path):
    mat = str(workdir / "el" / "matrix.eldm")
    assert cli.main(["embed", "--matrix", mat, "--reducer", "umap", "--seed", "7", *FAST, "-o", str(tmp_path)]) == 0
    labels, Y = read_embedding_csv(tmp_path / "embedding.csv")
    assert Y.shape == (12, 2) and len(labels) == 12
    meta = json.loads(sidecar_path(tmp_path / "embedding.csv").read_text())
    assert meta["master_seed"] == 7 and meta["reducer"]["kind"] == "umap"


@pytest.mark.parametrize("reducer,kind", [("etsne", "fisher_rao"), ("tsne", "kl"), ("umap", "umap")])
def test_embed_rerun_identical(workdir, tmp_path, reducer, kind):
    mat = str(workdir / "el" / "matrix.eldm")
    for run in ("a", "b"):
        assert cli.main(["embed", "--matrix", mat, "--reducer", reducer, "--seed", "3", *FAST,
                         "-o", str(tmp_path / run)]) == 0
    for name in ("embedding.csv", sidecar_path(tmp_path / "a" / "embedding.csv").name):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads(sidecar_path(tmp_path / "a" / "embedding.csv").read_text())["cost_kind"] == kind


# ---------------------------------------------------------------------------
# eval


@pytest.mark.parametrize("classifier", ["knn", "rf"])
def test_eval_report(workdir, tmp_path, classifier):
    mat = str(workdir / "el" / "matrix.eldm")
    args = ["eval", "--matrix", mat, "--reducer", "umap", "--classifier", classifier, "--knn-k", "3",
            "--trees", "20", "--folds", "4", "--seed", "1", *FAST, "-o", str(tmp_path)]
    assert cli.main(args) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert 0.0 <= rep["macro_f1"] <= 1.0
    assert len(rep["per_fold"]) == 4
    assert rep["config"]["seed"] == 1
    rows = (tmp_path / "confusion.csv").read_text().splitlines()
    assert len(rows) == 4


def test_eval_five_folds_twenty_per_class(tmp_path):
    data = tmp_path / "data"
    assert cli.main(["synth", "--classes", "2", "--per-class", "20", "--nuisance", "0.0", "--seed", "0",
                     "-o", str(data)]) == 0
    assert cli.main(["distmat", "--manifest", str(data / "manifest.json"), "--metric", "euclidean",
                     "--quiet", "-o", str(tmp_path / "m")]) == 0
    assert cli.main(["eval", "--matrix", str(tmp_path / "m" / "matrix.eldm"), "--folds", "5", "--k-neighbors", "8",
                     "--epochs", "100", "-o", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert len(rep["per_fold"]) == 5 and 0.0 <= rep["macro_f1"] <= 1.0


# ---------------------------------------------------------------------------
# plot


def test_plot_legend_and_determinism(workdir, tmp_path):
    mat = str(workdir / "el" / "matrix.eldm")
    assert cli.main(["embed", "--matrix", mat, *FAST, "-o", str(tmp_path)]) == 0
    emb = str(tmp_path / "embedding.csv")
    assert cli.main(["plot", "--embedding", emb, "-o", str(tmp_path / "a.svg")]) == 0
    assert cli.main(["plot", "--embedding", emb, "-o", str(tmp_path / "b.svg")]) == 0
    svg = (tmp_path / "a.svg").read_text()
    assert svg == (tmp_path / "b.svg").read_text()
    legend = svg.split('<g class="legend"')[1]
    assert len(re.findall(r"<text ", legend)) == 3
    assert len(re.findall(r"<circle ", svg.split('<g class="legend"')[0])) == 12
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_plot_colors_by_sorted_class():
    svg = cli.render_svg(["b", "a", "b"], np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]]))
    legend = svg.split('<g class="legend"')[1]
    names = re.findall(r">([^<]+)</text>", legend)
    assert names == ["a", "b"]
    assert f'fill="{cli.PALETTE[0]}"/>\n<text x="{640 - 150 + 10 + 12}" y="34">a' in legend


def test_plot_no_points(tmp_path, capsys):
    with pytest.raises(ValueError, match="no points"):
        cli.render_svg([], np.zeros((0, 2)))
    (tmp_path / "e.csv").write_text("")
    assert cli.main(["plot", "--embedding", str(tmp_path / "e.csv"), "-o", str(tmp_path / "x.svg")]) == 1
    assert "no points" in capsys.readouterr().err
