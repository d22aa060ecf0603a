from __future__ import annotations

import time

import numpy as np
import pytest

from elastic_embed.datasets import synth_shapes
from elastic_embed.distmat import compute_matrix

ACCEPTANCE: dict[int, tuple[bool | None, str]] = {}


def record(criterion: int, passed: bool | None, detail: str) -> None:
    """Store one acceptance outcome; ``None`` marks a skipped criterion."""
    ACCEPTANCE[criterion] = (passed, detail)


@pytest.fixture(scope="session")
def synth80():
    """The 4 x 20 synthetic benchmark at nuisance 0.02, preprocessed to T=100."""
    return synth_shapes(4, 20, 0.02, seed=0).preprocessed(100)


@pytest.fixture(scope="session")
def synth80_matrices(synth80):
    t0 = time.perf_counter()
    elastic = compute_matrix(synth80.curves, "elastic_amplitude", labels=synth80.labels)
    t1 = time.perf_counter()
    euclid = compute_matrix(synth80.curves, "euclidean", labels=synth80.labels)
    t2 = time.perf_counter()
    return {"elastic": elastic, "euclidean": euclid, "seconds": {"elastic": t1 - t0, "euclidean": t2 - t1}}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"criterion {k}: {status} - {detail}")
