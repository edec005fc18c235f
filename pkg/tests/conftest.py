import numpy as np
import pytest

from mosfuse.core import MosDataset, ScoreMatrix

NAMES5 = ("a", "b", "c", "d", "e")


def make_scores(n, k=5, seed=0, systems=10, noise=0.3):
    """Labeled dataset plus a noisy K-column score table over it."""
    rng = np.random.default_rng(seed)
    truth = np.clip(rng.uniform(1.5, 4.5, n), 1, 5)
    ids = [f"s{i % systems:02d}-u{i:04d}" for i in range(n)]
    sys_ids = [u.split("-")[0] for u in ids]
    bias = rng.uniform(-0.3, 0.3, k)
    scale = rng.uniform(0.8, 1.2, k)
    values = truth[:, None] * scale + bias + rng.normal(0, noise, (n, k))
    names = tuple(f"m{j}" for j in range(k))
    return MosDataset.from_arrays(ids, sys_ids, truth), ScoreMatrix(ids, names, values, sys_ids)


@pytest.fixture
def small_data():
    return make_scores(120, k=4, seed=3)


# Acceptance lines are collected here and echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
