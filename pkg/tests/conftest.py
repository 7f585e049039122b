import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def sample_po_data(rng, n, p, K, scale=0.8, spread=1.2, nonparallel=0.0):
    """Labels from a cumulative-logit model with random slopes; small ``nonparallel`` adds psi."""
    X = rng.normal(size=(n, p))
    alphas = np.cumsum(np.r_[-0.5 * spread * (K - 2), np.full(K - 2, spread)])
    beta = rng.normal(size=p) * scale
    B = np.tile(beta[:, None], (1, K - 1))
    if nonparallel:
        B = B + np.cumsum(np.c_[np.zeros(p), rng.normal(size=(p, K - 2)) * nonparallel], axis=1)
    eta = alphas[None, :] + X @ B
    cum = 1.0 / (1.0 + np.exp(-eta))
    u = rng.random(n)
    y = 1 + (u[:, None] >= cum).sum(axis=1)
    return X, y


def all_classes(y, K):
    return np.unique(y).size == K


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
