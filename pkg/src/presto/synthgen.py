"""Synthetic data from a nonparallel cumulative-logit model.

Features are iid Uniform(-1, 1).  Boundary slopes are built as
``beta_k = beta_{k-1} + psi_k`` with either sparse or dense random
differences; coefficient draws that make any class probability
non-positive at any sampled row are redrawn (``X`` is kept fixed).

Random streams: every draw for one scenario comes from a single
``numpy.random.Generator`` seeded by ``config.seed``.  The seed may be an
int or a ``numpy.random.SeedSequence``; :func:`replication_seed` derives
the per-replication substream used by the experiment harness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FeasibilityRetriesExhausted
from .ordinal import CoefficientSet, Dataset, probability_table

REGIMES = ("sparse", "dense")


def replication_seed(master_seed: int, replication: int) -> np.random.SeedSequence:
    """Independent substream ``replication`` of ``master_seed``.

    Identical to ``SeedSequence(master_seed).spawn(r + 1)[r]``, but computable
    for any index without spawning the earlier ones.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(replication),))


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 2500
    p: int = 10
    K: int = 4
    intercepts: tuple = (0.0, 3.5, 5.5)
    regime: str = "sparse"
    sparsity_eta: float = 0.5
    seed: object = 0
    max_retries: int = 100

    def __post_init__(self):
        intercepts = tuple(float(a) for a in self.intercepts)
        object.__setattr__(self, "intercepts", intercepts)
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if len(intercepts) != self.K - 1:
            raise ValueError(f"K={self.K} needs {self.K - 1} intercepts, got {len(intercepts)}")
        if any(b <= a for a, b in zip(intercepts, intercepts[1:])):
            raise ValueError("intercepts must be strictly increasing")
        if self.regime == "sparse" and not (0 < self.sparsity_eta <= 1):
            raise ValueError("sparsity_eta must lie in (0, 1]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")


@dataclass(frozen=True)
class GroundTruth:
    coeffs: CoefficientSet
    X: np.ndarray = field(repr=False)
    true_pi: np.ndarray = field(repr=False)
    attempts: int = 1


def _draw_beta1(rng, cfg):
    if cfg.regime == "sparse":
        return 0.5 * (rng.random(cfg.p) < cfg.sparsity_eta)
    return rng.uniform(-0.5, 0.5, cfg.p)


def _draw_psi(rng, cfg):
    shape = (cfg.K - 2, cfg.p)
    if cfg.regime == "sparse":
        eta = cfg.sparsity_eta
        return rng.choice([0.0, 0.5, -0.5], size=shape, p=[1 - eta, eta / 2, eta / 2])
    return rng.uniform(-0.5, 0.5, shape)


def generate_scenario(config: ScenarioConfig):
    """Draw ``(Dataset, GroundTruth)`` for one replication of ``config``.

    Raises :class:`FeasibilityRetriesExhausted` if ``max_retries`` redraws of
    the coefficients all leave some class probability non-positive.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    X = rng.uniform(-1.0, 1.0, (cfg.n, cfg.p))
    beta1 = _draw_beta1(rng, cfg)
    alphas = np.array(cfg.intercepts)
    for attempt in range(1, cfg.max_retries + 2):
        psi = _draw_psi(rng, cfg)
        theta = np.concatenate([beta1, psi.reshape(-1)])
        coeffs = CoefficientSet(alphas, theta, cfg.K, cfg.p)
        pi = probability_table(coeffs, X, check=False)
        if np.all(pi > 0):
            break
        if cfg.regime == "dense":
            beta1 = _draw_beta1(rng, cfg)
    else:
        raise FeasibilityRetriesExhausted(
            f"no feasible coefficients after {cfg.max_retries} retries"
        )
    y = sample_labels(rng, pi)
    truth = GroundTruth(coeffs=coeffs, X=X, true_pi=pi, attempts=attempt)
    return Dataset(X, y, cfg.K), truth


def sample_labels(rng, prob_table) -> np.ndarray:
    """One categorical draw per row of ``prob_table``; labels are 1-based."""
    cum = np.cumsum(prob_table, axis=1)[:, :-1]
    u = rng.random(prob_table.shape[0])
    return 1 + (u[:, None] >= cum).sum(axis=1)


def true_rare_probability(truth: GroundTruth, row: int) -> float:
    return float(truth.true_pi[row, -1])


def write_dataset_csv(path, data: Dataset, feature_names=None):
    """CSV with a header, features in order, then integer label column ``y``."""
    names = list(feature_names) if feature_names else [f"x{j + 1}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["y"])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])
