"""Scoring rules and the paired one-tailed t-test used to compare methods."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class MetricSample:
    method: str
    replication: int
    value: float


def rare_prob_mse(estimated, truth) -> float:
    """Mean squared error between estimated and true rare-class probabilities."""
    estimated = np.asarray(estimated, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimated.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimated.shape} vs {truth.shape}")
    return float(np.mean((estimated - truth) ** 2))


def equal_frequency_bins(m: int, bins: int) -> np.ndarray:
    """Bin index for each of ``m`` sorted positions; earlier bins take the remainder."""
    base, extra = divmod(m, bins)
    sizes = np.full(bins, base)
    sizes[:extra] += 1
    return np.repeat(np.arange(bins), sizes)


def binned_calibration_mse(estimated, labels, bins: int = 10) -> float:
    """Squared-error calibration estimate from equal-frequency bins.

    Observations are sorted by estimated probability (stable, so ties keep
    their original order) and cut into ``bins`` consecutive groups whose
    sizes differ by at most one.  Each estimate is compared with the observed
    positive rate of its group::

        (1/m) * sum_i (estimated_i - observed_rate[bin(i)])**2
    """
    estimated = np.asarray(estimated, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if estimated.shape != labels.shape or estimated.ndim != 1:
        raise ValueError("estimated and labels must be 1-d arrays of equal length")
    m = estimated.shape[0]
    if bins < 1 or m < bins:
        raise ValueError(f"need at least {bins} observations, got {m}")
    order = np.argsort(estimated, kind="stable")
    bin_of = equal_frequency_bins(m, bins)
    rates = np.bincount(bin_of, weights=labels[order]) / np.bincount(bin_of)
    return float(np.mean((estimated[order] - rates[bin_of]) ** 2))


def brier_score(prob_table, labels) -> float:
    """Multiclass Brier score ``(1/m) sum_i sum_k (1{y_i = k} - p_ik)^2`` with 1-based labels."""
    P = np.asarray(prob_table, dtype=float)
    labels = np.asarray(labels)
    if P.ndim != 2 or P.shape[0] != labels.shape[0]:
        raise ValueError("prob_table must be m x K with one row per label")
    if not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("probability rows must sum to 1")
    if labels.min() < 1 or labels.max() > P.shape[1]:
        raise ValueError(f"labels must lie in 1..{P.shape[1]}")
    onehot = np.zeros_like(P)
    onehot[np.arange(P.shape[0]), labels - 1] = 1.0
    return float(np.mean(((onehot - P) ** 2).sum(axis=1)))


def paired_t_test_one_tailed(a, b) -> float:
    """p-value for the alternative ``mean(a) < mean(b)`` on paired samples.

    Uses the lower tail of Student's t with ``r - 1`` degrees of freedom.
    When the differences have zero spread the result is 0.5, 0 or 1 according
    to whether their mean is zero, negative or positive.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-d arrays of equal length")
    r = a.shape[0]
    if r < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return 0.5 if mean == 0.0 else (0.0 if mean < 0 else 1.0)
    t = mean / (sd / math.sqrt(r))
    # stdtr evaluates the t CDF through the regularized incomplete beta function
    return float(special.stdtr(r - 1, t))
