"""Cumulative-logit likelihood, probabilities and gradients.

The nonparallel model has one intercept and one slope vector per cumulative
boundary::

    P(y <= k | x) = F(alpha_k + beta_k' x),   k = 1, ..., K-1

with F the logistic CDF.  Slopes are stored in the fused parameterization
``theta = (beta_1, psi_2, ..., psi_{K-1})`` with ``psi_k = beta_k - beta_{k-1}``,
so the fused-difference penalty becomes a plain L1 norm on ``theta``.  When
every ``psi_k`` is zero the model is the proportional odds model.

Labels are 1-based (``1..K``) at every public entry point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateData, InfeasibleProbabilities, NotDifferentiable

# floor applied to strictly positive probabilities before taking logs
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and ordinal labels ``y`` in ``1..K``."""

    X: np.ndarray
    y: np.ndarray
    K: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if y.ndim != 1:
            raise ValueError("y must be 1-d")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        K = int(self.K)
        if K < 2:
            raise ValueError("K must be at least 2")
        if y.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
        if y.min() < 1 or y.max() > K:
            raise ValueError(f"labels must lie in 1..{K}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y - 1, minlength=self.K)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.K)

    def binarize_rare(self) -> "Dataset":
        """Two-class dataset for ``y == K`` (label 2) versus ``y < K`` (label 1)."""
        return Dataset(self.X, np.where(self.y == self.K, 2, 1), 2)


@dataclass(frozen=True)
class CoefficientSet:
    """Intercepts and fused slopes of a K-class cumulative-logit model."""

    alphas: np.ndarray
    theta: np.ndarray
    K: int
    p: int

    def __post_init__(self):
        K, p = int(self.K), int(self.p)
        alphas = np.array(self.alphas, dtype=float).reshape(-1)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if K < 2 or p < 0:
            raise ValueError("need K >= 2 and p >= 0")
        if alphas.shape != (K - 1,):
            raise ValueError(f"expected {K - 1} intercepts, got {alphas.shape[0]}")
        if theta.shape != (p * (K - 1),):
            raise ValueError(f"expected theta of length {p * (K - 1)}, got {theta.shape[0]}")
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(theta))):
            raise ValueError("coefficients must be finite")
        alphas.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "p", p)

    @classmethod
    def zeros(cls, K: int, p: int) -> "CoefficientSet":
        return cls(np.zeros(K - 1), np.zeros(p * (K - 1)), K, p)

    @classmethod
    def from_betas(cls, alphas, betas) -> "CoefficientSet":
        """Build from intercepts and a p x (K-1) matrix of per-boundary slopes."""
        betas = np.asarray(betas, dtype=float)
        if betas.ndim == 1:
            betas = betas.reshape(-1, 1)
        p, km1 = betas.shape
        return cls(alphas, beta_to_theta(betas), km1 + 1, p)

    @classmethod
    def proportional_odds(cls, alphas, beta) -> "CoefficientSet":
        alphas = np.asarray(alphas, dtype=float).reshape(-1)
        beta = np.asarray(beta, dtype=float).reshape(-1)
        K = alphas.shape[0] + 1
        theta = np.concatenate([beta, np.zeros(beta.shape[0] * (K - 2))])
        return cls(alphas, theta, K, beta.shape[0])

    @property
    def betas(self) -> np.ndarray:
        return theta_to_beta(self)

    @property
    def fused_differences(self) -> np.ndarray:
        """``psi_2..psi_{K-1}`` as a p x (K-2) matrix."""
        return self.theta.reshape(self.K - 1, self.p).T[:, 1:]


def logistic_cdf(t):
    """Logistic CDF ``exp(t) / (1 + exp(t))``, branch-stable for either sign.

    Accepts scalars or arrays; ``-inf`` maps to 0 and ``+inf`` to 1.
    """
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    out = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def theta_to_beta(coeffs: CoefficientSet) -> np.ndarray:
    """Per-boundary slopes: column k is ``beta_1 + psi_2 + ... + psi_k``."""
    blocks = coeffs.theta.reshape(coeffs.K - 1, coeffs.p)
    return np.cumsum(blocks, axis=0).T


def beta_to_theta(betas) -> np.ndarray:
    """Inverse of :func:`theta_to_beta`; returns the flat fused vector."""
    betas = np.asarray(betas, dtype=float)
    blocks = np.diff(betas.T, axis=0, prepend=0.0)
    return blocks.reshape(-1)


def linear_predictors(coeffs: CoefficientSet, X) -> np.ndarray:
    """n x (K-1) matrix of ``alpha_k + beta_k' x_i``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != coeffs.p:
        raise ValueError(f"expected {coeffs.p} features, got {X.shape[1]}")
    # einsum keeps each row's sum independent of the other rows, so a single
    # point and the same point inside a batch get bit-identical predictors
    return coeffs.alphas + np.einsum("ij,jk->ik", X, theta_to_beta(coeffs))


def _interval_probability(lower, upper):
    # F(upper) - F(lower); evaluated in the upper tail when both are positive
    # to avoid cancellation between two numbers close to 1.
    flip = lower > 0
    direct = logistic_cdf(upper) - logistic_cdf(lower)
    mirrored = logistic_cdf(-lower) - logistic_cdf(-upper)
    return np.where(flip, mirrored, direct)


def _probabilities_from_eta(eta: np.ndarray) -> np.ndarray:
    n = eta.shape[0]
    lower = np.hstack([np.full((n, 1), -np.inf), eta])
    upper = np.hstack([eta, np.full((n, 1), np.inf)])
    return _interval_probability(lower, upper)


def _crossing_rows(eta: np.ndarray) -> np.ndarray:
    if eta.shape[1] < 2:
        return np.zeros(eta.shape[0], dtype=bool)
    return np.any(eta[:, 1:] <= eta[:, :-1], axis=1)


def probability_table(coeffs: CoefficientSet, X, check: bool = True) -> np.ndarray:
    """n x K class probabilities for every row of ``X``.

    With ``check`` set, raises :class:`InfeasibleProbabilities` listing the rows
    where adjacent boundaries cross (some class probability <= 0).  Without it
    the raw, possibly negative, differences are returned.
    """
    eta = linear_predictors(coeffs, X)
    if check:
        bad = np.flatnonzero(_crossing_rows(eta))
        if bad.size:
            raise InfeasibleProbabilities(
                f"decision boundaries cross at {bad.size} row(s), first row {bad[0]}",
                rows=bad,
            )
    return _probabilities_from_eta(eta)


def class_probabilities(coeffs: CoefficientSet, x) -> np.ndarray:
    """Length-K probability vector at a single feature vector ``x``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if coeffs.p == 0:
        x = np.zeros((1, 0))
    return probability_table(coeffs, x)[0]


def rare_class_probability(coeffs: CoefficientSet, X) -> np.ndarray:
    """``P(y = K | x)`` for each row; always in (0, 1) since it involves one boundary."""
    eta = linear_predictors(coeffs, X)
    return logistic_cdf(-eta[:, -1])


class OrdinalLoss:
    """Averaged negative log-likelihood of a fixed dataset, with gradient.

    Precomputes label bookkeeping so repeated evaluations inside the solver
    only pay for the matrix products.  Works on raw ``(alphas, theta)``
    arrays; the public functions below wrap it for :class:`CoefficientSet`.
    """

    def __init__(self, data: Dataset):
        self.data = data
        self.X = np.ascontiguousarray(data.X)
        self.n, self.p, self.K = data.n, data.p, data.K
        idx = data.y - 1
        self.rows = np.arange(self.n)
        self.has_upper = idx < self.K - 1
        self.has_lower = idx > 0
        self.upper_col = np.minimum(idx, self.K - 2)
        self.lower_col = np.maximum(idx - 1, 0)
        self.first = idx == 0
        self.last = idx == self.K - 1

    def _eta(self, alphas, theta):
        betas = np.cumsum(theta.reshape(self.K - 1, self.p), axis=0).T
        return alphas + self.X @ betas

    def _bounds(self, eta):
        upper = np.where(self.has_upper, eta[self.rows, self.upper_col], np.inf)
        lower = np.where(self.has_lower, eta[self.rows, self.lower_col], -np.inf)
        return lower, upper

    def _log_prob(self, lower, upper):
        # -logaddexp(0, -u) = log F(u); -logaddexp(0, l) = log F(-l)
        with np.errstate(divide="ignore", invalid="ignore"):
            pi = _interval_probability(lower, upper)
            mid = np.log(np.maximum(pi, PROB_FLOOR))
        logp = np.where(self.first, -np.logaddexp(0.0, -upper), mid)
        logp = np.where(self.last, -np.logaddexp(0.0, lower), logp)
        return logp, pi

    def value(self, alphas, theta) -> float:
        eta = self._eta(alphas, theta)
        lower, upper = self._bounds(eta)
        if np.any(upper <= lower):
            return np.inf
        logp, _ = self._log_prob(lower, upper)
        return float(-logp.mean())

    def value_and_grad(self, alphas, theta):
        """Returns ``(nll, grad_alpha, grad_theta)``; the gradients are None when nll is inf."""
        eta = self._eta(alphas, theta)
        lower, upper = self._bounds(eta)
        if np.any(upper <= lower):
            return np.inf, None, None
        logp, pi = self._log_prob(lower, upper)
        pi = np.maximum(pi, PROB_FLOOR)
        Fu, Fl = logistic_cdf(upper), logistic_cdf(lower)
        # d(-log pi)/d upper and d(-log pi)/d lower
        with np.errstate(invalid="ignore"):
            d_up = -Fu * logistic_cdf(-upper) / pi
            d_lo = Fl * logistic_cdf(-lower) / pi
        d_up = np.where(self.first, -logistic_cdf(-upper), d_up)
        d_lo = np.where(self.last, Fl, d_lo)
        d_up = np.where(self.has_upper, d_up, 0.0)
        d_lo = np.where(self.has_lower, d_lo, 0.0)

        # each statement touches every row once, so plain fancy indexing is safe
        G = np.zeros((self.n, self.K - 1))
        G[self.rows, self.upper_col] = d_up
        G[self.rows, self.lower_col] += d_lo
        G /= self.n
        grad_alpha = G.sum(axis=0)
        grad_beta = self.X.T @ G
        # chain rule through the cumulative sum: psi_k affects beta_k..beta_{K-1}
        grad_psi = np.cumsum(grad_beta[:, ::-1], axis=1)[:, ::-1]
        return float(-logp.mean()), grad_alpha, grad_psi.T.reshape(-1)


def _check_dims(coeffs: CoefficientSet, data: Dataset):
    if coeffs.K != data.K or coeffs.p != data.p:
        raise ValueError(
            f"coefficients are for K={coeffs.K}, p={coeffs.p} but data has K={data.K}, p={data.p}"
        )


def negative_log_likelihood(coeffs: CoefficientSet, data: Dataset) -> float:
    """Mean of ``-log pi_{y_i}(x_i)``; ``inf`` if any observed class has probability <= 0."""
    _check_dims(coeffs, data)
    return OrdinalLoss(data).value(coeffs.alphas, coeffs.theta)


def nll_gradient(coeffs: CoefficientSet, data: Dataset):
    """Analytic gradient of :func:`negative_log_likelihood` w.r.t. ``(alphas, theta)``."""
    _check_dims(coeffs, data)
    value, ga, gt = OrdinalLoss(data).value_and_grad(coeffs.alphas, coeffs.theta)
    if not np.isfinite(value):
        raise NotDifferentiable("negative log-likelihood is infinite at these coefficients")
    return ga, gt


def empirical_cumulative_logits(data: Dataset) -> np.ndarray:
    """``logit(P_hat(y <= k))`` for k = 1..K-1: the intercept-only MLE."""
    counts = data.class_counts()
    if np.any(counts == 0):
        raise DegenerateData(f"empty class(es): {[int(k) + 1 for k in np.flatnonzero(counts == 0)]}")
    cum = np.cumsum(counts)[:-1]
    return np.log(cum) - np.log(data.n - cum)
