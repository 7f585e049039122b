"""Plug-in Fisher information for the proportional odds and logistic models.

Expectations over the feature distribution are replaced by averages over the
rows of a design matrix, with the *true* class probabilities plugged in.
For the proportional odds model with boundaries ``p_k(x) = F(alpha_k + beta'x)``
and class probabilities ``pi_k``::

    I_aa[k, k]     = E[(p_k(1-p_k))^2 (1/pi_k + 1/pi_{k+1})]
    I_aa[k, k-1]   = -E[p_k(1-p_k) p_{k-1}(1-p_{k-1}) / pi_k]
    I_ba[k]        = E[x (pi_k + pi_{k+1}) p_k(1-p_k)]
    I_bb           = sum_k E[x x' (pi_k + pi_{k+1}) p_k(1-p_k)]

The eigenvalue condition compares the rare-class probability bound with
``lambda_min(I_bb - 2 I_ba1 I_ba1' / I_a1a1) / (3 M^2 (M + 2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleProbabilities
from .ordinal import logistic_cdf


@dataclass(frozen=True)
class FisherBlocks:
    I_alpha_alpha: np.ndarray  # (K-1) x (K-1), tridiagonal
    I_beta_alpha: np.ndarray  # (K-1) x p, row k pairs with alpha_k
    I_beta_beta: np.ndarray  # p x p
    n_mc: int

    @property
    def K(self) -> int:
        return self.I_alpha_alpha.shape[0] + 1

    def assemble(self) -> np.ndarray:
        """Full ``(K-1+p)`` square information matrix, intercepts first."""
        return np.block([
            [self.I_alpha_alpha, self.I_beta_alpha],
            [self.I_beta_alpha.T, self.I_beta_beta],
        ])

    def eigen_condition_matrix(self) -> np.ndarray:
        """``I_bb - 2 I_ba1 I_ba1' / I_a1a1``."""
        v = self.I_beta_alpha[0]
        return self.I_beta_beta - 2.0 * np.outer(v, v) / self.I_alpha_alpha[0, 0]


@dataclass(frozen=True)
class ConditionReport:
    min_eigen: float
    M: float
    Delta: float | None
    pi_rare: float
    bound_rhs: float
    delta_bound: float | None
    eigen_condition_satisfied: bool
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "min_eigen": self.min_eigen,
            "M": self.M,
            "Delta": self.Delta,
            "pi_rare": self.pi_rare,
            "bound_rhs": self.bound_rhs,
            "delta_bound": self.delta_bound,
            "eigen_condition_satisfied": self.eigen_condition_satisfied,
            "satisfied": self.satisfied,
        }


def _boundary_terms(X, alphas, beta):
    X = np.asarray(X, dtype=float)
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    s = X @ beta
    eta = alphas[None, :] + s[:, None]
    p = logistic_cdf(eta)
    w = logistic_cdf(eta) * logistic_cdf(-eta)  # p_k (1 - p_k) without cancellation
    n = X.shape[0]
    lower = np.hstack([np.full((n, 1), -np.inf), eta])
    upper = np.hstack([eta, np.full((n, 1), np.inf)])
    pi = np.where(lower > 0,
                  logistic_cdf(-lower) - logistic_cdf(-upper),
                  logistic_cdf(upper) - logistic_cdf(lower))
    return X, p, w, pi


def fisher_blocks_plugin(X, alphas, beta, rare_limit: bool = False) -> FisherBlocks:
    """Plug-in information blocks of the proportional odds model at ``(alphas, beta)``.

    ``rare_limit=True`` evaluates the limit as the last intercept goes to
    infinity: ``pi_K`` is set to 0, ``pi_{K-1} = 1 - p_{K-2}`` and the last
    boundary's variance ``p_{K-1}(1-p_{K-1})`` vanishes.  The last entry of
    ``alphas`` is ignored in that mode.
    """
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    if rare_limit:
        X, p, w, pi = _boundary_terms(X, alphas[:-1], beta)
        n = X.shape[0]
        p = np.hstack([p, np.ones((n, 1))])
        w = np.hstack([w, np.zeros((n, 1))])
        pi = np.hstack([pi, np.zeros((n, 1))])
    else:
        if np.any(np.diff(alphas) <= 0):
            raise ValueError("intercepts must be strictly increasing")
        X, p, w, pi = _boundary_terms(X, alphas, beta)
        if np.any(pi <= 0):
            bad = np.flatnonzero(np.any(pi <= 0, axis=1))
            raise InfeasibleProbabilities(
                f"class probability underflows to 0 at {bad.size} row(s)", rows=bad
            )
    n, km1 = X.shape[0], alphas.shape[0]

    with np.errstate(divide="ignore", invalid="ignore"):
        # w^2 / pi_1 = p_1 (1-p_1)^2 and w^2 / pi_K = p_{K-1}^2 (1-p_{K-1}) exactly
        ratio_lo = w * w / pi[:, :-1]
        ratio_lo[:, 0] = w[:, 0] * (1.0 - p[:, 0])
        ratio_hi = w * w / pi[:, 1:]
        ratio_hi[:, -1] = w[:, -1] * p[:, -1]
        ratio_lo = np.where(w == 0, 0.0, ratio_lo)
        ratio_hi = np.where(w == 0, 0.0, ratio_hi)
        Mk = (ratio_lo + ratio_hi).mean(axis=0)
        off = w[:, 1:] * w[:, :-1] / pi[:, 1:-1]
        off = np.where(w[:, 1:] * w[:, :-1] == 0, 0.0, off)
        Mt = off.mean(axis=0)

    I_aa = np.diag(Mk)
    for k in range(1, km1):
        I_aa[k, k - 1] = I_aa[k - 1, k] = -Mt[k - 1]

    weights = (pi[:, :-1] + pi[:, 1:]) * w  # n x (K-1)
    I_ba = weights.T @ X / n
    I_bb = (X * weights.sum(axis=1)[:, None]).T @ X / n
    I_bb = 0.5 * (I_bb + I_bb.T)
    return FisherBlocks(I_aa, I_ba, I_bb, n)


def beta_block_from_j_terms(X, alphas, beta) -> np.ndarray:
    """``I_bb`` as ``sum_k (J_k^{xx'} + J~_k^{xx'})`` before collapsing adjacent terms."""
    X, p, w, pi = _boundary_terms(X, alphas, beta)
    n = X.shape[0]
    K = pi.shape[1]
    total = np.zeros((X.shape[1], X.shape[1]))
    for k in range(K):
        # J_k uses boundary k (zero for the last class), J~_k boundary k-1 (zero for the first)
        j = pi[:, k] * w[:, k] if k < K - 1 else np.zeros(n)
        jt = pi[:, k] * w[:, k - 1] if k > 0 else np.zeros(n)
        total += (X * j[:, None]).T @ X / n
        total += (X * jt[:, None]).T @ X / n
    return total


def logistic_fisher(X, alpha1, beta) -> np.ndarray:
    """``E[pi(1 - pi) x~ x~']`` with ``x~ = (1, x)`` for a binary logistic model."""
    X = np.asarray(X, dtype=float)
    eta = alpha1 + X @ np.asarray(beta, dtype=float).reshape(-1)
    w = logistic_cdf(eta) * logistic_cdf(-eta)
    Xt = np.hstack([np.ones((X.shape[0], 1)), X])
    return (Xt * w[:, None]).T @ Xt / X.shape[0]


def min_eigenvalue(A, sym_tol: float = 1e-9) -> float:
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def theorem3_condition(blocks: FisherBlocks, M: float, pi_rare: float,
                       Delta: float | None = None) -> ConditionReport:
    """Check ``pi_rare <= lambda_min / (3 M^2 (M + 2))`` and, given ``Delta``, the balance bound.

    ``satisfied`` requires ``pi_rare <= min(0.5 (0.5 - Delta)(0.5 + Delta), bound_rhs)``;
    without ``Delta`` only the eigenvalue bound is applied.
    """
    if not np.allclose(blocks.I_beta_beta, blocks.I_beta_beta.T, atol=1e-9, rtol=0):
        raise ValueError("I_beta_beta is not symmetric")
    lam = min_eigenvalue(blocks.eigen_condition_matrix())
    rhs = lam / (3.0 * M * M * (M + 2.0))
    eig_ok = bool(pi_rare <= rhs)
    if Delta is None:
        delta_bound = None
        ok = eig_ok
    else:
        if not (0 < Delta < 0.5):
            raise ValueError("Delta must lie in (0, 1/2)")
        delta_bound = 0.5 * (0.5 - Delta) * (0.5 + Delta)
        ok = bool(pi_rare <= min(delta_bound, rhs))
    return ConditionReport(lam, float(M), Delta, float(pi_rare), rhs, delta_bound, eig_ok, ok)


def box_norm_bound(p: int, half_width: float) -> float:
    """``sup ||x||_2`` over ``[-c, c]^p``."""
    return half_width * math.sqrt(p)


def sup_rare_probability(alphas, beta, half_width: float) -> float:
    """``sup pi_K(x)`` over ``[-c, c]^p``; attained where ``beta'x`` is smallest."""
    beta = np.asarray(beta, dtype=float)
    smin = -half_width * float(np.abs(beta).sum())
    return float(logistic_cdf(-(float(np.asarray(alphas)[-1]) + smin)))


def last_intercept_for_rare(pi_rare: float, beta, half_width: float) -> float:
    """Last intercept making ``sup pi_K`` over ``[-c, c]^p`` equal ``pi_rare`` (closed form)."""
    beta = np.asarray(beta, dtype=float)
    return math.log((1.0 - pi_rare) / pi_rare) + half_width * float(np.abs(beta).sum())


def balance_delta(alphas, beta, half_width: float, grid: int = 20001) -> float:
    """``sup |pi_k(x) - 1/2|`` over the box for k in {1, 2}, scanning ``s = beta'x``."""
    beta = np.asarray(beta, dtype=float)
    r = half_width * float(np.abs(beta).sum())
    s = np.linspace(-r, r, grid)
    alphas = np.asarray(alphas, dtype=float)
    p1 = logistic_cdf(alphas[0] + s)
    p2 = logistic_cdf(alphas[1] + s) if alphas.shape[0] > 1 else np.ones_like(s)
    return float(max(np.max(np.abs(p1 - 0.5)), np.max(np.abs(p2 - p1 - 0.5))))


def gen_truncated_gaussian_design(n: int, p: int, rho: float, seed, batch: int | None = None) -> np.ndarray:
    """Equicorrelated standard Gaussian rows truncated to ``[-3, 3]`` by row rejection.

    Each row is ``sqrt(rho) z0 + sqrt(1 - rho) z_j``; rows with any entry
    outside ``[-3, 3]`` are discarded and redrawn.
    """
    if not (0 <= rho < 1):
        raise ValueError("rho must lie in [0, 1)")
    if p < 1:
        raise ValueError("p must be at least 1")
    rng = np.random.default_rng(seed)
    batch = batch or max(1024, int(n * 1.1))
    out = np.empty((n, p))
    filled = 0
    while filled < n:
        z0 = rng.standard_normal((batch, 1))
        z = rng.standard_normal((batch, p))
        rows = math.sqrt(rho) * z0 + math.sqrt(1.0 - rho) * z
        rows = rows[np.all(np.abs(rows) <= 3.0, axis=1)]
        take = min(rows.shape[0], n - filled)
        out[filled:filled + take] = rows[:take]
        filled += take
    return out
