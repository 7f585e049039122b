"""Accelerated proximal gradient for the fused cumulative-logit objective.

Minimizes ``nll(alphas, theta) + penalty(theta)`` where the penalty is
``lam * ||theta||_1`` (fused lasso in the ``theta`` coordinates),
``lam * ||theta||_2^2`` (ridge variant), nothing, or the proportional odds
constraint ``psi_2 = ... = psi_{K-1} = 0``.  Intercepts are never penalized.

The likelihood is only defined where the boundaries of observed classes do
not cross; trial points outside that region evaluate to ``inf`` and are
rejected by the backtracking line search exactly like a failed
sufficient-decrease test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateData, DidNotConverge, InfeasibleStart
from .ordinal import CoefficientSet, Dataset, OrdinalLoss, empirical_cumulative_logits

PENALTY_KINDS = ("none", "l1_fused", "l2_fused", "parallel")


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "l1_fused"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {PENALTY_KINDS}")
        lam = float(self.lam)
        if not (lam >= 0 and math.isfinite(lam)):
            raise ValueError("lambda must be a finite nonnegative number")
        object.__setattr__(self, "lam", lam)

    @property
    def effective_lam(self) -> float:
        return self.lam if self.kind in ("l1_fused", "l2_fused") else 0.0


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 20000
    tol: float = 1e-8  # relative objective change
    kkt_tol: float = 1e-6  # max KKT violation required before declaring convergence
    step_floor: float = 1e-14
    step_growth: float = 1.05  # per-iteration step expansion, undone by backtracking


@dataclass(frozen=True)
class FitResult:
    coeffs: CoefficientSet
    objective: float
    iterations: int
    converged: bool
    kkt_max_violation: float
    objective_trace: tuple = field(repr=False)
    penalty: PenaltySpec = PenaltySpec("none")
    separated: bool = False

    @property
    def nll(self) -> float:
        return self.objective - penalty_value(self.coeffs.theta, self.penalty)


def soft_threshold(v, t):
    """``sign(v) * max(|v| - t, 0)``, elementwise for arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def penalty_value(theta, penalty: PenaltySpec) -> float:
    if penalty.kind == "l1_fused":
        return penalty.lam * float(np.abs(theta).sum())
    if penalty.kind == "l2_fused":
        return penalty.lam * float(theta @ theta)
    return 0.0


def null_coefficients(data: Dataset) -> CoefficientSet:
    """Intercepts at the empirical cumulative logits, all slopes zero."""
    return CoefficientSet(empirical_cumulative_logits(data), np.zeros(data.p * (data.K - 1)), data.K, data.p)


class _Problem:
    """Flat-vector view ``z = (alphas, theta)`` of one penalized fit."""

    def __init__(self, data: Dataset, penalty: PenaltySpec):
        self.loss = OrdinalLoss(data)
        self.penalty = penalty
        self.na = data.K - 1
        self.K, self.p = data.K, data.p
        free = np.ones(self.na + data.p * (data.K - 1), dtype=bool)
        if penalty.kind == "parallel":
            free[self.na + data.p:] = False
        self.free = free

    def split(self, z):
        return z[: self.na], z[self.na:]

    def smooth(self, z):
        a, t = self.split(z)
        return self.loss.value(a, t)

    def smooth_grad(self, z):
        a, t = self.split(z)
        f, ga, gt = self.loss.value_and_grad(a, t)
        if ga is None:
            return f, None
        g = np.concatenate([ga, gt])
        g[~self.free] = 0.0
        return f, g

    def pen(self, z):
        return penalty_value(z[self.na:], self.penalty)

    def prox(self, v, step):
        out = v.copy()
        kind, lam = self.penalty.kind, self.penalty.lam
        if kind == "l1_fused":
            out[self.na:] = soft_threshold(v[self.na:], lam * step)
        elif kind == "l2_fused":
            out[self.na:] = v[self.na:] / (1.0 + 2.0 * lam * step)
        out[~self.free] = 0.0
        return out

    def kkt(self, z, g):
        return _kkt_violation(z[self.na:], g[: self.na], g[self.na:], self.penalty, self.free[self.na:])

    def lipschitz_estimate(self):
        # 0.25 bounds the logistic curvature; the squared Frobenius norm of
        # the largest per-observation Jacobian row block bounds the design part.
        X = self.loss.X
        row_sq = (X * X).sum(axis=1).max() if X.size else 0.0
        km1 = self.K - 1
        return 0.25 * (km1 + row_sq * km1 * (km1 + 1) / 2.0)

    def coeffs(self, z):
        a, t = self.split(z)
        return CoefficientSet(a, t, self.K, self.p)


def _kkt_violation(theta, grad_alpha, grad_theta, penalty: PenaltySpec, free=None) -> float:
    g = np.array(grad_theta, dtype=float)
    if free is not None:
        g = np.where(free, g, 0.0)
    viol_a = float(np.max(np.abs(grad_alpha))) if len(grad_alpha) else 0.0
    if penalty.kind == "l1_fused":
        lam = penalty.lam
        nz = theta != 0
        v = np.where(nz, np.abs(g + lam * np.sign(theta)), np.maximum(np.abs(g) - lam, 0.0))
    elif penalty.kind == "l2_fused":
        v = np.abs(g + 2.0 * penalty.lam * theta)
    else:
        v = np.abs(g)
    viol_t = float(v.max()) if v.size else 0.0
    return max(viol_a, viol_t)


def fit_penalized(data: Dataset, penalty: PenaltySpec, init: CoefficientSet | None = None,
                  opts: SolverOptions | None = None) -> FitResult:
    """Minimize the penalized objective by monotone accelerated proximal gradient.

    Momentum is reset whenever a step would increase the objective or the
    extrapolated point leaves the feasible region.  Terminates when the
    relative objective change of an accepted step drops below ``opts.tol``
    and the KKT violation is at most ``opts.kkt_tol``.  Hitting ``max_iter`` or
    the step floor returns the best iterate with ``converged=False`` and a
    :class:`DidNotConverge` warning.
    """
    opts = opts or SolverOptions()
    if init is None:
        init = null_coefficients(data)
    if init.K != data.K or init.p != data.p:
        raise ValueError("init coefficients do not match the data dimensions")
    prob = _Problem(data, penalty)
    z0 = np.concatenate([init.alphas, init.theta])
    z0[~prob.free] = 0.0

    fx, gx = prob.smooth_grad(z0)
    if not np.isfinite(fx):
        raise InfeasibleStart("negative log-likelihood is infinite at the initial coefficients")

    x, Fx = z0, fx + prob.pen(z0)
    y, fy, gy = x, fx, gx
    t = 1.0
    step = 1.0 / prob.lipschitz_estimate()
    trace = [Fx]
    converged = False
    stalled = False
    it = 0

    for it in range(1, opts.max_iter + 1):
        while True:
            z = prob.prox(y - step * gy, step)
            fz = prob.smooth(z)
            d = z - y
            if np.isfinite(fz) and fz <= fy + gy @ d + (d @ d) / (2.0 * step) + 1e-15 * abs(fy):
                break
            step *= 0.5
            if step < opts.step_floor:
                stalled = True
                break
        if stalled:
            break

        Fz = fz + prob.pen(z)
        accepted = Fz <= Fx
        if accepted:
            x_prev, F_prev = x, Fx
            x, Fx = z, Fz
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x + ((t - 1.0) / t_next) * (x - x_prev)
            t = t_next
        else:
            y, t = x, 1.0
        trace.append(Fx)

        if accepted and (F_prev - Fx) <= opts.tol * max(1.0, abs(Fx)):
            fx, gx = prob.smooth_grad(x)
            if prob.kkt(x, gx) <= opts.kkt_tol:
                converged = True
                break

        fy, gy = prob.smooth_grad(y)
        if gy is None:
            y, t = x, 1.0
            fy, gy = prob.smooth_grad(y)
        step *= opts.step_growth

    fx, gx = prob.smooth_grad(x)
    kkt = prob.kkt(x, gx)
    if not converged:
        why = "step size fell below the floor" if stalled else f"max_iter={opts.max_iter} reached"
        warnings.warn(DidNotConverge(f"{why}; KKT violation {kkt:.3g}"), stacklevel=2)
    return FitResult(
        coeffs=prob.coeffs(x),
        objective=float(Fx),
        iterations=it,
        converged=converged,
        kkt_max_violation=kkt,
        objective_trace=tuple(trace),
        penalty=penalty,
    )


def kkt_check(fit: FitResult, data: Dataset, penalty: PenaltySpec | None = None) -> float:
    """Maximum violation of the optimality conditions at ``fit.coeffs``.

    For the L1 penalty a nonzero coordinate contributes ``|g_j + lam*sign(theta_j)|``
    and a zero coordinate ``max(|g_j| - lam, 0)``; intercepts contribute ``|g|``.
    """
    penalty = penalty or fit.penalty
    prob = _Problem(data, penalty)
    z = np.concatenate([fit.coeffs.alphas, fit.coeffs.theta])
    f, g = prob.smooth_grad(z)
    if g is None:
        return np.inf
    return prob.kkt(z, g)


def null_theta_gradient(data: Dataset) -> np.ndarray:
    """Theta-gradient of the NLL at the intercept-only optimum."""
    c = null_coefficients(data)
    _, _, gt = OrdinalLoss(data).value_and_grad(c.alphas, c.theta)
    return gt


def lambda_path(data: Dataset, n_values: int = 20, ratio: float = 0.01,
                opts: SolverOptions | None = None, zero_tol: float = 1e-8,
                rel_width: float = 1e-3) -> np.ndarray:
    """Descending grid from ``lam_max`` down to ``ratio * lam_max``, log-spaced.

    ``lam_max`` is the smallest penalty whose L1 fit has every theta entry
    zero (within ``zero_tol``), located by bisection over a doubling bracket
    to relative width ``rel_width``; the upper end of the final bracket is used.
    """
    if n_values < 2:
        raise ValueError("n_values must be at least 2")
    counts = data.class_counts()
    if np.any(counts == 0):
        raise DegenerateData(f"empty class(es): {[int(k) + 1 for k in np.flatnonzero(counts == 0)]}")
    lam_max = find_lambda_max(data, opts=opts, zero_tol=zero_tol, rel_width=rel_width)
    path = np.exp(np.linspace(np.log(lam_max), np.log(ratio * lam_max), n_values))
    path[0] = lam_max
    return path


def find_lambda_max(data: Dataset, opts: SolverOptions | None = None, zero_tol: float = 1e-8,
                    rel_width: float = 1e-3) -> float:
    opts = opts or SolverOptions()
    init = null_coefficients(data)
    if data.p == 0:
        return 0.0

    def is_zero(lam):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DidNotConverge)
            fit = fit_penalized(data, PenaltySpec("l1_fused", lam), init, opts)
        return float(np.max(np.abs(fit.coeffs.theta))) <= zero_tol

    # the gradient scale at the null model seeds the bracket
    start = float(np.max(np.abs(null_theta_gradient(data))))
    if start <= 0:
        start = 1e-8
    hi = start
    while not is_zero(hi):
        hi *= 2.0
    lo = hi / 2.0
    while is_zero(lo):
        hi = lo
        lo /= 2.0
        if hi < 1e-300:
            return 0.0
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if is_zero(mid):
            hi = mid
        else:
            lo = mid
    return hi
