"""Model fits: rare-class logistic regression, proportional odds, PRESTO and its CV tuning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .evaluation import brier_score
from .exceptions import (
    DegenerateData,
    DidNotConverge,
    FoldAssignmentError,
    NoValidLambda,
    Separation,
)
from .ordinal import CoefficientSet, Dataset, linear_predictors, probability_table
from .solver import (
    FitResult,
    PenaltySpec,
    SolverOptions,
    fit_penalized,
    lambda_path,
    null_coefficients,
)

SEPARATION_NORM = 1e6
MAX_FOLD_DRAWS = 100


def _require_all_classes(data: Dataset):
    counts = data.class_counts()
    if np.any(counts == 0):
        raise DegenerateData(f"empty class(es): {[int(k) + 1 for k in np.flatnonzero(counts == 0)]}")


@dataclass(frozen=True)
class Standardizer:
    """Column centering/scaling applied before fitting and undone afterwards."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_data(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, data: Dataset) -> Dataset:
        return Dataset((data.X - self.mean) / self.scale, data.y, data.K)

    def back_transform(self, coeffs: CoefficientSet) -> CoefficientSet:
        """Coefficients on the original feature scale with identical linear predictors."""
        betas = coeffs.betas / self.scale[:, None]
        alphas = coeffs.alphas - self.mean @ betas
        return CoefficientSet.from_betas(alphas, betas)


def _fit(data, penalty, init=None, opts=None, standardize=False) -> FitResult:
    if not standardize:
        return fit_penalized(data, penalty, init, opts)
    std = Standardizer.from_data(data.X)
    fit = fit_penalized(std.transform(data), penalty, None, opts)
    return replace(fit, coeffs=std.back_transform(fit.coeffs))


def _linearly_separable(X, labels) -> bool:
    # feasibility of s_i (w'x_i + b) >= 1 for s_i = +-1
    s = np.where(labels == 2, 1.0, -1.0)
    A = -s[:, None] * np.hstack([X, np.ones((X.shape[0], 1))])
    res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=-np.ones(X.shape[0]),
                  bounds=[(None, None)] * A.shape[1], method="highs")
    return res.status == 0


def fit_logistic_rare(data: Dataset, opts: SolverOptions | None = None,
                      standardize: bool = False) -> FitResult:
    """Unpenalized logistic regression of ``y == K`` against ``y < K``.

    The returned model is a K=2 :class:`CoefficientSet`; its second class is
    the rare class.  Separable data (coefficients beyond 1e6, or a strictly
    separating hyperplane found by a feasibility LP) is flagged with ``separated=True`` and a
    :class:`Separation` warning.
    """
    binary = data.binarize_rare()
    _require_all_classes(binary)
    fit = _fit(binary, PenaltySpec("none"), opts=opts, standardize=standardize)
    coef = np.concatenate([fit.coeffs.alphas, fit.coeffs.theta])
    separated = bool(np.max(np.abs(coef)) > SEPARATION_NORM)
    # the gradient decays exponentially under separation, so a "converged" fit proves nothing
    if not separated and data.p > 0:
        separated = _linearly_separable(binary.X, binary.y)
    if separated:
        warnings.warn(Separation("rare-class labels are separable; MLE does not exist"), stacklevel=2)
        fit = replace(fit, separated=True)
    return fit


def fit_proportional_odds(data: Dataset, opts: SolverOptions | None = None,
                          standardize: bool = False) -> FitResult:
    """Maximum likelihood under a single slope vector shared by all boundaries."""
    _require_all_classes(data)
    return _fit(data, PenaltySpec("parallel"), opts=opts, standardize=standardize)


def fit_presto(data: Dataset, lam: float, kind: str = "l1_fused", init: CoefficientSet | None = None,
               opts: SolverOptions | None = None, standardize: bool = False) -> FitResult:
    """Fused-difference penalized fit at a fixed penalty level.

    ``kind="l1_fused"`` penalizes ``lam * (sum|beta_1| + sum|psi_k|)``;
    ``kind="l2_fused"`` uses the squared version.  ``lam=0`` gives the
    unpenalized nonparallel MLE.
    """
    if kind not in ("l1_fused", "l2_fused"):
        raise ValueError("kind must be 'l1_fused' or 'l2_fused'")
    _require_all_classes(data)
    if standardize and init is not None:
        raise ValueError("init is not supported together with standardize")
    return _fit(data, PenaltySpec(kind, lam), init=init, opts=opts, standardize=standardize)


@dataclass(frozen=True)
class CvReport:
    lambdas: np.ndarray
    mean_oof_brier: np.ndarray  # nan where no fold produced a valid score
    chosen_index: int
    folds: int
    fold_assignments: np.ndarray = field(repr=False)
    fold_brier: np.ndarray = field(repr=False)  # n_lambdas x folds, nan for skipped cells
    kind: str = "l1_fused"

    @property
    def chosen_lambda(self) -> float:
        return float(self.lambdas[self.chosen_index])

    @property
    def valid_folds(self) -> np.ndarray:
        return np.sum(np.isfinite(self.fold_brier), axis=1)


def draw_fold_assignments(data: Dataset, folds: int, rng) -> np.ndarray:
    """Random balanced fold labels, redrawn until every training split sees all classes."""
    n = data.n
    for _ in range(MAX_FOLD_DRAWS):
        assign = rng.permutation(np.arange(n) % folds)
        if _training_splits_complete(data, assign, folds):
            return assign
    raise FoldAssignmentError(
        f"could not find a {folds}-fold split with every class in every training split "
        f"after {MAX_FOLD_DRAWS} draws"
    )


def _training_splits_complete(data, assign, folds):
    for f in range(folds):
        train_y = data.y[assign != f]
        if np.unique(train_y).size < data.K:
            return False
    return True


def _select_index(scores: np.ndarray, lambdas: np.ndarray) -> int:
    valid = np.isfinite(scores)
    if not valid.any():
        raise NoValidLambda("every lambda produced infeasible held-out probabilities in all folds")
    best = np.min(scores[valid])
    ties = np.flatnonzero(valid & (scores == best))
    # larger lambda wins ties
    return int(ties[np.argmax(lambdas[ties])])


def cv_path_scores(train: Dataset, test: Dataset, lambdas, kind: str = "l1_fused",
                   opts: SolverOptions | None = None) -> np.ndarray:
    """Held-out Brier score for each lambda, warm-starting down the path.

    A lambda whose fit assigns a non-positive probability to any held-out
    class gets ``nan``.
    """
    order = np.argsort(-np.asarray(lambdas), kind="stable")
    scores = np.full(len(lambdas), np.nan)
    init = null_coefficients(train)
    for j in order:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DidNotConverge)
            fit = fit_penalized(train, PenaltySpec(kind, lambdas[j]), init, opts)
        init = fit.coeffs
        eta = linear_predictors(fit.coeffs, test.X)
        if eta.shape[1] > 1 and np.any(eta[:, 1:] <= eta[:, :-1]):
            continue
        scores[j] = brier_score(probability_table(fit.coeffs, test.X, check=False), test.y)
    return scores


def cross_validate_presto(data: Dataset, folds: int = 5, seed=0, kind: str = "l1_fused",
                          n_lambdas: int = 20, opts: SolverOptions | None = None,
                          fold_assignments=None, lambdas=None, standardize: bool = False):
    """Choose lambda by K-fold out-of-fold Brier score and refit on all of ``data``.

    The candidate grid comes from :func:`lambda_path` on the full data (the
    same grid is used for the ridge variant).  Folds are drawn from ``seed``
    unless ``fold_assignments`` (one fold index per row) is given.  Returns
    ``(CvReport, FitResult)``.  With ``standardize`` the whole procedure runs on
    centered, unit-variance columns and the final coefficients are mapped back.
    """
    _require_all_classes(data)
    if standardize:
        std = Standardizer.from_data(data.X)
        report, fit = cross_validate_presto(std.transform(data), folds, seed, kind, n_lambdas, opts,
                                            fold_assignments, lambdas)
        return report, replace(fit, coeffs=std.back_transform(fit.coeffs))
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if lambdas is None:
        lambdas = lambda_path(data, n_lambdas, opts=opts)
    lambdas = np.asarray(lambdas, dtype=float)
    if fold_assignments is None:
        assign = draw_fold_assignments(data, folds, np.random.default_rng(seed))
    else:
        assign = np.asarray(fold_assignments, dtype=int)
        if assign.shape != (data.n,) or assign.min() < 0 or assign.max() >= folds:
            raise ValueError("fold_assignments must hold one fold index in [0, folds) per row")
        if not _training_splits_complete(data, assign, folds):
            raise FoldAssignmentError("some training split is missing a class")

    fold_brier = np.full((len(lambdas), folds), np.nan)
    for f in range(folds):
        held = assign == f
        fold_brier[:, f] = cv_path_scores(data.subset(~held), data.subset(held), lambdas, kind, opts)

    counts = np.sum(np.isfinite(fold_brier), axis=1)
    sums = np.nansum(fold_brier, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    chosen = _select_index(mean, lambdas)
    report = CvReport(
        lambdas=lambdas,
        mean_oof_brier=mean,
        chosen_index=chosen,
        folds=folds,
        fold_assignments=assign,
        fold_brier=fold_brier,
        kind=kind,
    )
    fit = fit_presto(data, lambdas[chosen], kind=kind, opts=opts)
    return report, fit
