"""
Model Selection for GPDeriv
Leave-one-out cross-validation through the linear-smoother identity, used to pick
the Matérn smoothness, the kernel family and the number of spline knots
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.config import LOO_LEVERAGE_TOLERANCE, default_nu_grid
from src.errors import FitError, SelectionError
from src.gp_core import Dataset, FittedGP, NoiseModel, fit
from src.hyperparam import mmle_sigma2, optimize_evidence
from src.kernels import KernelConfig, gram


logger = logging.getLogger(__name__)


def loo_residuals(model) -> np.ndarray:
    """
    Leave-one-out residuals (y_i - yhat_i) / (1 - H_ii)

    Args:
        model: Any fitted linear smoother exposing data and smoother_matrix()

    Returns:
        Vector of LOO residuals
    """
    H = model.smoother_matrix()
    y = model.data.y
    leverage = np.diag(H)
    if np.any(leverage >= 1.0 - LOO_LEVERAGE_TOLERANCE):
        worst = int(np.argmax(leverage))
        raise SelectionError(
            f"leverage H[{worst},{worst}] = {leverage[worst]:.15f} is too close to 1 "
            "for the leave-one-out identity"
        )
    return (y - H @ y) / (1.0 - leverage)


def loocv_score(model) -> float:
    """Mean squared leave-one-out residual of a fitted GP or B-spline model."""
    return float(np.mean(loo_residuals(model) ** 2))


@dataclass(frozen=True)
class LambdaPolicy:
    """
    How lambda (and sigma^2) are chosen for each candidate

    Without fixed_lambda the evidence is maximized over lambda_grid (default grid
    when None). fixed_sigma2 defaults to the MMLE at the fixed lambda.
    """

    lambda_grid: Optional[np.ndarray] = None
    fixed_lambda: Optional[float] = None
    fixed_sigma2: Optional[float] = None
    noise_model: NoiseModel = NoiseModel.HOMOSCEDASTIC

    def tune(self, data: Dataset, kernel, gram_matrix=None):
        if self.fixed_lambda is None:
            lam, sigma2 = optimize_evidence(data, kernel, self.lambda_grid,
                                            self.noise_model, gram_matrix)
            return lam, (sigma2 if self.fixed_sigma2 is None else self.fixed_sigma2)
        if self.fixed_sigma2 is not None:
            return self.fixed_lambda, self.fixed_sigma2
        if NoiseModel(self.noise_model) is NoiseModel.HETEROSCEDASTIC:
            _, sigma2 = optimize_evidence(data, kernel, [self.fixed_lambda],
                                          self.noise_model, gram_matrix)
            return self.fixed_lambda, sigma2
        sigma2 = mmle_sigma2(data, kernel, self.fixed_lambda, gram_matrix)
        return self.fixed_lambda, max(sigma2, np.finfo(float).tiny)

    def fit(self, data: Dataset, kernel) -> FittedGP:
        K = gram(kernel, data.x)
        lam, sigma2 = self.tune(data, kernel, K)
        return fit(data, kernel, lam, sigma2, self.noise_model, gram_matrix=K)


@dataclass(frozen=True)
class SelectionResult:
    """Winning candidate with its tuned fit and the score table of all candidates."""

    kernel: KernelConfig
    model: Optional[FittedGP]
    score: float
    scores: pd.DataFrame


def pick_best(results: Sequence[SelectionResult]) -> SelectionResult:
    """Lowest score wins; ties keep the earliest result."""
    best = None
    for result in results:
        if best is None or result.score < best.score:
            best = result
    if best is None or not np.isfinite(best.score):
        raise SelectionError("no candidate produced a finite LOO score")
    table = pd.concat([r.scores for r in results], ignore_index=True)
    return SelectionResult(best.kernel, best.model, best.score, table)


def rank_candidates(data: Dataset, candidates: Sequence, lambda_policy: Optional[LambdaPolicy] = None
                    ) -> SelectionResult:
    """
    Tune each candidate kernel, score it by LOO CV and keep the best

    Candidates that fail to fit or score are logged and given an infinite score.
    Ties are broken by candidate order.
    """
    if len(candidates) == 0:
        raise ValueError("need at least one candidate kernel")
    policy = LambdaPolicy() if lambda_policy is None else lambda_policy

    results = []
    for kernel in candidates:
        label = getattr(kernel, 'label', repr(kernel))
        try:
            model = policy.fit(data, kernel)
            score = loocv_score(model)
        except (FitError, SelectionError, ValueError) as exc:
            logger.warning("Candidate %s failed: %s", label, exc)
            model, score = None, np.inf
        logger.debug("Candidate %s: LOO score %.6e", label, score)
        row = pd.DataFrame([{
            'kernel': label,
            'lambda': np.nan if model is None else model.lam,
            'sigma2': np.nan if model is None else model.sigma2,
            'loo_score': score,
        }])
        results.append(SelectionResult(kernel, model, score, row))

    return pick_best(results)


def select_nu(data: Dataset, nu_grid=None, lambda_policy: Optional[LambdaPolicy] = None
              ) -> KernelConfig:
    """Matérn smoothness minimizing the LOO score; ties go to the smaller nu."""
    return rank_nu(data, nu_grid, lambda_policy).kernel


def rank_nu(data: Dataset, nu_grid=None, lambda_policy: Optional[LambdaPolicy] = None
            ) -> SelectionResult:
    grid = default_nu_grid() if nu_grid is None else np.asarray(nu_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("nu grid must be non-empty")
    candidates = [KernelConfig.matern(nu) for nu in np.unique(grid)]
    return rank_candidates(data, candidates, lambda_policy)


def select_kernel(data: Dataset, candidates: Sequence,
                  lambda_policy: Optional[LambdaPolicy] = None) -> KernelConfig:
    """Kernel minimizing the LOO score; ties go to the earlier candidate."""
    return rank_candidates(data, candidates, lambda_policy).kernel
