"""
Hyperparameter Tuning for GPDeriv
Closed-form MMLE of sigma^2, log marginal likelihood, evidence grid search over
lambda and a Metropolis-Hastings sampler for the fully Bayesian variant
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize, stats

from src.config import (
    LAMBDA_PRIOR_RATE,
    LAMBDA_PRIOR_SHAPE,
    MH_BURN_IN,
    MH_SAMPLES,
    MH_STEP,
    SIGMA2_PRIOR_RATE,
    SIGMA2_PRIOR_SHAPE,
    default_lambda_grid,
)
from src.errors import FitError
from src.gp_core import Dataset, NoiseModel, fit, noise_scale
from src.kernels import Kernel, cross_gram, gram
from src.utils import cholesky_with_jitter


logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


def mmle_sigma2(data: Dataset, kernel: Kernel, lam: float,
                gram_matrix: Optional[np.ndarray] = None) -> float:
    """
    Maximum marginal likelihood estimate of sigma^2 for fixed lambda

    sigma^2_hat = lambda * y^T [K + n lambda I]^-1 y

    Args:
        data: Training data (homoscedastic)
        kernel: Kernel configuration
        lam: Regularization lambda > 0
        gram_matrix: Precomputed K(X, X)

    Returns:
        Non-negative variance estimate
    """
    model = fit(data, kernel, lam, sigma2=1.0, gram_matrix=gram_matrix)
    return max(0.0, float(lam * data.y @ model.alpha))


def log_marginal(data: Dataset, kernel: Kernel, lam: float, sigma2: float,
                 noise_model: NoiseModel = NoiseModel.HOMOSCEDASTIC,
                 gram_matrix: Optional[np.ndarray] = None) -> float:
    """
    Log density of y under N(0, sigma^2 [(n lambda)^-1 K + sigma^-2 D])

    Homoscedastic data give D = sigma^2 I, i.e. N(0, sigma^2 ((n lambda)^-1 K + I)).
    """
    K = gram(kernel, data.x) if gram_matrix is None else gram_matrix
    n = data.n
    system = K / (n * lam) + np.diag(noise_scale(data, sigma2, noise_model))
    factor, _ = cholesky_with_jitter(system, scale=np.mean(np.diag(system)))
    z = linalg.solve_triangular(factor, data.y, lower=True, check_finite=False)
    return float(
        -0.5 * (z @ z) / sigma2
        - np.sum(np.log(np.diag(factor)))
        - 0.5 * n * (_LOG_2PI + np.log(sigma2))
    )


def _profile_sigma2(data: Dataset, kernel: Kernel, lam: float,
                    gram_matrix: np.ndarray) -> float:
    """Numerical maximizer of the heteroscedastic log marginal over sigma^2."""
    scale = max(float(np.var(data.y)), float(np.mean(data.obs_sd ** 2)), 1e-12)

    def objective(log_sigma2):
        try:
            return -log_marginal(data, kernel, lam, float(np.exp(log_sigma2)),
                                 NoiseModel.HETEROSCEDASTIC, gram_matrix)
        except FitError:
            return np.inf

    result = optimize.minimize_scalar(
        objective,
        bounds=(np.log(scale * 1e-8), np.log(scale * 1e2)),
        method='bounded',
        options={'xatol': 1e-8},
    )
    return float(np.exp(result.x))


def evidence_profile(data: Dataset, kernel: Kernel, lambda_grid=None,
                     noise_model: NoiseModel = NoiseModel.HOMOSCEDASTIC,
                     gram_matrix: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Profile log marginal likelihood over a lambda grid

    Each row holds lambda, the sigma^2 maximizing the evidence at that lambda and the
    resulting log marginal. Grid points whose factorization fails get NaN.
    """
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    grid = np.unique(grid)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("lambda grid must be non-empty and positive")
    noise_model = NoiseModel(noise_model)
    K = gram(kernel, data.x) if gram_matrix is None else gram_matrix

    rows = []
    for lam in grid:
        try:
            if noise_model is NoiseModel.HOMOSCEDASTIC:
                sigma2 = max(mmle_sigma2(data, kernel, lam, K), np.finfo(float).tiny)
            else:
                sigma2 = _profile_sigma2(data, kernel, lam, K)
            value = log_marginal(data, kernel, lam, sigma2, noise_model, K)
        except FitError as exc:
            logger.warning("Skipping lambda=%.3e: %s", lam, exc)
            sigma2, value = np.nan, np.nan
        rows.append({'lambda': lam, 'sigma2': sigma2, 'log_marginal': value})

    return pd.DataFrame(rows, columns=['lambda', 'sigma2', 'log_marginal'])


def optimize_evidence(data: Dataset, kernel: Kernel, lambda_grid=None,
                      noise_model: NoiseModel = NoiseModel.HOMOSCEDASTIC,
                      gram_matrix: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    Empirical Bayes choice of (lambda, sigma^2)

    Picks the grid lambda with the largest profiled log marginal; ties go to the
    larger lambda, so the result does not depend on grid order.

    Returns:
        (lambda_hat, sigma2_hat)
    """
    table = evidence_profile(data, kernel, lambda_grid, noise_model, gram_matrix)
    valid = table.dropna()
    if valid.empty:
        raise FitError("every lambda grid point failed to factorize")

    best_value = valid['log_marginal'].max()
    best = valid[valid['log_marginal'] == best_value].iloc[-1]
    logger.debug("Evidence optimum for %s: lambda=%.3e sigma2=%.3e",
                 getattr(kernel, 'label', kernel), best['lambda'], best['sigma2'])
    return float(best['lambda']), float(best['sigma2'])


@dataclass(frozen=True)
class HyperPriors:
    """Inverse-gamma(shape, rate) on sigma^2 and gamma(shape, rate) on lambda."""

    sigma2_shape: float = SIGMA2_PRIOR_SHAPE
    sigma2_rate: float = SIGMA2_PRIOR_RATE
    lambda_shape: float = LAMBDA_PRIOR_SHAPE
    lambda_rate: float = LAMBDA_PRIOR_RATE

    def __post_init__(self):
        for name in ('sigma2_shape', 'sigma2_rate', 'lambda_shape', 'lambda_rate'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def log_density(self, sigma2: float, lam: float) -> float:
        return float(
            stats.invgamma.logpdf(sigma2, self.sigma2_shape, scale=self.sigma2_rate)
            + stats.gamma.logpdf(lam, self.lambda_shape, scale=1.0 / self.lambda_rate)
        )


class GramEigen:
    """
    Eigendecomposition K = U diag(w) U^T reused across many lambda values

    Gives the homoscedastic log marginal and posterior-mean weights in O(n) per lambda.
    """

    def __init__(self, gram_matrix: np.ndarray, y: np.ndarray):
        w, U = linalg.eigh(gram_matrix)
        self.eigenvalues = np.clip(w, 0.0, None)
        self.eigenvectors = U
        self.projected_y = U.T @ y
        self.n = len(y)

    def log_marginal(self, lam: float, sigma2: float) -> float:
        d = self.eigenvalues / (self.n * lam) + 1.0
        quad = np.sum(self.projected_y ** 2 / d)
        return float(
            -0.5 * quad / sigma2
            - 0.5 * np.sum(np.log(d))
            - 0.5 * self.n * (_LOG_2PI + np.log(sigma2))
        )

    def alpha(self, lam: float) -> np.ndarray:
        """[K + n lambda I]^-1 y."""
        return self.eigenvectors @ (self.projected_y / (self.eigenvalues + self.n * lam))

    def mean_alpha(self, lams: np.ndarray) -> np.ndarray:
        """Average of alpha(lambda) over a sample of lambda values."""
        lams = np.asarray(lams, dtype=float)
        weights = 1.0 / (self.eigenvalues[None, :] + self.n * lams[:, None])
        return self.eigenvectors @ (self.projected_y * weights.mean(axis=0))


@dataclass(frozen=True)
class HyperChain:
    """Post burn-in Metropolis-Hastings draws of (sigma^2, lambda)."""

    sigma2: np.ndarray
    lam: np.ndarray
    log_posterior: np.ndarray
    accept_rate: float

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.sigma2, self.lam])

    def __len__(self):
        return self.sigma2.shape[0]


def sample_posterior_hyper(data: Dataset, kernel: Kernel, priors: Optional[HyperPriors] = None,
                           n_samples: int = MH_SAMPLES, burn_in: int = MH_BURN_IN,
                           seed: int = 0, step: float = MH_STEP,
                           init: Optional[Tuple[float, float]] = None,
                           lambda_grid=None,
                           gram_matrix: Optional[np.ndarray] = None) -> HyperChain:
    """
    Random-walk Metropolis-Hastings on (log sigma^2, log lambda)

    Args:
        data: Training data (homoscedastic)
        kernel: Kernel configuration
        priors: Hyperpriors, defaults to IG(20, 1) x Gamma(1, 1000)
        n_samples: Draws kept after burn-in
        burn_in: Draws discarded first
        seed: RNG seed, same seed gives a bitwise identical chain
        step: Proposal sd on each log coordinate
        init: (lambda, sigma2) start; defaults to the evidence optimum
        lambda_grid: Grid for the default initialization
        gram_matrix: Precomputed K(X, X)

    Returns:
        HyperChain of the kept draws
    """
    if n_samples < 1 or burn_in < 0:
        raise ValueError("n_samples must be >= 1 and burn_in >= 0")
    if step < 0:
        raise ValueError("step must be non-negative")
    priors = HyperPriors() if priors is None else priors
    K = gram(kernel, data.x) if gram_matrix is None else gram_matrix

    if init is None:
        init = optimize_evidence(data, kernel, lambda_grid, gram_matrix=K)
    lam0, sigma20 = init
    eigen = GramEigen(K, data.y)

    def log_target(theta):
        sigma2, lam = np.exp(theta)
        if not (np.isfinite(sigma2) and np.isfinite(lam)) or sigma2 <= 0 or lam <= 0:
            return -np.inf
        # log-scale random walk: add the log Jacobian log sigma^2 + log lambda
        value = eigen.log_marginal(lam, sigma2) + priors.log_density(sigma2, lam) + theta.sum()
        return value if np.isfinite(value) else -np.inf

    rng = np.random.default_rng(seed)
    total = burn_in + n_samples
    proposals = rng.normal(0.0, 1.0, size=(total, 2)) * step
    log_u = np.log(rng.uniform(size=total))

    theta = np.log([max(sigma20, np.finfo(float).tiny), lam0])
    current = log_target(theta)
    chain = np.empty((total, 2))
    log_post = np.empty(total)
    accepted = 0

    for t in range(total):
        candidate = theta + proposals[t]
        proposed = log_target(candidate)
        if log_u[t] < proposed - current:
            theta, current = candidate, proposed
            if t >= burn_in:
                accepted += 1
        chain[t] = theta
        log_post[t] = current

    kept = np.exp(chain[burn_in:])
    accept_rate = accepted / n_samples
    logger.info("MH chain for %s: %d draws, acceptance %.3f",
                getattr(kernel, 'label', kernel), n_samples, accept_rate)
    return HyperChain(sigma2=kept[:, 0], lam=kept[:, 1],
                      log_posterior=log_post[burn_in:], accept_rate=accept_rate)


def average_posterior_mean(data: Dataset, kernel: Kernel, chain: HyperChain, k: int, grid,
                           gram_matrix: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Fully Bayesian posterior mean of f^(k), averaged over the lambda draws

    The posterior mean does not depend on sigma^2, so only the lambda draws matter.
    """
    if hasattr(kernel, 'check_orders'):
        kernel.check_orders(k)
    K = gram(kernel, data.x) if gram_matrix is None else gram_matrix
    eigen = GramEigen(K, data.y)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return cross_gram(kernel, k, grid, data.x) @ eigen.mean_alpha(chain.lam)
