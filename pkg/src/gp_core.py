"""
Plug-in GP Core for GPDeriv
Fits the GP prior GP(0, sigma^2 (n lambda)^-1 K) and returns the posterior of the
k-th derivative of the regression function on a grid
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import linalg
from sklearn.utils import check_array, check_consistent_length

from src.errors import DataError, DerivativeOrderError
from src.kernels import Kernel, cross_gram, gram
from src.utils import cho_solve_lower, cholesky_with_jitter


logger = logging.getLogger(__name__)


class NoiseModel(str, Enum):
    HOMOSCEDASTIC = 'homoscedastic'
    HETEROSCEDASTIC = 'heteroscedastic'


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """Design points, responses and optional per-observation noise sd."""

    x: np.ndarray
    y: np.ndarray
    obs_sd: Optional[np.ndarray] = None

    def __post_init__(self):
        try:
            x = check_array(self.x, ensure_2d=False, dtype=float)
            y = check_array(self.y, ensure_2d=False, dtype=float)
            arrays = [x, y]
            obs_sd = None
            if self.obs_sd is not None:
                obs_sd = check_array(self.obs_sd, ensure_2d=False, dtype=float)
                arrays.append(obs_sd)
            check_consistent_length(*arrays)
        except ValueError as exc:
            raise DataError(f"invalid dataset: {exc}") from exc

        if x.ndim != 1 or y.ndim != 1:
            raise DataError("x and y must be one-dimensional")
        if obs_sd is not None and np.any(obs_sd < 0):
            raise DataError("obs_sd must be non-negative")

        object.__setattr__(self, 'x', _frozen(x))
        object.__setattr__(self, 'y', _frozen(y))
        object.__setattr__(self, 'obs_sd', None if obs_sd is None else _frozen(obs_sd))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def has_obs_sd(self) -> bool:
        return self.obs_sd is not None

    def subset(self, index) -> 'Dataset':
        obs_sd = None if self.obs_sd is None else self.obs_sd[index]
        return Dataset(self.x[index], self.y[index], obs_sd)

    def with_y(self, y) -> 'Dataset':
        return Dataset(self.x, y, self.obs_sd)


@dataclass(frozen=True)
class DerivPosterior:
    """Gaussian posterior of f^(k) on a grid."""

    k: int
    grid: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'grid', _frozen(self.grid))
        object.__setattr__(self, 'mean', _frozen(self.mean))
        object.__setattr__(self, 'cov', _frozen(self.cov))

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.cov)


@dataclass(frozen=True)
class FittedGP:
    """
    Factorized plug-in GP

    factor is the lower Cholesky factor of K + n lambda sigma^-2 D, where D is
    sigma^2 I (homoscedastic) or diag(obs_sd^2 + sigma^2); alpha solves that system
    against y.
    """

    data: Dataset
    kernel: Kernel
    lam: float
    sigma2: float
    noise_model: NoiseModel
    factor: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    gram_matrix: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def prior_scale(self) -> float:
        """sigma^2 (n lambda)^-1, the multiplier of K in the prior covariance."""
        return self.sigma2 / (self.n * self.lam)

    def smoother_matrix(self) -> np.ndarray:
        """Hat matrix H = K A^-1 mapping y to fitted values."""
        return cho_solve_lower(self.factor, self.gram_matrix).T


def noise_scale(data: Dataset, sigma2: float, noise_model: NoiseModel) -> np.ndarray:
    """Diagonal of sigma^-2 D, all ones in the homoscedastic case."""
    if NoiseModel(noise_model) is NoiseModel.HOMOSCEDASTIC:
        return np.ones(data.n)
    if not data.has_obs_sd:
        raise DataError("heteroscedastic noise model needs per-observation sd (sigma_y)")
    return (data.obs_sd ** 2 + sigma2) / sigma2


def fit(data: Dataset, kernel: Kernel, lam: float, sigma2: float,
        noise_model: NoiseModel = NoiseModel.HOMOSCEDASTIC,
        gram_matrix: Optional[np.ndarray] = None) -> FittedGP:
    """
    Factorize the regularized Gram system for given hyperparameters

    Args:
        data: Training data
        kernel: Kernel configuration
        lam: Regularization lambda > 0
        sigma2: Noise variance sigma^2 > 0
        noise_model: Homoscedastic or heteroscedastic noise
        gram_matrix: Precomputed K(X, X), reused across tuning loops

    Returns:
        FittedGP holding the factorization and the representer weights
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam}")
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    noise_model = NoiseModel(noise_model)

    K = gram(kernel, data.x) if gram_matrix is None else np.asarray(gram_matrix, dtype=float)
    system = K + np.diag(data.n * lam * noise_scale(data, sigma2, noise_model))
    factor, jitter = cholesky_with_jitter(system, scale=np.mean(np.diag(system)))
    alpha = cho_solve_lower(factor, data.y)

    logger.debug("Fitted GP: n=%d lambda=%.3e sigma2=%.3e jitter=%.1e",
                 data.n, lam, sigma2, jitter)
    return FittedGP(
        data=data,
        kernel=kernel,
        lam=float(lam),
        sigma2=float(sigma2),
        noise_model=noise_model,
        factor=_frozen(factor),
        alpha=_frozen(alpha),
        gram_matrix=_frozen(K),
        jitter=float(jitter),
    )


def _check_order(model: FittedGP, k: int):
    if hasattr(model.kernel, 'check_orders'):
        model.kernel.check_orders(k)
    elif k > model.kernel.max_deriv_order:
        raise DerivativeOrderError(
            f"derivative order {k} exceeds kernel maximum {model.kernel.max_deriv_order}"
        )


def posterior_mean_deriv(model: FittedGP, k: int, grid) -> np.ndarray:
    """Posterior mean of f^(k): K_k0(grid, X) alpha."""
    _check_order(model, k)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return cross_gram(model.kernel, k, grid, model.data.x) @ model.alpha


def posterior_cov_deriv(model: FittedGP, k: int, grid) -> np.ndarray:
    """Posterior covariance of f^(k): sigma^2 (n lambda)^-1 {K_kk - K_k0 A^-1 K_0k}."""
    return posterior_deriv(model, k, grid).cov


def posterior_deriv(model: FittedGP, k: int, grid) -> DerivPosterior:
    """Mean and covariance of f^(k) on grid, sharing one cross-Gram."""
    _check_order(model, k)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))

    cross = cross_gram(model.kernel, k, grid, model.data.x)
    mean = cross @ model.alpha

    prior = model.kernel.matrix(k, k, grid, grid)
    v = linalg.solve_triangular(model.factor, cross.T, lower=True, check_finite=False)
    cov = model.prior_scale * (prior - v.T @ v)
    cov = 0.5 * (cov + cov.T)

    return DerivPosterior(k=k, grid=grid, mean=mean, cov=cov)


def fitted_values(model: FittedGP) -> np.ndarray:
    """Posterior mean of f at the training inputs."""
    return model.gram_matrix @ model.alpha


__all__ = [
    'NoiseModel',
    'Dataset',
    'DerivPosterior',
    'FittedGP',
    'noise_scale',
    'fit',
    'posterior_mean_deriv',
    'posterior_cov_deriv',
    'posterior_deriv',
    'fitted_values',
]
