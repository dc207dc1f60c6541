"""
Spectral Kernels for GPDeriv
Kernels given by eigenvalues on the Fourier basis of [0, 1], their equivalent
kernels, effective dimensions and the scaling-law check on those dimensions
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special
from sklearn.linear_model import LinearRegression

from src.config import (
    EXP_TRUNCATION,
    POLY_TRUNCATION,
    SPECTRAL_MAX_DERIV_ORDER,
    SPECTRAL_TAIL_TOLERANCE,
    SUP_GRID_SIZE,
)
from src.errors import DerivativeOrderError, TruncationWarning


logger = logging.getLogger(__name__)

# exp(-700) is still a normal double; smaller eigenvalues contribute nothing
_LOG_NEGLIGIBLE = -700.0
_CHUNK = 2048


class SpectralFamily(str, Enum):
    EXPONENTIAL = 'exp'
    POLYNOMIAL = 'poly'


def fourier_basis(x, M: int, k: int = 0) -> np.ndarray:
    """
    k-th derivatives of psi_1 = 1, psi_2i = sqrt2 cos(2 pi i x), psi_2i+1 = sqrt2 sin(2 pi i x)

    Returns:
        Matrix of shape (len(x), M)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _fourier_block(x, 1, M, k)


def _fourier_block(x: np.ndarray, start: int, stop: int, k: int) -> np.ndarray:
    """Basis columns for 1-based indices start..stop."""
    index = np.arange(start, stop + 1)
    omega = 2.0 * np.pi * (index // 2)
    phase = omega[None, :] * x[:, None] + 0.5 * np.pi * k
    values = np.where(index % 2 == 0, np.cos(phase), np.sin(phase))
    values = np.sqrt(2.0) * omega ** k * values
    constant = index == 1
    if np.any(constant):
        values[:, constant] = 1.0 if k == 0 else 0.0
    return values


@dataclass(frozen=True)
class SpectralKernel:
    """
    K(x, x') = sum_i mu_i psi_i(x) psi_i(x') truncated at M terms

    Eigenvalues are stored as log_mu so that fast-decaying sequences never underflow.
    """

    log_mu: np.ndarray
    family: Optional[SpectralFamily] = None
    param: Optional[float] = None
    max_deriv_order: int = SPECTRAL_MAX_DERIV_ORDER

    def __post_init__(self):
        log_mu = np.array(self.log_mu, dtype=float)
        if log_mu.ndim != 1 or log_mu.size == 0:
            raise ValueError("log_mu must be a non-empty vector")
        if np.any(np.diff(log_mu) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        log_mu.setflags(write=False)
        object.__setattr__(self, 'log_mu', log_mu)
        if self.family is not None:
            object.__setattr__(self, 'family', SpectralFamily(self.family))

    @property
    def M(self) -> int:
        return self.log_mu.shape[0]

    @property
    def mu(self) -> np.ndarray:
        return np.exp(self.log_mu)

    @property
    def label(self) -> str:
        if self.family is None:
            return f"spectral(M={self.M})"
        return f"spectral-{self.family.value}({self.param:g}, M={self.M})"

    def check_orders(self, *orders: int):
        for k in orders:
            if k < 0 or k > self.max_deriv_order:
                raise DerivativeOrderError(
                    f"derivative order {k} not available for {self.label} "
                    f"(max {self.max_deriv_order})"
                )

    def tail_bound(self, power: int) -> float:
        """Bound on sum_{i > M} mu_i sup|psi_i^(k1) psi_i^(k2)| with power = k1 + k2."""
        scale = 2.0 * (2.0 * np.pi) ** power
        if self.family is SpectralFamily.EXPONENTIAL:
            rate = 2.0 * self.param
            upper = special.gammaincc(power + 1, rate * self.M) * special.gamma(power + 1)
            return float(scale * upper / rate ** (power + 1))
        if self.family is SpectralFamily.POLYNOMIAL:
            exponent = power - 2.0 * self.param
            if exponent >= -1.0:
                return np.inf
            return float(scale * self.M ** (exponent + 1.0) / -(exponent + 1.0))
        return 0.0

    def _check_truncation(self, power: int):
        index = np.arange(1, self.M + 1)
        partial = np.sum(self.mu * (2.0 * np.pi * index) ** power)
        tail = self.tail_bound(power)
        if tail > SPECTRAL_TAIL_TOLERANCE * partial:
            warnings.warn(
                f"{self.label}: truncated series tail {tail:.2e} exceeds "
                f"{SPECTRAL_TAIL_TOLERANCE:g} of the partial sum for derivative order {power}",
                TruncationWarning,
                stacklevel=3,
            )

    def matrix(self, k1: int, k2: int, xa, xb) -> np.ndarray:
        self.check_orders(k1, k2)
        self._check_truncation(k1 + k2)
        xa = np.atleast_1d(np.asarray(xa, dtype=float))
        xb = np.atleast_1d(np.asarray(xb, dtype=float))
        active = int(np.sum(self.log_mu > _LOG_NEGLIGIBLE))

        out = np.zeros((xa.shape[0], xb.shape[0]))
        for start in range(1, active + 1, _CHUNK):
            stop = min(start + _CHUNK - 1, active)
            mu = np.exp(self.log_mu[start - 1:stop])
            left = _fourier_block(xa, start, stop, k1)
            right = _fourier_block(xb, start, stop, k2)
            out += (left * mu[None, :]) @ right.T
        return out

    def eval_deriv(self, k1: int, k2: int, x, x2) -> np.ndarray:
        x, x2 = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(x2, dtype=float))
        if x.ndim == 0:
            return self.matrix(k1, k2, x.reshape(1), x2.reshape(1))[0, 0]
        if x.ndim == 2 and np.all(x == x[:, :1]) and np.all(x2 == x2[:1, :]):
            return self.matrix(k1, k2, x[:, 0], x2[0, :])
        flat = [self.matrix(k1, k2, [a], [b])[0, 0] for a, b in zip(x.ravel(), x2.ravel())]
        return np.reshape(flat, x.shape)


def kernel_eval(sk: SpectralKernel, k1: int, k2: int, x: float, x2: float) -> float:
    """Single mixed partial of the truncated spectral kernel."""
    return float(sk.matrix(k1, k2, [x], [x2])[0, 0])


def make_exp_kernel(gamma: float, M: int = EXP_TRUNCATION) -> SpectralKernel:
    """Eigenvalues mu_i = exp(-2 gamma i)."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    index = np.arange(1, int(M) + 1)
    return SpectralKernel(-2.0 * gamma * index, SpectralFamily.EXPONENTIAL, float(gamma))


def make_poly_kernel(alpha: float, M: int = POLY_TRUNCATION) -> SpectralKernel:
    """Eigenvalues mu_i = i^(-2 alpha)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    index = np.arange(1, int(M) + 1)
    return SpectralKernel(-2.0 * alpha * np.log(index), SpectralFamily.POLYNOMIAL, float(alpha))


def _log_equivalent(sk: SpectralKernel, lam: float) -> np.ndarray:
    # log(mu / (lam + mu)) without forming mu
    return sk.log_mu - np.logaddexp(np.log(lam), sk.log_mu)


def equivalent_kernel(sk: SpectralKernel, lam: float) -> SpectralKernel:
    """Equivalent kernel with eigenvalues nu_i = mu_i / (lam + mu_i)."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return SpectralKernel(_log_equivalent(sk, lam), None, None, sk.max_deriv_order)


def _poly_tail(alpha: float, lam: float, m: int, M: int) -> float:
    """Integral of t^(2m) / (1 + lam t^(2 alpha)) beyond M (midpoint start)."""
    if 2.0 * alpha - 2.0 * m <= 1.0:
        logger.warning("Tail of the effective dimension diverges for alpha=%g, m=%d; "
                       "using the truncated sum", alpha, m)
        return 0.0
    value, _ = integrate.quad(lambda t: t ** (2 * m) / (1.0 + lam * t ** (2.0 * alpha)),
                              M + 0.5, np.inf, limit=200)
    return float(value)


def effective_dimension(sk: SpectralKernel, lam: float, m: int,
                        grid_size: int = SUP_GRID_SIZE) -> Tuple[float, float]:
    """
    Effective dimensions of the equivalent kernel for derivative order m

    Returns:
        (kappa_tilde_m^2, kappa_hat_m^2): the sup over a uniform grid of
        sum_i nu_i psi_i^(m)(x)^2, and sum_i i^(2m) nu_i
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    log_nu = _log_equivalent(sk, lam)
    index = np.arange(1, sk.M + 1)

    kappa_hat = float(np.sum(index.astype(float) ** (2 * m) * np.exp(log_nu)))
    if sk.family is SpectralFamily.POLYNOMIAL:
        kappa_hat += _poly_tail(sk.param, lam, m, sk.M)

    grid = np.linspace(0.0, 1.0, grid_size)
    active = int(np.sum(log_nu > _LOG_NEGLIGIBLE))
    profile = np.zeros(grid_size)
    for start in range(1, active + 1, _CHUNK):
        stop = min(start + _CHUNK - 1, active)
        block = _fourier_block(grid, start, stop, m)
        profile += block ** 2 @ np.exp(log_nu[start - 1:stop])
    kappa_tilde = float(np.max(profile))

    return kappa_tilde, kappa_hat


def rate_check_effective_dim(family: SpectralFamily, param: float, m: int, lambda_list,
                             M: Optional[int] = None) -> float:
    """
    Least-squares slope of log kappa_hat_m^2 against the family's rate variable

    The regressor is log(-log lambda) for the exponential family (slope near 2m + 1)
    and -log lambda for the polynomial family (slope near (2m + 1) / (2 alpha)).
    """
    family = SpectralFamily(family)
    lams = np.asarray(lambda_list, dtype=float)
    if lams.size < 2:
        raise ValueError("need at least two lambda values")
    if np.any(lams <= 0) or np.any(lams >= 1):
        raise ValueError("lambda values must lie in (0, 1)")

    if family is SpectralFamily.EXPONENTIAL:
        sk = make_exp_kernel(param, EXP_TRUNCATION if M is None else M)
        regressor = np.log(-np.log(lams))
    else:
        sk = make_poly_kernel(param, POLY_TRUNCATION if M is None else M)
        regressor = -np.log(lams)

    log_index = 2 * m * np.log(np.arange(1, sk.M + 1))
    response = []
    for lam in lams:
        kappa_hat = float(np.exp(special.logsumexp(log_index + _log_equivalent(sk, lam))))
        if family is SpectralFamily.POLYNOMIAL:
            kappa_hat += _poly_tail(param, lam, m, sk.M)
        response.append(np.log(kappa_hat))

    model = LinearRegression().fit(regressor.reshape(-1, 1), np.asarray(response))
    slope = float(model.coef_[0])
    logger.info("Rate check %s(%g), m=%d: slope %.4f", family.value, param, m, slope)
    return slope
