"""
B-spline Baseline for GPDeriv
Cubic B-splines on clamped uniform knots with a unit ridge prior on the
coefficients, the comparator the GP methods are measured against
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import interpolate

from src.bands import CredibleBand, simultaneous_band
from src.config import BAND_LEVEL, BAND_SAMPLES, KNOT_GRID, SPLINE_INFLATION
from src.errors import DerivativeOrderError, DomainError, SelectionError
from src.gp_core import Dataset, DerivPosterior
from src.model_select import loocv_score
from src.utils import cho_solve_lower, cholesky_with_jitter


logger = logging.getLogger(__name__)

DEGREE = 3
MAX_BASIS_DERIV = 2
_DOMAIN_TOLERANCE = 1e-12


def uniform_knots(J: int) -> np.ndarray:
    """Clamped knot vector on [0, 1] with J - 4 uniform interior knots."""
    if J < DEGREE + 1:
        raise ValueError(f"need J >= {DEGREE + 1} basis functions, got {J}")
    interior = np.linspace(0.0, 1.0, J - DEGREE + 1)[1:-1]
    return np.concatenate([np.zeros(DEGREE + 1), interior, np.ones(DEGREE + 1)])


@lru_cache(maxsize=64)
def _basis_spline(J: int, deriv: int) -> interpolate.BSpline:
    spline = interpolate.BSpline(uniform_knots(J), np.eye(J), DEGREE, extrapolate=True)
    return spline.derivative(deriv) if deriv else spline


def bspline_basis(J: int, x, deriv: int = 0) -> np.ndarray:
    """
    Evaluate all J cubic B-spline basis functions (or a derivative) at x in [0, 1]

    Args:
        J: Number of basis functions (J >= 4)
        x: Scalar or array of points in [0, 1]
        deriv: Derivative order 0, 1 or 2

    Returns:
        Vector of length J for scalar x, else matrix (len(x), J)
    """
    if deriv not in range(MAX_BASIS_DERIV + 1):
        raise DerivativeOrderError(f"B-spline derivative order must be 0..{MAX_BASIS_DERIV}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < -_DOMAIN_TOLERANCE) or np.any(x > 1.0 + _DOMAIN_TOLERANCE):
        raise DomainError("B-spline basis is defined on [0, 1]")
    values = _basis_spline(int(J), int(deriv))(np.clip(x, 0.0, 1.0))
    return values[0] if scalar else values


def _to_unit(x, domain: Tuple[float, float]) -> np.ndarray:
    lo, hi = domain
    return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def _check_domain(domain) -> Tuple[float, float]:
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError(f"domain upper end must exceed lower end, got {domain}")
    return lo, hi


def design_matrix(J: int, x, deriv: int = 0, domain=(0.0, 1.0)) -> np.ndarray:
    """Basis derivatives for covariates on [a, b], rescaled by (b - a)^-deriv."""
    lo, hi = _check_domain(domain)
    return bspline_basis(J, np.atleast_1d(_to_unit(x, (lo, hi))), deriv) / (hi - lo) ** deriv


@dataclass(frozen=True)
class BsplineModel:
    """
    Ridge-penalized cubic spline fit

    The coefficient posterior is N(beta_mean, sigma2 (B^T B + I)^-1); precision_factor
    is the lower Cholesky factor of B^T B + I.
    """

    J: int
    N: int
    beta_mean: np.ndarray
    sigma2: float
    data: Dataset
    domain: Tuple[float, float]
    precision_factor: np.ndarray = field(repr=False)

    def design(self, x, deriv: int = 0) -> np.ndarray:
        return design_matrix(self.J, x, deriv, self.domain)

    def smoother_matrix(self) -> np.ndarray:
        """H = B (B^T B + I)^-1 B^T."""
        B = self.design(self.data.x)
        return B @ cho_solve_lower(self.precision_factor, B.T)


def fit_bspline(data: Dataset, J: int, domain=(0.0, 1.0)) -> BsplineModel:
    """
    Fit the spline posterior for J basis functions

    sigma2 = n^-1 y^T (B B^T + I)^-1 y, evaluated through the J x J system, and
    beta_mean = (B^T B + I)^-1 B^T y.
    """
    domain = _check_domain(domain)
    B = design_matrix(J, data.x, 0, domain)
    precision = B.T @ B + np.eye(J)
    factor, _ = cholesky_with_jitter(precision, scale=np.mean(np.diag(precision)))
    Bty = B.T @ data.y
    beta = cho_solve_lower(factor, Bty)
    # Woodbury: y^T (B B^T + I)^-1 y = y^T y - (B^T y)^T beta
    sigma2 = max(float(data.y @ data.y - Bty @ beta), 0.0) / data.n

    return BsplineModel(J=int(J), N=int(J) - (DEGREE + 1), beta_mean=beta, sigma2=sigma2,
                        data=data, domain=domain, precision_factor=factor)


def bspline_deriv_mean(model: BsplineModel, k: int, grid) -> np.ndarray:
    """Posterior mean of f^(k): b^(k)(grid)^T beta_mean."""
    return model.design(grid, k) @ model.beta_mean


def bspline_deriv_posterior(model: BsplineModel, k: int, grid) -> DerivPosterior:
    """Posterior of f^(k) on a grid implied by the coefficient posterior."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    Bk = model.design(grid, k)
    cov = model.sigma2 * Bk @ cho_solve_lower(model.precision_factor, Bk.T)
    return DerivPosterior(k=k, grid=grid, mean=Bk @ model.beta_mean, cov=0.5 * (cov + cov.T))


def bspline_band(model: BsplineModel, k: int, grid, level: float = BAND_LEVEL,
                 n_samples: int = BAND_SAMPLES, seed: int = 0,
                 inflation: float = SPLINE_INFLATION) -> CredibleBand:
    """Simultaneous band for f^(k) with the radius inflated by (1 + inflation)."""
    post = bspline_deriv_posterior(model, k, grid)
    return simultaneous_band(post, level, n_samples, seed, inflation=inflation)


def select_knots(data: Dataset, n_grid=KNOT_GRID, domain=(0.0, 1.0)) -> BsplineModel:
    """
    Number of interior knots N minimizing the LOO score (J = N + 4)

    Ties go to the smaller N.
    """
    best, best_score = None, np.inf
    for N in sorted(set(int(n) for n in n_grid)):
        if N < 0:
            raise ValueError(f"number of interior knots must be >= 0, got {N}")
        model = fit_bspline(data, N + DEGREE + 1, domain)
        try:
            score = loocv_score(model)
        except SelectionError as exc:
            logger.warning("Skipping N=%d knots: %s", N, exc)
            continue
        logger.debug("B-spline N=%d: LOO score %.6e", N, score)
        if best is None or score < best_score:
            best, best_score = model, score
    if best is None:
        raise SelectionError("no knot count produced a LOO score")
    return best


class BsplineKernel:
    """Linear-model kernel K(x, x') = b(x)^T b(x') of the spline prior."""

    def __init__(self, J: int, domain=(0.0, 1.0)):
        self.J = int(J)
        self.domain = _check_domain(domain)
        self.max_deriv_order = MAX_BASIS_DERIV

    @property
    def label(self) -> str:
        return f"bspline(J={self.J})"

    def matrix(self, k1: int, k2: int, xa, xb) -> np.ndarray:
        if max(k1, k2) > self.max_deriv_order:
            raise DerivativeOrderError(f"B-spline kernel supports derivatives up to "
                                       f"{self.max_deriv_order}")
        return (design_matrix(self.J, xa, k1, self.domain)
                @ design_matrix(self.J, xb, k2, self.domain).T)
