"""
Credible Bands for GPDeriv
Pointwise and simultaneous bands for a derivative posterior on a grid
"""

import logging
from dataclasses import dataclass
from enum import Enum
from math import ceil

import numpy as np
import pandas as pd
from scipy import stats

from src.config import BAND_LEVEL, BAND_SAMPLES
from src.errors import FitError
from src.gp_core import DerivPosterior
from src.utils import cholesky_with_jitter


logger = logging.getLogger(__name__)


class BandKind(str, Enum):
    POINTWISE = 'pointwise'
    SIMULTANEOUS = 'simultaneous'


@dataclass(frozen=True)
class CredibleBand:
    """center +/- radius on a grid; radius is scalar (simultaneous) or per point."""

    k: int
    grid: np.ndarray
    center: np.ndarray
    radius: object
    level: float
    kind: BandKind

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, values) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(np.all((values >= self.lower) & (values <= self.upper)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'x': self.grid,
            'mean': self.center,
            'lower': self.lower,
            'upper': self.upper,
        })


def _check_level(level: float):
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")


def sample_paths(post: DerivPosterior, n_samples: int = BAND_SAMPLES, seed: int = 0) -> np.ndarray:
    """
    Draw posterior sample paths mean + L z

    L factors cov + jitter I with jitter starting at 1e-10 * max diag.

    Returns:
        Array of shape (n_samples, len(grid))
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    mean = np.asarray(post.mean, dtype=float)
    cov = np.asarray(post.cov, dtype=float)
    max_diag = float(np.max(np.diag(cov))) if cov.size else 0.0

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, mean.shape[0]))
    if max_diag <= 0.0:
        return np.tile(mean, (n_samples, 1))

    try:
        factor, jitter = cholesky_with_jitter(cov, scale=max_diag, allow_zero=False)
    except FitError:
        logger.error("Posterior covariance of f^(%d) could not be factorized", post.k)
        raise
    logger.debug("Sampling %d paths with jitter %.1e", n_samples, jitter)
    return mean + z @ factor.T


def empirical_quantile(values, level: float) -> float:
    """Order statistic ceil(level * S) of S values (1-based)."""
    _check_level(level)
    values = np.sort(np.asarray(values, dtype=float))
    index = min(max(int(ceil(level * values.shape[0])), 1), values.shape[0]) - 1
    return float(values[index])


def sup_deviations(samples: np.ndarray, center: np.ndarray) -> np.ndarray:
    """sup over the grid of |path - center| for each sample path."""
    return np.max(np.abs(np.asarray(samples) - np.asarray(center)[None, :]), axis=1)


def simultaneous_band(post: DerivPosterior, level: float = BAND_LEVEL,
                      n_samples: int = BAND_SAMPLES, seed: int = 0,
                      inflation: float = 0.0) -> CredibleBand:
    """
    Simultaneous band: radius is the level-quantile of sup |path - mean|

    Args:
        post: Derivative posterior on a grid
        level: Credibility level in (0, 1)
        n_samples: Monte Carlo sample paths
        seed: RNG seed
        inflation: Radius multiplier (1 + inflation)

    Returns:
        CredibleBand with a scalar radius
    """
    _check_level(level)
    if inflation < 0:
        raise ValueError("inflation must be non-negative")
    samples = sample_paths(post, n_samples, seed)
    radius = empirical_quantile(sup_deviations(samples, post.mean), level) * (1.0 + inflation)
    return CredibleBand(k=post.k, grid=np.array(post.grid), center=np.array(post.mean),
                        radius=radius, level=level, kind=BandKind.SIMULTANEOUS)


def pointwise_band(post: DerivPosterior, level: float = BAND_LEVEL) -> CredibleBand:
    """Pointwise band mean +/- z_{(1+level)/2} sd."""
    _check_level(level)
    variance = np.array(post.variance, dtype=float)
    scale = max(float(np.max(np.abs(variance))), 0.0) if variance.size else 0.0
    if np.any(variance < -1e-8 * scale):
        raise FitError(f"posterior variance of f^({post.k}) is negative beyond round-off")
    sd = np.sqrt(np.clip(variance, 0.0, None))
    radius = stats.norm.ppf(0.5 * (1.0 + level)) * sd
    return CredibleBand(k=post.k, grid=np.array(post.grid), center=np.array(post.mean),
                        radius=radius, level=level, kind=BandKind.POINTWISE)
