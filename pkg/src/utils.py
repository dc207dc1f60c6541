"""
Utility Functions for GPDeriv
Jittered Cholesky factorization, grid parsing and data fingerprints
"""

import hashlib
import logging

import numpy as np
from scipy import linalg

from src.config import JITTER_FACTOR, JITTER_START, JITTER_STOP
from src.errors import FitError


logger = logging.getLogger(__name__)


def jitter_levels(start=JITTER_START, stop=JITTER_STOP, factor=JITTER_FACTOR) -> list:
    """
    Relative jitter ladder start, start*factor, ... up to stop

    Returns:
        List of relative jitter magnitudes
    """
    levels = []
    level = start
    while level <= stop * (1 + 1e-9):
        levels.append(level)
        level *= factor
    return levels


def cholesky_with_jitter(matrix: np.ndarray, scale: float, allow_zero: bool = True):
    """
    Lower Cholesky factor of a symmetric matrix, adding diagonal jitter on failure

    Args:
        matrix: Symmetric positive (semi)definite matrix
        scale: Jitter is level * scale for each level of the ladder
        allow_zero: Try the matrix unchanged before the first jitter level

    Returns:
        (lower factor, absolute jitter added)
    """
    matrix = np.asarray(matrix, dtype=float)
    scale = float(scale) if np.isfinite(scale) and scale > 0 else 1.0
    attempts = ([0.0] if allow_zero else []) + [level * scale for level in jitter_levels()]

    for jitter in attempts:
        try:
            system = matrix if jitter == 0.0 else matrix + jitter * np.eye(matrix.shape[0])
            factor = linalg.cholesky(system, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            logger.debug("Cholesky failed with jitter %.3e", jitter)
            continue
        if jitter > 0.0:
            logger.info("Cholesky succeeded after adding jitter %.3e", jitter)
        return factor, jitter

    raise FitError(
        f"Cholesky factorization failed for a {matrix.shape[0]}x{matrix.shape[0]} system "
        f"(jitter tried: {', '.join(f'{a:.1e}' for a in attempts)})",
        jitter_levels=attempts,
    )


def cho_solve_lower(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs given the lower Cholesky factor of A."""
    return linalg.cho_solve((factor, True), rhs, check_finite=False)


def parse_grid(text: str) -> np.ndarray:
    """
    Parse a grid written as a:b:m (m equally spaced points on [a, b])

    Args:
        text: Grid string a:b:m

    Returns:
        Grid as a numpy array
    """
    parts = text.split(':')
    if len(parts) != 3:
        raise ValueError(f"grid must look like a:b:m, got {text!r}")
    try:
        low, high, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValueError(f"grid must look like a:b:m, got {text!r}") from exc
    if num < 1:
        raise ValueError(f"grid needs at least one point, got {text!r}")
    if num == 1:
        return np.array([low])
    if not high > low:
        raise ValueError(f"grid upper end must exceed lower end, got {text!r}")
    return np.linspace(low, high, num)


def data_digest(*arrays) -> str:
    """SHA-256 fingerprint of the given float arrays (None entries skipped)."""
    digest = hashlib.sha256()
    for array in arrays:
        if array is None:
            digest.update(b'none')
            continue
        digest.update(np.ascontiguousarray(array, dtype='<f8').tobytes())
    return digest.hexdigest()
