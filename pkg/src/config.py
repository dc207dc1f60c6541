"""
Configuration for GPDeriv
Numerical defaults shared by every module, read once from config.json
"""

import json
import os
from pathlib import Path

import numpy as np


CONFIG_PATH = Path(os.environ.get('GPDERIV_CONFIG', Path(__file__).with_name('config.json')))


def load_config(path=CONFIG_PATH) -> dict:
    """
    Load numerical defaults from a JSON file

    Args:
        path: Path to the JSON configuration

    Returns:
        Dictionary of settings
    """
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


CONFIG = load_config()

# Kernels and factorization
SE_MAX_DERIV_ORDER = int(CONFIG['se_max_deriv_order'])
JITTER_START = float(CONFIG['jitter']['start'])
JITTER_STOP = float(CONFIG['jitter']['stop'])
JITTER_FACTOR = float(CONFIG['jitter']['factor'])
LOO_LEVERAGE_TOLERANCE = float(CONFIG['loo_leverage_tolerance'])

# Credible bands
BAND_SAMPLES = int(CONFIG['bands']['n_samples'])
BAND_LEVEL = float(CONFIG['bands']['level'])
SPLINE_INFLATION = float(CONFIG['bands']['spline_inflation'])

# Metropolis-Hastings
MH_STEP = float(CONFIG['mh']['step'])
MH_BURN_IN = int(CONFIG['mh']['burn_in'])
MH_SAMPLES = int(CONFIG['mh']['n_samples'])
SIGMA2_PRIOR_SHAPE = float(CONFIG['mh']['sigma2_shape'])
SIGMA2_PRIOR_RATE = float(CONFIG['mh']['sigma2_rate'])
LAMBDA_PRIOR_SHAPE = float(CONFIG['mh']['lambda_shape'])
LAMBDA_PRIOR_RATE = float(CONFIG['mh']['lambda_rate'])

# Spectral kernels
EXP_TRUNCATION = int(CONFIG['spectral']['exp_truncation'])
POLY_TRUNCATION = int(CONFIG['spectral']['poly_truncation'])
SUP_GRID_SIZE = int(CONFIG['spectral']['sup_grid_size'])
SPECTRAL_MAX_DERIV_ORDER = int(CONFIG['spectral']['max_deriv_order'])
SPECTRAL_TAIL_TOLERANCE = float(CONFIG['spectral']['tail_tolerance'])

# Simulation designs
HOLDER_TERMS = int(CONFIG['simulation']['holder_terms'])
EVAL_GRID_SIZE = int(CONFIG['simulation']['eval_grid_size'])
HOLDER_NOISE_VAR = float(CONFIG['simulation']['holder_noise_var'])
XSINX_NOISE_SD = float(CONFIG['simulation']['xsinx_noise_sd'])
FOURIER_SMOOTHNESS = float(CONFIG['simulation']['fourier_smoothness'])
KNOT_GRID = tuple(int(n) for n in CONFIG['simulation']['knot_grid'])
SIM_MH_SAMPLES = int(CONFIG['simulation']['mh_samples'])


def default_lambda_grid() -> np.ndarray:
    """Log-spaced regularization grid used by evidence maximization."""
    grid = CONFIG['lambda_grid']
    return np.logspace(np.log10(grid['low']), np.log10(grid['high']), int(grid['num']))


def default_nu_grid() -> np.ndarray:
    """Matérn smoothness candidates for cross-validation."""
    grid = CONFIG['nu_grid']
    step = float(grid['step'])
    return np.arange(float(grid['start']), float(grid['stop']) + step / 2, step)
