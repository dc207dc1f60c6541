"""
Simulation Harness for GPDeriv
Synthetic designs, per-repetition fitting of every method, RMSE tables and the
scaling and contraction studies
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression
from sklearn.metrics import mean_squared_error
from tqdm import tqdm

from src.bands import simultaneous_band
from src.config import (
    BAND_LEVEL,
    BAND_SAMPLES,
    EVAL_GRID_SIZE,
    FOURIER_SMOOTHNESS,
    HOLDER_NOISE_VAR,
    HOLDER_TERMS,
    KNOT_GRID,
    MH_BURN_IN,
    SIM_MH_SAMPLES,
    XSINX_NOISE_SD,
)
from src.errors import GPDerivError
from src.gp_core import Dataset, fit, posterior_deriv, posterior_mean_deriv
from src.hyperparam import average_posterior_mean, mmle_sigma2, sample_posterior_hyper
from src.kernels import KernelConfig, gram
from src.model_select import LambdaPolicy, pick_best, rank_candidates, rank_nu
from src.spectral import (
    SpectralFamily,
    fourier_basis,
    make_exp_kernel,
    make_poly_kernel,
    rate_check_effective_dim,
)
from src.spline_baseline import bspline_band, bspline_deriv_mean, select_knots


logger = logging.getLogger(__name__)

METHODS = ('matern', 'se', 'sobolev', 'cv', 'bspline', 'matern_fb', 'se_fb', 'sobolev_fb')
DEFAULT_METHODS = ('matern', 'se', 'sobolev', 'cv', 'bspline')
TARGETS = {0: 'f', 1: 'df'}


class Design(str, Enum):
    HOLDER = 'holder'
    XSINX = 'xsinx'
    FOURIER = 'fourier'


# ---------------------------------------------------------------------------
# Truth functions
# ---------------------------------------------------------------------------

def truth_holder(x, k: int = 0, n_terms: int = HOLDER_TERMS) -> np.ndarray:
    """f0(x) = sqrt2 sum_i i^-4 sin(i) cos((i - 1/2) pi x) and its derivatives."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    index = np.arange(1, n_terms + 1)
    omega = (index - 0.5) * np.pi
    weights = np.sqrt(2.0) * index ** -4.0 * np.sin(index) * omega ** k
    return np.cos(omega[None, :] * x[:, None] + 0.5 * np.pi * k) @ weights


def truth_xsinx(x, k: int = 0) -> np.ndarray:
    """f0(x) = x sin(x) / 10 and its first two derivatives."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if k == 0:
        return x * np.sin(x) / 10.0
    if k == 1:
        return (np.sin(x) + x * np.cos(x)) / 10.0
    if k == 2:
        return (2.0 * np.cos(x) - x * np.sin(x)) / 10.0
    raise ValueError(f"x sin x truth is available up to k=2, got {k}")


def truth_fourier(x, k: int = 0, smoothness: float = FOURIER_SMOOTHNESS,
                  n_terms: int = HOLDER_TERMS) -> np.ndarray:
    """Periodic truth sum_i sin(i) i^-(s + 1.5) psi_i(x) on the Fourier basis."""
    index = np.arange(1, n_terms + 1)
    coefficients = np.sin(index) * index ** -(smoothness + 1.5)
    return fourier_basis(x, n_terms, k) @ coefficients


def truth(design: Design, x, k: int = 0) -> np.ndarray:
    design = Design(design)
    if design is Design.HOLDER:
        return truth_holder(x, k)
    if design is Design.XSINX:
        return truth_xsinx(x, k)
    return truth_fourier(x, k)


# ---------------------------------------------------------------------------
# Experiment configuration and data generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation study: a design, a sample size and the methods to compare."""

    design: Design
    n: int
    noise_sd: Optional[float] = None
    n_reps: int = 1
    methods: Tuple[str, ...] = DEFAULT_METHODS
    seed: int = 0
    band_level: float = BAND_LEVEL
    band_samples: int = BAND_SAMPLES
    lambda_grid: Optional[Tuple[float, ...]] = None
    nu_grid: Optional[Tuple[float, ...]] = None
    knot_grid: Tuple[int, ...] = KNOT_GRID
    mh_samples: int = SIM_MH_SAMPLES
    mh_burn_in: int = MH_BURN_IN
    n_jobs: int = 1
    grid_size: int = EVAL_GRID_SIZE

    def __post_init__(self):
        object.__setattr__(self, 'design', Design(self.design))
        object.__setattr__(self, 'methods', tuple(self.methods))
        if self.n < 10:
            raise ValueError(f"n must be >= 10, got {self.n}")
        if self.n_reps < 1:
            raise ValueError(f"n_reps must be >= 1, got {self.n_reps}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ValueError(
                f"unknown method(s) {', '.join(unknown) or '(none given)'}; "
                f"valid methods: {', '.join(METHODS)}"
            )
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    @property
    def sigma(self) -> float:
        if self.noise_sd is not None:
            return float(self.noise_sd)
        if self.design is Design.XSINX:
            return XSINX_NOISE_SD
        return float(np.sqrt(HOLDER_NOISE_VAR))

    @property
    def domain(self) -> Tuple[float, float]:
        return (0.0, 10.0) if self.design is Design.XSINX else (0.0, 1.0)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(*self.domain, self.grid_size)


def rep_seed(config: ExperimentConfig, rep_index: int, stream: int = 0) -> int:
    """Integer seed derived from (seed, rep_index, stream)."""
    sequence = np.random.SeedSequence([int(config.seed), int(rep_index), int(stream)])
    return int(sequence.generate_state(1)[0])


def gen_data(config: ExperimentConfig, rep_index: int) -> Dataset:
    """
    Draw one synthetic dataset

    Hölder and Fourier designs use X ~ Unif[0, 1]; x sin x uses a regular grid on
    [0, 10]. Noise is Gaussian with sd config.sigma.
    """
    rng = np.random.default_rng([int(config.seed), int(rep_index)])
    if config.design is Design.XSINX:
        x = np.linspace(0.0, 10.0, config.n)
    else:
        x = np.sort(rng.uniform(0.0, 1.0, config.n))
    y = truth(config.design, x, 0) + config.sigma * rng.standard_normal(config.n)
    return Dataset(x, y)


def nested_datasets(config: ExperimentConfig, rep_index: int, ns: Sequence[int]) -> list:
    """
    Datasets of sizes ns that share one design and noise stream

    The size-n dataset holds the first n points of a single draw of max(ns) points,
    so every smaller dataset is a prefix of every larger one. Only the uniform
    designs nest.
    """
    if config.design is Design.XSINX:
        raise ValueError("nested datasets need a uniform design, not xsinx")
    n_max = int(max(ns))
    rng = np.random.default_rng([int(config.seed), int(rep_index)])
    x = rng.uniform(0.0, 1.0, n_max)
    y = truth(config.design, x, 0) + config.sigma * rng.standard_normal(n_max)
    return [Dataset(x[:n], y[:n]) for n in ns]


def rmse(estimate, target) -> float:
    """Root mean squared error between two vectors."""
    return float(np.sqrt(mean_squared_error(np.asarray(target), np.asarray(estimate))))


# ---------------------------------------------------------------------------
# Per-repetition fitting
# ---------------------------------------------------------------------------

@dataclass
class MethodEstimate:
    """Grid estimates of f and f' for one method, plus the f' band when available."""

    method: str
    estimates: dict
    band: Optional[object] = None
    detail: str = ''


def _policy(config: ExperimentConfig) -> LambdaPolicy:
    grid = None if config.lambda_grid is None else np.asarray(config.lambda_grid)
    return LambdaPolicy(lambda_grid=grid)


def _gp_estimate(method: str, result, config: ExperimentConfig, seed: int) -> MethodEstimate:
    grid = config.grid
    estimates = {}
    band = None
    for k in TARGETS:
        post = posterior_deriv(result.model, k, grid)
        estimates[k] = post.mean
        if k == 1:
            band = simultaneous_band(post, config.band_level, config.band_samples, seed)
    return MethodEstimate(method, estimates, band, result.kernel.label)


def _fully_bayes_estimate(method: str, data: Dataset, result, config: ExperimentConfig,
                          seed: int) -> MethodEstimate:
    kernel = result.kernel
    K = result.model.gram_matrix
    chain = sample_posterior_hyper(
        data, kernel,
        n_samples=config.mh_samples,
        burn_in=config.mh_burn_in,
        seed=seed,
        init=(result.model.lam, result.model.sigma2),
        gram_matrix=K,
    )
    estimates = {k: average_posterior_mean(data, kernel, chain, k, config.grid, K)
                 for k in TARGETS}
    return MethodEstimate(method, estimates, None,
                          f"{kernel.label} accept={chain.accept_rate:.3f}")


def estimate_methods(data: Dataset, config: ExperimentConfig, rep_index: int) -> list:
    """Fit every configured method on one dataset; failures become None entries."""
    policy = _policy(config)
    band_seed = rep_seed(config, rep_index, 1)
    mh_seed = rep_seed(config, rep_index, 2)
    tuned = {}

    def tuned_result(name):
        if name not in tuned:
            if name == 'matern':
                tuned[name] = rank_nu(data, config.nu_grid, policy)
            elif name == 'se':
                tuned[name] = rank_candidates(data, [KernelConfig.squared_exponential()], policy)
            elif name == 'sobolev':
                tuned[name] = rank_candidates(data, [KernelConfig.sobolev()], policy)
            else:
                tuned[name] = pick_best([tuned_result(m) for m in ('matern', 'se', 'sobolev')])
        return tuned[name]

    out = []
    for method in config.methods:
        try:
            if method == 'bspline':
                model = select_knots(data, config.knot_grid, config.domain)
                estimates = {k: bspline_deriv_mean(model, k, config.grid) for k in TARGETS}
                band = bspline_band(model, 1, config.grid, config.band_level,
                                    config.band_samples, band_seed)
                out.append(MethodEstimate(method, estimates, band, f"J={model.J}"))
            elif method.endswith('_fb'):
                base = method[:-len('_fb')]
                out.append(_fully_bayes_estimate(method, data, tuned_result(base), config, mh_seed))
            else:
                out.append(_gp_estimate(method, tuned_result(method), config, band_seed))
        except (GPDerivError, np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("Rep %d: method %s failed: %s", rep_index, method, exc)
            out.append(MethodEstimate(method, {}, None, f"failed: {exc}"))
    return out


def run_repetition(config: ExperimentConfig, rep_index: int) -> list:
    """One repetition: generate data, fit all methods, score on the grid."""
    data = gen_data(config, rep_index)
    grid = config.grid
    rows = []
    for estimate in estimate_methods(data, config, rep_index):
        for k, target in TARGETS.items():
            value = estimate.estimates.get(k)
            covered = np.nan
            if k == 1 and estimate.band is not None:
                covered = float(estimate.band.contains(truth(config.design, grid, 1)))
            rows.append({
                'rep': rep_index,
                'method': estimate.method,
                'target': target,
                'rmse': np.nan if value is None else rmse(value, truth(config.design, grid, k)),
                'covered': covered,
                'detail': estimate.detail,
            })
    return rows


# ---------------------------------------------------------------------------
# Experiments and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    per_rep: pd.DataFrame
    aggregate: pd.DataFrame


def aggregate_results(per_rep: pd.DataFrame) -> pd.DataFrame:
    """Mean, sd, median RMSE, success/failure counts and band coverage per method/target."""
    rows = []
    for (method, target), group in per_rep.groupby(['method', 'target'], sort=False):
        values = group['rmse'].dropna()
        covered = group['covered'].dropna()
        rows.append({
            'method': method,
            'target': target,
            'mean_rmse': values.mean() if len(values) else np.nan,
            'sd_rmse': values.std(ddof=1) if len(values) > 1 else np.nan,
            'median_rmse': values.median() if len(values) else np.nan,
            'n_ok': int(len(values)),
            'n_failed': int(group['rmse'].isna().sum()),
            'coverage': covered.mean() if len(covered) else np.nan,
        })
    return pd.DataFrame(rows)


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """
    Run all repetitions of an experiment

    Repetitions run in a process pool when config.n_jobs > 1; each repetition seeds
    its own RNG from (seed, rep_index), so results do not depend on n_jobs.
    """
    reps = range(config.n_reps)
    if config.n_jobs > 1:
        workers = min(config.n_jobs, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            iterator = pool.map(run_repetition, [config] * config.n_reps, reps)
            chunks = list(tqdm(iterator, total=config.n_reps, disable=not progress,
                               desc=f"{config.design.value} n={config.n}"))
    else:
        chunks = [run_repetition(config, rep)
                  for rep in tqdm(reps, disable=not progress,
                                  desc=f"{config.design.value} n={config.n}")]

    per_rep = pd.DataFrame([row for chunk in chunks for row in chunk],
                           columns=['rep', 'method', 'target', 'rmse', 'covered', 'detail'])
    return ExperimentResult(config, per_rep, aggregate_results(per_rep))


def write_results(result: ExperimentResult, out_dir) -> Tuple[str, str]:
    """Write per_rep.csv and aggregate.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    per_rep_path = os.path.join(out_dir, 'per_rep.csv')
    aggregate_path = os.path.join(out_dir, 'aggregate.csv')
    result.per_rep.to_csv(per_rep_path, index=False, float_format='%.17g')
    result.aggregate.to_csv(aggregate_path, index=False, float_format='%.17g')
    return per_rep_path, aggregate_path


# ---------------------------------------------------------------------------
# Scaling and contraction studies
# ---------------------------------------------------------------------------

def scaling_report(cases: Sequence[Tuple[str, float, int, Sequence[float]]]) -> pd.DataFrame:
    """
    Slopes of log kappa_hat_m^2 for (family, param, m, lambda_list) cases

    The expected slope is 2m + 1 (exp) or (2m + 1) / (2 alpha) (poly).
    """
    rows = []
    for family, param, m, lams in cases:
        family = SpectralFamily(family)
        slope = rate_check_effective_dim(family, param, m, lams)
        expected = 2 * m + 1 if family is SpectralFamily.EXPONENTIAL else (2 * m + 1) / (2 * param)
        rows.append({'family': family.value, 'param': param, 'm': m,
                     'slope': slope, 'expected': expected, 'error': slope - expected})
    return pd.DataFrame(rows)


def contraction_trend(family: SpectralFamily = SpectralFamily.POLYNOMIAL, param: float = 2.0,
                      ns: Sequence[int] = (100, 200, 400, 800), n_seeds: int = 10,
                      k: int = 1, M: int = 1000, seed: int = 0) -> Tuple[pd.DataFrame, float]:
    """
    Posterior-mean RMSE of f^(k) for a spectral kernel as n grows

    lambda is (log n / n)^(2 alpha / (2 alpha + 1)) for the polynomial family and
    log n / n for the exponential family; sigma^2 is the MMLE. Within a seed the
    datasets are nested (see nested_datasets), so the sizes share design and noise.

    Returns:
        (per-n table with median RMSE, least-squares slope of log median RMSE on log n)
    """
    family = SpectralFamily(family)
    kernel = make_poly_kernel(param, M) if family is SpectralFamily.POLYNOMIAL else make_exp_kernel(param, M)
    ns = [int(n) for n in ns]
    config = ExperimentConfig(Design.FOURIER, max(ns), np.sqrt(HOLDER_NOISE_VAR), seed=seed)
    target = truth(Design.FOURIER, config.grid, k)

    lams = []
    for n in ns:
        if family is SpectralFamily.POLYNOMIAL:
            lams.append((np.log(n) / n) ** (2 * param / (2 * param + 1)))
        else:
            lams.append(np.log(n) / n)

    errors = np.empty((n_seeds, len(ns)))
    for rep in range(n_seeds):
        for j, data in enumerate(nested_datasets(config, rep, ns)):
            K = gram(kernel, data.x)
            sigma2 = max(mmle_sigma2(data, kernel, lams[j], K), np.finfo(float).tiny)
            model = fit(data, kernel, lams[j], sigma2, gram_matrix=K)
            errors[rep, j] = rmse(posterior_mean_deriv(model, k, config.grid), target)

    table = pd.DataFrame({'n': ns, 'lambda': lams,
                          'median_rmse': np.median(errors, axis=0),
                          'mean_rmse': np.mean(errors, axis=0)})
    trend = LinearRegression().fit(np.log(table[['n']].to_numpy(dtype=float)),
                                   np.log(table['median_rmse'].to_numpy()))
    return table, float(trend.coef_[0])
