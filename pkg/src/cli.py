"""
Command-Line Interface for GPDeriv
fit / predict / band / select / simulate / rates / contraction subcommands
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Optional

import numpy as np
import pandas as pd

from src.bands import BandKind, pointwise_band, simultaneous_band
from src.config import (
    BAND_LEVEL,
    BAND_SAMPLES,
    SIM_MH_SAMPLES,
    default_lambda_grid,
    default_nu_grid,
)
from src.errors import DataError, GPDerivError
from src.gp_core import Dataset, DerivPosterior, FittedGP, NoiseModel, fit, posterior_deriv
from src.kernels import KernelConfig, KernelFamily
from src.model_select import LambdaPolicy, rank_candidates, rank_nu
from src.sim_harness import (
    METHODS,
    Design,
    ExperimentConfig,
    contraction_trend,
    run_experiment,
    scaling_report,
    write_results,
)
from src.spectral import SpectralFamily
from src.utils import data_digest, parse_grid


logger = logging.getLogger(__name__)

MODEL_FORMAT = 'gpderiv-model/1'

KERNEL_NAMES = ('matern', 'se', 'sobolev')

# refit alpha must agree with the stored one to this relative tolerance
ALPHA_RTOL = 1e-8


# ---------------------------------------------------------------------------
# Input / output helpers
# ---------------------------------------------------------------------------

def _parse_cell(cell) -> float:
    try:
        value = float(cell)
    except (TypeError, ValueError):
        return np.nan
    return value if np.isfinite(value) else np.nan


def load_dataset_csv(path: str) -> Dataset:
    """
    Read x, y and optional sigma_y columns from a CSV file with a header row

    Columns named x, y, sigma_y are used when present, otherwise the first and second
    columns, plus the third when the file has exactly three (e.g. year, gmsl, sigma_y).
    Values are parsed with correctly rounded float conversion, so a file written at
    17 significant digits reads back bit for bit.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False,
                            skip_blank_lines=False)
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"{path}: {exc}") from exc

    columns = [str(c).strip().lower() for c in frame.columns]
    frame.columns = columns
    if len(columns) < 2:
        raise DataError(f"{path}: need at least two columns (x, y), found {len(columns)}")

    # frame index i is physical line i + 2 (header is line 1); blank lines keep their index
    frame = frame.fillna('').apply(lambda col: col.str.strip())
    frame = frame[~(frame == '').all(axis=1)]
    if frame.empty:
        raise DataError(f"{path}: no data rows")

    x_col = 'x' if 'x' in columns else columns[0]
    y_col = 'y' if 'y' in columns else columns[1]
    if 'sigma_y' in columns:
        sd_col = 'sigma_y'
    else:
        sd_col = columns[2] if len(columns) == 3 else None

    values = {}
    for name in filter(None, (x_col, y_col, sd_col)):
        raw = frame[name]
        parsed = np.array([_parse_cell(cell) for cell in raw], dtype=float)
        bad = np.flatnonzero(np.isnan(parsed))
        if bad.size:
            row = int(bad[0])
            line = int(frame.index[row]) + 2
            raise DataError(
                f"{path}: line {line}: non-numeric value {raw.iloc[row]!r} in column '{name}'"
            )
        values[name] = parsed

    return Dataset(values[x_col], values[y_col], values[sd_col] if sd_col else None)


def _json_float(value: float) -> float:
    return float(format(float(value), '.17g'))


def kernel_to_dict(kernel: KernelConfig) -> dict:
    return {'family': kernel.family.value,
            'nu': None if kernel.nu is None else _json_float(kernel.nu),
            'max_deriv_order': kernel.max_deriv_order}


def kernel_from_dict(payload: dict) -> KernelConfig:
    return KernelConfig(KernelFamily(payload['family']), payload.get('nu'),
                        payload.get('max_deriv_order'))


class ScaledModel:
    """FittedGP on rescaled inputs u = (x - offset) / scale."""

    def __init__(self, model: FittedGP, offset: float = 0.0, scale: float = 1.0):
        self.model = model
        self.offset = float(offset)
        self.scale = float(scale)

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def posterior(self, k: int, grid):
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        post = posterior_deriv(self.model, k, self.to_unit(grid))
        factor = self.scale ** -k
        return DerivPosterior(k=k, grid=grid, mean=post.mean * factor,
                              cov=post.cov * factor * factor)

    @property
    def training_x(self) -> np.ndarray:
        return self.model.data.x * self.scale + self.offset


def save_model(scaled: ScaledModel, path: str, original: Dataset):
    model = scaled.model
    payload = {
        'format': MODEL_FORMAT,
        'kernel': kernel_to_dict(model.kernel),
        'lambda': _json_float(model.lam),
        'sigma2': _json_float(model.sigma2),
        'noise_model': model.noise_model.value,
        'input_offset': _json_float(scaled.offset),
        'input_scale': _json_float(scaled.scale),
        'data': {
            'x': [_json_float(v) for v in original.x],
            'y': [_json_float(v) for v in original.y],
            'sigma_y': None if original.obs_sd is None else [_json_float(v) for v in original.obs_sd],
        },
        'digest': data_digest(original.x, original.y, original.obs_sd),
        'alpha': [_json_float(v) for v in model.alpha],
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2)


def load_model(path: str) -> ScaledModel:
    """Rebuild the fitted model described by a model file."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid model file ({exc})") from exc
    if payload.get('format') != MODEL_FORMAT:
        raise DataError(f"{path}: unsupported model format {payload.get('format')!r}")

    data = payload['data']
    original = Dataset(data['x'], data['y'], data.get('sigma_y'))
    if data_digest(original.x, original.y, original.obs_sd) != payload['digest']:
        raise DataError(f"{path}: data digest mismatch")
    offset, scale = payload['input_offset'], payload['input_scale']
    unit = Dataset((original.x - offset) / scale, original.y, original.obs_sd)
    model = fit(unit, kernel_from_dict(payload['kernel']), payload['lambda'],
                payload['sigma2'], NoiseModel(payload['noise_model']))

    alpha = np.asarray(payload.get('alpha', ()), dtype=float)
    if alpha.shape != model.alpha.shape:
        raise DataError(f"{path}: alpha has {alpha.size} entries, expected {model.n}")
    atol = ALPHA_RTOL * float(np.max(np.abs(alpha)))
    if not np.allclose(model.alpha, alpha, rtol=ALPHA_RTOL, atol=atol):
        raise DataError(f"{path}: stored alpha does not match the refitted model")
    alpha.setflags(write=False)
    return ScaledModel(replace(model, alpha=alpha), offset, scale)


def _write_frame(frame: pd.DataFrame, path: str):
    frame.to_csv(path, index=False, float_format='%.17g')


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _split_names(text: str) -> list:
    return [name.strip() for name in text.split(',') if name.strip()]


def _parse_kernel(args) -> Optional[KernelConfig]:
    if args.kernel == 'matern':
        if args.nu == 'auto':
            return None
        return KernelConfig.matern(float(args.nu))
    if args.kernel == 'se':
        return KernelConfig.squared_exponential()
    if args.kernel == 'sobolev':
        return KernelConfig.sobolev()
    return None


def cmd_fit(args) -> int:
    """Fit a GP and write the model file."""
    print(f"📥 Loading data from {args.input}...")
    original = load_dataset_csv(args.input)
    noise_model = NoiseModel.HETEROSCEDASTIC if args.hetero else NoiseModel.HOMOSCEDASTIC
    if args.hetero and not original.has_obs_sd:
        raise DataError(f"{args.input}: --hetero needs a sigma_y column")
    print(f"   Observations: {original.n}")

    offset, scale = 0.0, 1.0
    if args.rescale:
        offset = float(np.min(original.x))
        scale = float(np.ptp(original.x)) or 1.0
    data = Dataset((original.x - offset) / scale, original.y, original.obs_sd)

    fixed_lambda = None if args.lam == 'auto' else float(args.lam)
    fixed_sigma2 = None if args.sigma2 == 'auto' else float(args.sigma2)
    policy = LambdaPolicy(lambda_grid=default_lambda_grid(), fixed_lambda=fixed_lambda,
                          fixed_sigma2=fixed_sigma2, noise_model=noise_model)

    kernel = _parse_kernel(args)
    print("\n🔄 Tuning hyperparameters...")
    if kernel is None:
        if args.kernel == 'matern':
            nu_grid = default_nu_grid() if args.nu_grid is None else parse_grid(args.nu_grid)
            result = rank_nu(data, nu_grid, policy)
        else:
            candidates = [KernelConfig.matern(2.5), KernelConfig.squared_exponential(),
                          KernelConfig.sobolev()]
            result = rank_candidates(data, candidates, policy)
        model = result.model
        print(f"   Selected kernel: {result.kernel.label} (LOO {result.score:.6g})")
    else:
        model = policy.fit(data, kernel)

    print(f"   Kernel: {model.kernel.label}")
    print(f"   lambda: {model.lam:.6g}")
    print(f"   sigma2: {model.sigma2:.6g}")

    save_model(ScaledModel(model, offset, scale), args.out, original)
    print(f"\n✅ Model saved to: {args.out}")
    return 0


def cmd_predict(args) -> int:
    """Posterior mean (and band) of f^(k) on a grid."""
    scaled = load_model(args.model)
    grid = scaled.training_x if args.grid is None else parse_grid(args.grid)
    post = scaled.posterior(args.k, grid)

    band_kind = args.band
    if band_kind == 'none':
        frame = pd.DataFrame({'x': post.grid, 'mean': post.mean})
    else:
        if BandKind(band_kind) is BandKind.SIMULTANEOUS:
            band = simultaneous_band(post, args.level, args.samples, args.seed)
        else:
            band = pointwise_band(post, args.level)
        frame = band.to_frame()

    _write_frame(frame, args.out)
    print(f"✅ Wrote f^({args.k}) on {len(grid)} grid points to: {args.out}")
    return 0


def cmd_select(args) -> int:
    """LOO score table for candidate kernels."""
    data = load_dataset_csv(args.input)
    policy = LambdaPolicy(lambda_grid=default_lambda_grid())
    names = _split_names(args.candidates)

    tables = []
    best = None
    for name in names:
        if name == 'matern':
            nu_grid = default_nu_grid() if args.nu_grid is None else parse_grid(args.nu_grid)
            result = rank_nu(data, nu_grid, policy)
        elif name == 'se':
            result = rank_candidates(data, [KernelConfig.squared_exponential()], policy)
        else:
            result = rank_candidates(data, [KernelConfig.sobolev()], policy)
        tables.append(result.scores)
        if best is None or result.score < best.score:
            best = result

    table = pd.concat(tables, ignore_index=True)
    _write_frame(table, args.out)
    print(f"🏆 Best kernel: {best.kernel.label} (LOO {best.score:.6g})")
    print(f"✅ Scores saved to: {args.out}")
    return 0


def cmd_simulate(args) -> int:
    """Run a simulation study and write per-rep and aggregate CSVs."""
    methods = tuple(m.strip() for m in args.methods.split(',') if m.strip())
    config = ExperimentConfig(
        design=Design(args.design), n=args.n, noise_sd=args.sigma, n_reps=args.reps,
        methods=methods, seed=args.seed, n_jobs=args.jobs,
        band_samples=args.samples, mh_samples=args.mh_samples,
    )
    print(f"🚀 Simulating {config.design.value} design: n={config.n}, sigma={config.sigma:g}, "
          f"reps={config.n_reps}")
    result = run_experiment(config, progress=args.progress)
    per_rep_path, aggregate_path = write_results(result, args.out)

    print("\n" + "=" * 60)
    print("📈 RESULTS:")
    print("=" * 60)
    print(result.aggregate.to_string(index=False))
    print("=" * 60)
    print(f"\n✅ Per-rep results: {per_rep_path}")
    print(f"✅ Aggregate results: {aggregate_path}")
    return 0


def cmd_rates(args) -> int:
    """Scaling-law slope of the effective dimension."""
    low, high, num = args.lambdas.split(':')
    lams = np.logspace(float(low), float(high), int(num))
    table = scaling_report([(args.family, args.param, args.m, lams)])
    if args.out:
        _write_frame(table, args.out)
    print(table.to_string(index=False))
    return 0


def cmd_contraction(args) -> int:
    """Contraction trend of the spectral-kernel posterior mean."""
    ns = [int(n) for n in args.ns.split(',')]
    table, slope = contraction_trend(SpectralFamily(args.family), args.param, ns,
                                     args.seeds, args.k, args.truncation, args.seed)
    if args.out:
        _write_frame(table, args.out)
    print(table.to_string(index=False))
    print(f"\n📉 log-RMSE slope: {slope:.4f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_band_options(parser, default_band):
    parser.add_argument('model', help='Model file written by fit')
    parser.add_argument('--k', type=int, default=0, help='Derivative order')
    parser.add_argument('--grid', default=None, help='Grid a:b:m (default: training x)')
    parser.add_argument('--band', choices=['none', 'pointwise', 'simultaneous'],
                        default=default_band)
    parser.add_argument('--level', type=float, default=BAND_LEVEL)
    parser.add_argument('--samples', type=int, default=BAND_SAMPLES)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--out', required=True, help='Output CSV')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gpderiv',
        description='Plug-in Gaussian process estimation of regression derivatives',
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('fit', help='Fit a GP to a CSV dataset')
    p.add_argument('input', help='CSV with x, y[, sigma_y] columns')
    p.add_argument('--kernel', choices=[*KERNEL_NAMES, 'auto'], default='matern')
    p.add_argument('--nu', default='auto', help="Matérn smoothness or 'auto' (LOO)")
    p.add_argument('--nu-grid', default=None, help='nu grid a:b:m for --nu auto')
    p.add_argument('--lambda', dest='lam', default='auto', help="lambda or 'auto' (evidence)")
    p.add_argument('--sigma2', default='auto', help="sigma^2 or 'auto' (MMLE)")
    p.add_argument('--hetero', action='store_true', help='Use per-observation sigma_y')
    p.add_argument('--rescale', action='store_true', help='Map x to [0, 1] before fitting')
    p.add_argument('--out', required=True, help='Output model JSON')
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser('predict', help='Posterior of f^(k) on a grid')
    _add_band_options(p, 'none')
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser('band', help='Credible band for f^(k) on a grid')
    _add_band_options(p, 'simultaneous')
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser('select', help='LOO scores of candidate kernels')
    p.add_argument('input', help='CSV with x, y columns')
    p.add_argument('--candidates', default='matern,se,sobolev')
    p.add_argument('--nu-grid', default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser('simulate', help='Run a simulation study')
    p.add_argument('--design', choices=[d.value for d in Design], required=True)
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--sigma', type=float, default=None)
    p.add_argument('--reps', type=int, default=1)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--methods', default='matern,se,sobolev,cv,bspline')
    p.add_argument('--samples', type=int, default=BAND_SAMPLES)
    p.add_argument('--mh-samples', type=int, default=SIM_MH_SAMPLES)
    p.add_argument('--jobs', type=int, default=1)
    p.add_argument('--progress', action='store_true')
    p.add_argument('--out', required=True, help='Output directory')
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('rates', help='Effective-dimension scaling slope')
    p.add_argument('--family', choices=[f.value for f in SpectralFamily], required=True)
    p.add_argument('--param', type=float, required=True)
    p.add_argument('--m', type=int, default=0)
    p.add_argument('--lambdas', default='-8:-2:7', help='log10 range a:b:m')
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_rates)

    p = sub.add_parser('contraction', help='Spectral-kernel contraction trend')
    p.add_argument('--family', choices=[f.value for f in SpectralFamily], default='poly')
    p.add_argument('--param', type=float, default=2.0)
    p.add_argument('--ns', default='100,200,400,800')
    p.add_argument('--seeds', type=int, default=10)
    p.add_argument('--k', type=int, default=1)
    p.add_argument('--truncation', type=int, default=1000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', default=None)
    p.set_defaults(handler=cmd_contraction)

    return parser


def main(argv=None) -> int:
    """
    Entry point; returns the process exit code

    0 on success, 1 on runtime errors; usage errors exit with 2 from argparse.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')

    if args.command == 'simulate':
        unknown = [m for m in args.methods.split(',') if m.strip() and m.strip() not in METHODS]
        if unknown:
            parser.error(f"unknown method(s) {', '.join(unknown)}; "
                         f"valid methods: {', '.join(METHODS)}")
        if args.reps < 1 or args.n < 10:
            parser.error("--reps must be >= 1 and --n must be >= 10")
    if args.command == 'select':
        unknown = [c for c in _split_names(args.candidates) if c not in KERNEL_NAMES]
        if unknown or not _split_names(args.candidates):
            parser.error(f"unknown kernel(s) {', '.join(unknown) or '(none given)'}; "
                         f"valid kernels: {', '.join(KERNEL_NAMES)}")
    if args.command == 'fit' and args.nu != 'auto' and args.kernel != 'matern':
        parser.error(f"--nu applies only to --kernel matern, not {args.kernel}")
    if args.command in ('predict', 'band') and not 0.0 < args.level < 1.0:
        parser.error("--level must lie in (0, 1)")
    for name in ('lam', 'sigma2'):
        value = getattr(args, name, 'auto')
        if value != 'auto':
            try:
                if not float(value) > 0:
                    raise ValueError
            except ValueError:
                parser.error(f"--{'lambda' if name == 'lam' else name} must be 'auto' "
                             f"or a positive number")

    try:
        return args.handler(args)
    except (GPDerivError, OSError, ValueError) as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
