import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from src.sim_harness import (
    Design,
    ExperimentConfig,
    aggregate_results,
    contraction_trend,
    gen_data,
    nested_datasets,
    rep_seed,
    rmse,
    run_experiment,
    scaling_report,
    truth,
    truth_holder,
    truth_xsinx,
    write_results,
)


def test_holder_derivative_vanishes_at_zero():
    assert_allclose(truth_holder(0.0, 1), 0.0, atol=1e-12)


def test_holder_value_at_zero_matches_direct_sum():
    index = np.arange(1, 1001)
    expected = np.sqrt(2.0) * np.sum(index ** -4.0 * np.sin(index))
    assert_allclose(truth_holder(0.0, 0), expected, rtol=1e-13)


def test_holder_truncation_is_stable(rng):
    x = rng.uniform(0.0, 1.0, 100)
    assert_allclose(truth_holder(x, 0, 1000), truth_holder(x, 0, 2000), atol=1e-9)


def test_holder_derivative_matches_finite_difference():
    x = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    fd = (truth_holder(x + h) - truth_holder(x - h)) / (2 * h)
    assert_allclose(truth_holder(x, 1), fd, rtol=1e-5, atol=1e-7)


def test_xsinx_values():
    assert_allclose(truth_xsinx(0.0, 1), 0.0)
    assert_allclose(truth_xsinx(np.pi / 2, 1), 0.1, rtol=1e-15)
    assert_allclose(truth_xsinx(np.pi, 0), 0.0, atol=1e-16)
    with pytest.raises(ValueError):
        truth_xsinx(1.0, 3)


def test_fourier_truth_is_periodic():
    assert_allclose(truth(Design.FOURIER, 0.0, 1), truth(Design.FOURIER, 1.0, 1), atol=1e-9)


def test_noiseless_data_equals_the_truth():
    config = ExperimentConfig(Design.HOLDER, 30, noise_sd=0.0)
    data = gen_data(config, 0)
    assert np.array_equal(data.y, truth_holder(data.x))


def test_xsinx_design_is_a_regular_grid():
    data = gen_data(ExperimentConfig(Design.XSINX, 100), 3)
    assert data.x[0] == 0.0 and data.x[-1] == 10.0
    assert_allclose(np.diff(data.x), 10.0 / 99.0, rtol=1e-12)


def test_same_seed_gives_same_data():
    config = ExperimentConfig(Design.HOLDER, 40, seed=9)
    first, second = gen_data(config, 2), gen_data(config, 2)
    assert np.array_equal(first.x, second.x) and np.array_equal(first.y, second.y)
    assert not np.array_equal(first.y, gen_data(config, 3).y)


def test_holder_default_noise_is_variance_point_one():
    assert_allclose(ExperimentConfig(Design.HOLDER, 10).sigma, np.sqrt(0.1))
    assert ExperimentConfig(Design.XSINX, 10).sigma == 0.1


def test_rep_seeds_differ_by_stream():
    config = ExperimentConfig(Design.HOLDER, 10, seed=1)
    assert rep_seed(config, 0, 1) != rep_seed(config, 0, 2)
    assert rep_seed(config, 4, 1) == rep_seed(config, 4, 1)


def test_rmse_examples():
    v = np.linspace(0.0, 1.0, 100)
    assert rmse(v, v) == 0.0
    assert_allclose(rmse(v + 0.3, v), 0.3, rtol=1e-12)
    assert_allclose(rmse(np.tile([1.0, -1.0], 50), np.zeros(100)), 1.0)


def test_rmse_is_permutation_invariant(rng):
    a, b = rng.standard_normal(100), rng.standard_normal(100)
    order = rng.permutation(100)
    assert_allclose(rmse(a[order], b[order]), rmse(a, b), rtol=1e-14)


def test_invalid_configs():
    with pytest.raises(ValueError, match='valid methods'):
        ExperimentConfig(Design.XSINX, 50, methods=('matern', 'kriging'))
    with pytest.raises(ValueError):
        ExperimentConfig(Design.XSINX, 9)
    with pytest.raises(ValueError):
        ExperimentConfig(Design.XSINX, 50, n_reps=0)


def test_noiseless_sobolev_fit_on_xsinx():
    config = ExperimentConfig(Design.XSINX, 100, noise_sd=0.0, methods=('sobolev',))
    result = run_experiment(config)
    row = result.aggregate.set_index('target').loc['f']
    assert row['mean_rmse'] <= 1e-2


def test_experiment_tables_have_one_row_per_method_and_target():
    methods = ('matern', 'sobolev', 'cv', 'bspline')
    config = ExperimentConfig(Design.XSINX, 40, 0.1, n_reps=2, methods=methods,
                              nu_grid=(2.5, 3.5), band_samples=200)
    result = run_experiment(config)
    assert len(result.per_rep) == 2 * len(methods) * 2
    assert len(result.aggregate) == len(methods) * 2
    assert set(result.aggregate['n_failed']) == {0}


def test_aggregates_are_recomputable_from_per_rep(tmp_path):
    config = ExperimentConfig(Design.HOLDER, 30, n_reps=3, methods=('se', 'sobolev'),
                              band_samples=200)
    result = run_experiment(config)
    per_rep_path, _ = write_results(result, tmp_path)
    reloaded = pd.read_csv(per_rep_path)
    recomputed = aggregate_results(reloaded)
    assert_allclose(recomputed['mean_rmse'], result.aggregate['mean_rmse'], rtol=1e-15)
    assert_allclose(recomputed['median_rmse'], result.aggregate['median_rmse'], rtol=1e-15)
    assert_allclose(recomputed['coverage'].dropna(), result.aggregate['coverage'].dropna())


def test_experiment_is_deterministic(tmp_path):
    config = ExperimentConfig(Design.HOLDER, 25, n_reps=2, methods=('matern', 'bspline'),
                              nu_grid=(2.5,), band_samples=100, seed=4)
    write_results(run_experiment(config), tmp_path / 'a')
    write_results(run_experiment(config), tmp_path / 'b')
    for name in ('per_rep.csv', 'aggregate.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_parallel_run_matches_serial():
    base = dict(design=Design.XSINX, n=30, n_reps=2, methods=('sobolev',), band_samples=100)
    serial = run_experiment(ExperimentConfig(**base))
    parallel = run_experiment(ExperimentConfig(**base, n_jobs=2))
    pd.testing.assert_frame_equal(serial.per_rep, parallel.per_rep)


def test_fully_bayes_method_runs():
    config = ExperimentConfig(Design.XSINX, 40, methods=('sobolev', 'sobolev_fb'),
                              mh_samples=200, mh_burn_in=100, band_samples=100)
    result = run_experiment(config)
    fb = result.per_rep[result.per_rep['method'] == 'sobolev_fb']
    assert fb['rmse'].notna().all()
    assert fb['covered'].isna().all()
    assert fb['detail'].str.contains('accept=').all()


def test_scaling_report_lists_expected_slopes():
    report = scaling_report([('poly', 2.0, 0, np.logspace(-8, -2, 7))])
    assert list(report.columns) == ['family', 'param', 'm', 'slope', 'expected', 'error']
    assert report.loc[0, 'expected'] == 0.25
    assert abs(report.loc[0, 'error']) < 0.02


def test_contraction_trend_table():
    table, slope = contraction_trend(ns=(30, 60), n_seeds=2, M=100)
    assert list(table['n']) == [30, 60]
    assert np.isfinite(slope)
    assert (table['median_rmse'] > 0).all()


def test_nested_datasets_are_prefixes_of_one_draw():
    config = ExperimentConfig(Design.FOURIER, 80, seed=3)
    small, medium, large = nested_datasets(config, 1, (20, 40, 80))
    assert [d.n for d in (small, medium, large)] == [20, 40, 80]
    assert np.array_equal(medium.x[:20], small.x)
    assert np.array_equal(medium.y[:20], small.y)
    assert np.array_equal(large.x[:40], medium.x)
    assert np.array_equal(large.y[:40], medium.y)


def test_nested_datasets_differ_across_reps_and_reject_fixed_grid():
    config = ExperimentConfig(Design.HOLDER, 50, seed=0)
    first = nested_datasets(config, 0, (50,))[0]
    second = nested_datasets(config, 1, (50,))[0]
    assert not np.array_equal(first.x, second.x)
    with pytest.raises(ValueError):
        nested_datasets(ExperimentConfig(Design.XSINX, 50), 0, (20, 50))


def test_contraction_trend_is_reproducible():
    first, slope_a = contraction_trend(ns=(30, 60), n_seeds=2, M=100, seed=4)
    second, slope_b = contraction_trend(ns=(30, 60), n_seeds=2, M=100, seed=4)
    pd.testing.assert_frame_equal(first, second)
    assert slope_a == slope_b
