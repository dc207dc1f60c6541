import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats
from numpy.testing import assert_allclose

from src.bands import (
    BandKind,
    empirical_quantile,
    pointwise_band,
    sample_paths,
    simultaneous_band,
    sup_deviations,
)
from src.errors import FitError
from src.gp_core import DerivPosterior, fit, posterior_deriv
from src.kernels import KernelConfig


def _posterior(mean, cov, k=1):
    mean = np.asarray(mean, dtype=float)
    return DerivPosterior(k=k, grid=np.linspace(0.0, 1.0, mean.shape[0]), mean=mean,
                          cov=np.asarray(cov, dtype=float))


def _ar_cov(m, rho=0.6, scale=1.0):
    index = np.arange(m)
    return scale * rho ** np.abs(index[:, None] - index[None, :])


def test_zero_covariance_gives_mean_paths():
    post = _posterior([1.0, -2.0, 3.0], np.zeros((3, 3)))
    samples = sample_paths(post, n_samples=5)
    assert samples.shape == (5, 3)
    assert np.all(samples == post.mean)
    assert simultaneous_band(post).radius == 0.0


def test_sample_moments_match_the_posterior():
    cov = _ar_cov(4, scale=2.0)
    post = _posterior([0.5, 0.0, -0.5, 1.0], cov)
    samples = sample_paths(post, n_samples=50000, seed=11)
    assert_allclose(samples.mean(axis=0), post.mean, atol=0.05)
    assert_allclose(np.cov(samples, rowvar=False), cov, atol=0.08)


def test_samples_are_reproducible_for_a_seed():
    post = _posterior(np.zeros(5), _ar_cov(5))
    assert np.array_equal(sample_paths(post, 100, seed=3), sample_paths(post, 100, seed=3))
    assert not np.array_equal(sample_paths(post, 100, seed=3), sample_paths(post, 100, seed=4))


def test_empirical_quantile_is_an_order_statistic():
    values = np.arange(1.0, 11.0)
    assert empirical_quantile(values, 0.95) == 10.0
    assert empirical_quantile(values, 0.5) == 5.0
    assert empirical_quantile(values, 0.01) == 1.0


def test_radius_grows_with_level():
    post = _posterior(np.zeros(6), _ar_cov(6))
    radii = [simultaneous_band(post, level, 2000, seed=1).radius for level in (0.5, 0.8, 0.95, 0.99)]
    assert np.all(np.diff(radii) >= 0)


def test_single_point_radius_is_the_normal_quantile():
    sd = 0.7
    post = _posterior([0.3], [[sd ** 2]])
    band = simultaneous_band(post, 0.95, n_samples=20000, seed=5)
    assert abs(band.radius / (1.959964 * sd) - 1.0) < 0.05


def test_pointwise_radius_is_z_times_sd():
    post = _posterior([0.0, 1.0], np.diag([1.0, 4.0]))
    band = pointwise_band(post, 0.95)
    assert band.kind is BandKind.POINTWISE
    assert_allclose(band.radius, [1.959964, 2.0 * 1.959964], atol=1e-5)


@settings(max_examples=20, deadline=None)
@given(floats(min_value=0.01, max_value=100.0))
def test_pointwise_radius_scales_with_sd(c):
    cov = _ar_cov(4)
    base = pointwise_band(_posterior(np.zeros(4), cov)).radius
    scaled = pointwise_band(_posterior(np.zeros(4), c * c * cov)).radius
    assert_allclose(scaled, c * base, rtol=1e-10)


def test_zero_variance_gives_zero_pointwise_radius():
    band = pointwise_band(_posterior([2.0, 2.0], np.zeros((2, 2))))
    assert np.all(band.radius == 0.0)
    assert band.contains([2.0, 2.0])


def test_negative_variance_beyond_round_off_fails():
    with pytest.raises(FitError):
        pointwise_band(_posterior([0.0, 0.0], np.diag([1.0, -0.1])))


def test_simultaneous_band_is_wider_than_pointwise(smooth_data):
    model = fit(smooth_data, KernelConfig.matern(2.5), 1e-3, 0.01)
    post = posterior_deriv(model, 1, np.linspace(0.0, 1.0, 50))
    simultaneous = simultaneous_band(post, 0.95, 2000, seed=2)
    pointwise = pointwise_band(post, 0.95)
    assert simultaneous.kind is BandKind.SIMULTANEOUS
    assert simultaneous.radius >= np.max(pointwise.radius) * 0.95
    assert np.all(simultaneous.radius >= pointwise.radius * 0.9)


@pytest.mark.parametrize('level', [0.5, 0.9, 0.95])
def test_sup_quantile_dominates_every_coordinate_quantile_on_same_paths(smooth_data, level):
    model = fit(smooth_data, KernelConfig.matern(2.5), 1e-3, 0.01)
    post = posterior_deriv(model, 1, np.linspace(0.0, 1.0, 40))
    samples = sample_paths(post, 2000, seed=5)
    sup_quantile = empirical_quantile(sup_deviations(samples, post.mean), level)

    for j in range(post.mean.shape[0]):
        coordinate = empirical_quantile(np.abs(samples[:, j] - post.mean[j]), level)
        assert sup_quantile >= coordinate

    assert simultaneous_band(post, level, 2000, seed=5).radius == sup_quantile


def test_inflation_scales_the_radius():
    post = _posterior(np.zeros(5), _ar_cov(5))
    plain = simultaneous_band(post, 0.9, 1000, seed=8)
    inflated = simultaneous_band(post, 0.9, 1000, seed=8, inflation=0.5)
    assert_allclose(inflated.radius, 1.5 * plain.radius, rtol=1e-14)


def test_band_does_not_mutate_the_posterior():
    cov = _ar_cov(5)
    post = _posterior(np.ones(5), cov)
    before_mean, before_cov = post.mean.copy(), post.cov.copy()
    simultaneous_band(post, 0.9, 500)
    pointwise_band(post, 0.9)
    assert np.array_equal(post.mean, before_mean)
    assert np.array_equal(post.cov, before_cov)


def test_band_frame_has_bounds():
    post = _posterior([0.0, 1.0, 2.0], _ar_cov(3))
    frame = simultaneous_band(post, 0.9, 500, seed=0).to_frame()
    assert list(frame.columns) == ['x', 'mean', 'lower', 'upper']
    assert np.all(frame['lower'] <= frame['mean']) and np.all(frame['mean'] <= frame['upper'])


def test_sup_deviation_of_center_is_zero():
    center = np.array([1.0, 2.0])
    assert_allclose(sup_deviations(np.array([center, center + [0.5, -1.0]]), center), [0.0, 1.0])


def test_invalid_level_is_rejected():
    post = _posterior([0.0], [[1.0]])
    with pytest.raises(ValueError):
        simultaneous_band(post, 1.0)
    with pytest.raises(ValueError):
        pointwise_band(post, 0.0)
