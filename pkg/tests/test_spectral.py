import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DerivativeOrderError, TruncationWarning
from src.gp_core import Dataset, fit, posterior_mean_deriv
from src.spectral import (
    SpectralFamily,
    SpectralKernel,
    effective_dimension,
    equivalent_kernel,
    fourier_basis,
    kernel_eval,
    make_exp_kernel,
    make_poly_kernel,
    rate_check_effective_dim,
)


def test_exponential_eigenvalues():
    sk = make_exp_kernel(0.5, M=10)
    assert_allclose(sk.mu[0], np.exp(-1.0), rtol=1e-15)
    assert_allclose(sk.mu, np.exp(-np.arange(1, 11)), rtol=1e-14)


def test_polynomial_eigenvalues():
    sk = make_poly_kernel(1.0, M=10)
    assert_allclose(sk.mu[2], 1.0 / 9.0, rtol=1e-14)


def test_fourier_basis_columns():
    x = np.array([0.0, 0.25, 0.6])
    basis = fourier_basis(x, 3)
    assert_allclose(basis[:, 0], 1.0)
    assert_allclose(basis[:, 1], np.sqrt(2) * np.cos(2 * np.pi * x), atol=1e-15)
    assert_allclose(basis[:, 2], np.sqrt(2) * np.sin(2 * np.pi * x), atol=1e-15)
    assert_allclose(fourier_basis(x, 3, 1)[:, 2], np.sqrt(2) * 2 * np.pi * np.cos(2 * np.pi * x),
                    atol=1e-12)


def test_single_term_kernel_is_constant():
    sk = SpectralKernel(np.log([0.3]))
    assert_allclose(kernel_eval(sk, 0, 0, 0.1, 0.8), 0.3, rtol=1e-15)
    assert kernel_eval(sk, 1, 0, 0.1, 0.8) == 0.0


def test_kernel_is_symmetric():
    sk = make_poly_kernel(1.5, M=200)
    x = np.linspace(0.0, 1.0, 7)
    G = sk.matrix(0, 0, x, x)
    assert_allclose(G, G.T, atol=1e-13)
    assert_allclose(sk.matrix(1, 0, x, x), sk.matrix(0, 1, x, x).T, atol=1e-10)


@pytest.mark.parametrize('k1,k2', [(0, 0), (1, 0), (1, 1), (2, 1)])
def test_kernel_matches_term_by_term_sum(k1, k2):
    sk = make_exp_kernel(0.3, M=60)
    x, x2 = 0.17, 0.62
    expected = sum(
        mu * fourier_basis(x, 60, k1)[0, i] * fourier_basis(x2, 60, k2)[0, i]
        for i, mu in enumerate(sk.mu)
    )
    assert_allclose(kernel_eval(sk, k1, k2, x, x2), expected, rtol=1e-12, atol=1e-12)


def test_derivative_order_cap():
    with pytest.raises(DerivativeOrderError):
        make_exp_kernel(0.5, M=10).matrix(4, 0, [0.1], [0.2])


def test_invalid_eigenvalues():
    with pytest.raises(ValueError):
        SpectralKernel(np.log([0.1, 0.5]))
    with pytest.raises(ValueError):
        make_exp_kernel(0.0)
    with pytest.raises(ValueError):
        make_poly_kernel(-1.0)


def test_short_polynomial_truncation_warns():
    sk = make_poly_kernel(1.0, M=20)
    with pytest.warns(TruncationWarning):
        sk.matrix(1, 1, [0.2], [0.4])


def test_long_exponential_truncation_is_silent():
    sk = make_exp_kernel(0.5, M=100)
    with warnings.catch_warnings():
        warnings.simplefilter('error', TruncationWarning)
        sk.matrix(1, 1, [0.2], [0.4])


def test_equivalent_kernel_eigenvalues():
    sk = SpectralKernel(np.log([1.0]))
    assert_allclose(equivalent_kernel(sk, 1.0).mu, [0.5], rtol=1e-15)
    eq = equivalent_kernel(make_poly_kernel(2.0, M=500), 1e-4)
    assert np.all(np.diff(eq.mu) <= 0)
    assert np.all((eq.mu > 0) & (eq.mu < 1))


def test_equivalent_kernel_handles_underflowing_eigenvalues():
    eq = equivalent_kernel(make_exp_kernel(1.0, M=5000), 1e-6)
    assert np.all(np.isfinite(eq.log_mu))
    assert eq.log_mu[-1] < -9000


def test_single_term_effective_dimension():
    sk = SpectralKernel(np.log([1.0]))
    assert_allclose(effective_dimension(sk, 1.0, 0), (0.5, 0.5), rtol=1e-14)


@pytest.mark.parametrize('sk', [make_exp_kernel(0.5, M=2000), make_poly_kernel(2.0, M=2000)],
                         ids=['exp', 'poly'])
@pytest.mark.parametrize('m', [0, 1])
def test_effective_dimensions_decrease_in_lambda(sk, m):
    values = np.array([effective_dimension(sk, lam, m) for lam in (1e-6, 1e-4, 1e-2)])
    assert np.all(np.diff(values[:, 0]) < 0)
    assert np.all(np.diff(values[:, 1]) < 0)
    lower = 1.0 / (2.0 * (2.0 * np.pi) ** (2 * m))
    assert np.all(values[:, 1] >= lower * values[:, 0])


def test_exponential_rate_without_derivative():
    lams = np.logspace(-8, -2, 7)
    slope = rate_check_effective_dim(SpectralFamily.EXPONENTIAL, 0.5, 0, lams)
    assert abs(slope - 1.0) < 0.1


def test_exponential_rate_first_derivative():
    # far enough into the small-lambda regime for the leading power to dominate
    lams = np.logspace(-16, -8, 9)
    slope = rate_check_effective_dim(SpectralFamily.EXPONENTIAL, 0.5, 1, lams)
    assert abs(slope - 3.0) < 0.1


@pytest.mark.parametrize('alpha,m,expected', [(2.0, 0, 0.25), (2.0, 1, 0.75)])
def test_polynomial_rate(alpha, m, expected):
    slope = rate_check_effective_dim('poly', alpha, m, np.logspace(-8, -2, 7))
    assert abs(slope - expected) < 0.02


@pytest.mark.slow
@pytest.mark.parametrize('m,expected', [(0, 1.0 / 3.0), (1, 1.0)])
def test_polynomial_rate_rough_kernel(m, expected):
    slope = rate_check_effective_dim('poly', 1.5, m, np.logspace(-8, -2, 7))
    assert abs(slope - expected) < 0.05


def test_rate_check_rejects_bad_lambdas():
    with pytest.raises(ValueError):
        rate_check_effective_dim('exp', 0.5, 0, [1e-3])
    with pytest.raises(ValueError):
        rate_check_effective_dim('exp', 0.5, 0, [1e-3, 2.0])


def test_doubling_truncation_is_stable():
    lam = 1e-4
    short = effective_dimension(make_exp_kernel(0.5, M=1000), lam, 1)
    long = effective_dimension(make_exp_kernel(0.5, M=2000), lam, 1)
    assert_allclose(short, long, rtol=1e-10)


def test_spectral_kernel_drives_the_gp():
    sk = make_exp_kernel(0.5, M=200)
    x = np.linspace(0.0, 1.0, 12, endpoint=False)
    data = Dataset(x, np.sin(2 * np.pi * x))
    model = fit(data, sk, 1e-6, 0.01)
    grid = np.linspace(0.05, 0.95, 7)
    assert_allclose(posterior_mean_deriv(model, 0, grid), np.sin(2 * np.pi * grid), atol=0.05)
    assert_allclose(posterior_mean_deriv(model, 1, grid), 2 * np.pi * np.cos(2 * np.pi * grid),
                    atol=0.3)
