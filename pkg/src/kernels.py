"""
Kernels for GPDeriv
Matérn, squared-exponential and second-order Sobolev kernels with closed-form
mixed partial derivatives d^k1/dx^k1 d^k2/dx'^k2 K(x, x')
"""

import logging
from dataclasses import dataclass
from enum import Enum
from math import ceil, factorial, pi
from typing import Optional, Protocol

import numpy as np
from numpy.polynomial import hermite
from scipy import special

from src.config import SE_MAX_DERIV_ORDER
from src.errors import DerivativeOrderError


logger = logging.getLogger(__name__)

__all__ = [
    'Kernel',
    'KernelFamily',
    'KernelConfig',
    'evaluate',
    'eval_deriv',
    'gram',
    'cross_gram',
]

# Below this scaled distance the Matérn derivatives use their r -> 0 limit
_MATERN_DIAGONAL = 1e-12


class Kernel(Protocol):
    """Anything gp_core can fit with: derivative orders and a cross matrix."""

    max_deriv_order: int

    def matrix(self, k1: int, k2: int, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
        ...


class KernelFamily(str, Enum):
    MATERN = 'matern'
    SQUARED_EXPONENTIAL = 'se'
    SOBOLEV2 = 'sobolev'


@dataclass(frozen=True)
class KernelConfig:
    """
    Kernel family with its smoothness parameter

    Neither Matérn nor SE carries a lengthscale. max_deriv_order defaults to the
    family cap: ceil(nu) - 1 for Matérn, the configured cap for SE, 1 for Sobolev.
    """

    family: KernelFamily
    nu: Optional[float] = None
    max_deriv_order: Optional[int] = None

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, 'family', family)

        if family is KernelFamily.MATERN:
            if self.nu is None or not np.isfinite(self.nu) or self.nu <= 0.5:
                raise ValueError(f"Matérn kernel needs nu > 1/2, got {self.nu}")
            object.__setattr__(self, 'nu', float(self.nu))
            cap = int(ceil(self.nu)) - 1
        else:
            if self.nu is not None:
                raise ValueError(f"{family.value} kernel takes no nu")
            cap = SE_MAX_DERIV_ORDER if family is KernelFamily.SQUARED_EXPONENTIAL else 1

        if self.max_deriv_order is None:
            object.__setattr__(self, 'max_deriv_order', cap)
        elif not 0 <= int(self.max_deriv_order) <= cap:
            raise ValueError(
                f"max_deriv_order for {family.value} must lie in [0, {cap}], "
                f"got {self.max_deriv_order}"
            )
        else:
            object.__setattr__(self, 'max_deriv_order', int(self.max_deriv_order))

    @classmethod
    def matern(cls, nu: float) -> 'KernelConfig':
        return cls(KernelFamily.MATERN, nu=nu)

    @classmethod
    def squared_exponential(cls) -> 'KernelConfig':
        return cls(KernelFamily.SQUARED_EXPONENTIAL)

    @classmethod
    def sobolev(cls) -> 'KernelConfig':
        return cls(KernelFamily.SOBOLEV2)

    @property
    def label(self) -> str:
        if self.family is KernelFamily.MATERN:
            return f"matern(nu={self.nu:g})"
        return self.family.value

    def check_orders(self, *orders: int):
        for k in orders:
            if int(k) != k or k < 0 or k > self.max_deriv_order:
                raise DerivativeOrderError(
                    f"derivative order {k} not available for {self.label} "
                    f"(max {self.max_deriv_order})"
                )

    def eval_deriv(self, k1: int, k2: int, x, x2) -> np.ndarray:
        """
        Mixed partial derivative of the kernel, broadcasting x against x2

        Args:
            k1: Order of differentiation in the first argument
            k2: Order of differentiation in the second argument
            x: First argument (scalar or array)
            x2: Second argument (scalar or array)

        Returns:
            Array of derivative values with the broadcast shape
        """
        self.check_orders(k1, k2)
        x = np.asarray(x, dtype=float)
        x2 = np.asarray(x2, dtype=float)

        if self.family is KernelFamily.SOBOLEV2:
            return _sobolev_deriv(k1, k2, x, x2)

        # stationary: d^k1/dx^k1 d^k2/dx'^k2 phi(x - x') = (-1)^k2 phi^(k1+k2)(x - x')
        r = x - x2
        n = k1 + k2
        if self.family is KernelFamily.SQUARED_EXPONENTIAL:
            values = _se_deriv(n, r)
        else:
            values = _matern_deriv(self.nu, n, r)
        return values if k2 % 2 == 0 else -values

    def matrix(self, k1: int, k2: int, xa, xb) -> np.ndarray:
        xa = np.atleast_1d(np.asarray(xa, dtype=float))
        xb = np.atleast_1d(np.asarray(xb, dtype=float))
        return self.eval_deriv(k1, k2, xa[:, None], xb[None, :])


def _se_deriv(n: int, r: np.ndarray) -> np.ndarray:
    # d^n/dr^n exp(-r^2) = (-1)^n H_n(r) exp(-r^2), physicists' Hermite
    coefs = np.zeros(n + 1)
    coefs[n] = 1.0
    values = hermite.hermval(r, coefs) * np.exp(-r * r)
    return values if n % 2 == 0 else -values


def _is_half_integer(order: float) -> bool:
    twice = 2.0 * order
    return abs(twice - round(twice)) < 1e-12 and int(round(twice)) % 2 == 1


def _scaled_bessel(mu: float, u: np.ndarray) -> np.ndarray:
    """u^mu K_mu(u) for u > 0, closed form when |mu| is a half-integer."""
    order = abs(mu)
    if _is_half_integer(order):
        p = int(round(order - 0.5))
        series = np.zeros_like(u)
        for i in range(p + 1):
            weight = factorial(p + i) / (factorial(i) * factorial(p - i))
            series = series + weight * (2.0 * u) ** (-i)
        return u ** mu * np.sqrt(pi / (2.0 * u)) * np.exp(-u) * series
    return u ** mu * special.kv(order, u)


def _matern_deriv(nu: float, n: int, r: np.ndarray) -> np.ndarray:
    """
    n-th derivative of the Matérn correlation phi(r) = c (s|r|)^nu K_nu(s|r|)

    Writes phi(r) = F(a r^2) with a = 2 nu, where
    F^(m)(w) = c (-1/2)^m u^(nu-m) K_(nu-m)(u), u = sqrt(w), and expands
    d^n/dr^n F(a r^2) = sum_j n!/(j!(n-2j)!) a^(n-j) (2r)^(n-2j) F^(n-j)(a r^2).
    """
    a = 2.0 * nu
    c = 2.0 ** (1.0 - nu) / special.gamma(nu)
    r = np.asarray(r, dtype=float)
    u = np.sqrt(a) * np.abs(r)
    out = np.zeros(np.broadcast(r, u).shape)
    near = u < _MATERN_DIAGONAL

    if np.any(~near):
        r_off = r[~near]
        u_off = u[~near]
        total = np.zeros_like(u_off)
        for j in range(n // 2 + 1):
            m = n - j
            weight = factorial(n) / (factorial(j) * factorial(n - 2 * j)) * a ** m
            f_m = c * (-0.5) ** m * _scaled_bessel(nu - m, u_off)
            total += weight * (2.0 * r_off) ** (n - 2 * j) * f_m
        out[~near] = total

    if np.any(near) and n % 2 == 0:
        # only the j = n/2 term survives; lim u^mu K_mu(u) = 2^(mu-1) Gamma(mu)
        j = n // 2
        limit = 2.0 ** (nu - j - 1.0) * special.gamma(nu - j)
        out[near] = factorial(n) / factorial(j) * a ** j * c * (-0.5) ** j * limit

    return out


def _sobolev_deriv(k1: int, k2: int, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """K(x, x') = 1 + x x' + min^2 (3 max - min) / 6 and its first partials."""
    if k1 == 0 and k2 == 1:
        return _sobolev_deriv(1, 0, x2, x)

    lo = np.minimum(x, x2)
    hi = np.maximum(x, x2)
    if k1 == 0:
        return 1.0 + x * x2 + lo * lo * (3.0 * hi - lo) / 6.0
    if k2 == 1:
        return 1.0 + lo
    # d/dx with x' fixed, branches x <= x' and x > x'
    return np.where(x <= x2, x2 + x * x2 - 0.5 * x * x, x2 + 0.5 * x2 * x2)


def evaluate(cfg: Kernel, x, x2) -> np.ndarray:
    """Kernel value K(x, x2)."""
    return eval_deriv(cfg, 0, 0, x, x2)


def eval_deriv(cfg: Kernel, k1: int, k2: int, x, x2) -> np.ndarray:
    """Mixed partial derivative d^k1/dx^k1 d^k2/dx2^k2 K(x, x2)."""
    if hasattr(cfg, 'eval_deriv'):
        return cfg.eval_deriv(k1, k2, x, x2)
    values = cfg.matrix(k1, k2, np.ravel(x), np.ravel(x2))
    return values[0, 0] if values.size == 1 else values


def gram(cfg: Kernel, X) -> np.ndarray:
    """Symmetric Gram matrix K(X, X)."""
    X = np.atleast_1d(np.asarray(X, dtype=float))
    G = cfg.matrix(0, 0, X, X)
    return 0.5 * (G + G.T)


def cross_gram(cfg: Kernel, k: int, grid, X) -> np.ndarray:
    """Cross matrix of d^k/dx^k K(grid_i, X_j), shape (len(grid), len(X))."""
    return cfg.matrix(k, 0, grid, X)
