"""Scalar special functions: complex log-gamma, log-binomials, log-sum-exp.

The complex log-gamma uses the Stirling series after an upward shift of the
argument, with Taylor expansions around z = 1 and z = 2 where the function
vanishes and a shifted evaluation would lose all relative accuracy.

``lgamma_vertical_drop`` evaluates ln Gamma(x) - ln|Gamma(x + iy)| without ever
forming the two log-gammas separately; the thermal decoherence kernel is
exactly this difference and it is tiny at short times.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy.special import logsumexp as _scipy_logsumexp
from scipy.special import zetac

from .errors import DomainError

__all__ = [
    "log_gamma_complex",
    "log_binomial",
    "lgamma_vertical_drop",
    "logsumexp",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_EULER_GAMMA = 0.57721566490153286061

# B_{2k} / (2k (2k - 1)), k = 1..8
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)
_STIRLING_MIN_ABS = 15.0

_TAYLOR_RADIUS = 0.25
_TAYLOR_TERMS = 40
# zeta(k) - 1 for k = 2.._TAYLOR_TERMS
_ZETAC = tuple(float(zetac(k)) for k in range(2, _TAYLOR_TERMS + 1))


def _stirling(z: complex) -> complex:
    inv = 1.0 / z
    inv2 = inv * inv
    series = 0.0j
    power = inv
    for c in _STIRLING:
        series += c * power
        power *= inv2
    return (z - 0.5) * cmath.log(z) - z + _HALF_LOG_2PI + series


def _taylor_at_one(eps: complex) -> complex:
    # ln Gamma(1 + eps) = -gamma eps + sum_k (-1)^k zeta(k) eps^k / k
    total = -_EULER_GAMMA * eps
    power = -eps
    for k, zc in enumerate(_ZETAC, start=2):
        power = power * (-eps)
        total += (1.0 + zc) * power / k
    return total


def _taylor_at_two(eps: complex) -> complex:
    # ln Gamma(2 + eps) = (1 - gamma) eps + sum_k (-1)^k (zeta(k) - 1) eps^k / k
    total = (1.0 - _EULER_GAMMA) * eps
    power = -eps
    for k, zc in enumerate(_ZETAC, start=2):
        power = power * (-eps)
        total += zc * power / k
    return total


def log_gamma_complex(z: complex) -> complex:
    """Principal-branch ln Gamma(z) for complex ``z``.

    The branch is the analytic continuation from the positive real axis with
    a cut along the negative real axis, so that
    ``log_gamma_complex(z + 1) - log_gamma_complex(z) == log(z)``.

    Raises
    ------
    DomainError
        If ``z`` is a pole of Gamma (a non-positive integer) or not finite.
    """
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"log_gamma_complex: non-finite argument {z!r}")
    if z.imag == 0.0 and z.real <= 0.0 and z.real == math.floor(z.real):
        raise DomainError(f"log_gamma_complex: pole of Gamma at z = {z.real:g}")

    if z.imag == 0.0 and z.real > 0.0:
        return complex(math.lgamma(z.real), 0.0)
    if abs(z - 1.0) <= _TAYLOR_RADIUS:
        return _taylor_at_one(z - 1.0)
    if abs(z - 2.0) <= _TAYLOR_RADIUS:
        return _taylor_at_two(z - 2.0)

    shift = 0.0j
    w = z
    while w.real < 1.0 or abs(w) < _STIRLING_MIN_ABS:
        shift += cmath.log(w)
        w += 1.0
    return _stirling(w) - shift


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k) for integers 0 <= k <= n."""
    n = int(n)
    k = int(k)
    if k < 0 or n < 0 or k > n:
        raise DomainError(f"log_binomial: need 0 <= k <= n, got n={n}, k={k}")
    k = min(k, n - k)
    if k <= 64:
        return math.fsum(math.log((n - k + i) / i) for i in range(1, k + 1))
    return math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)


def _re_one_plus_iu_pow_minus_one(u, p):
    # Re[(1 + i u)^(-p)] - 1 without cancellation
    a = -0.5 * p * np.log1p(u * u)
    b = -p * np.arctan(u)
    s = np.sin(0.5 * b)
    return np.expm1(a) * np.cos(b) - 2.0 * s * s


def lgamma_vertical_drop(x: float, y):
    """ln Gamma(x) - ln|Gamma(x + i y)| for real ``x > 0`` and real ``y``.

    Vectorized over ``y``.  The result is non-negative and even in ``y``; it
    is accurate to a few ulps relative even when ``y`` is so small that the
    two log-gammas agree to every printed digit.
    """
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"lgamma_vertical_drop: need finite x > 0, got {x!r}")
    y = np.abs(np.asarray(y, dtype=float))
    y2 = y * y

    n_shift = max(0, math.ceil(_STIRLING_MIN_ABS - x))
    total = np.zeros_like(y)
    for k in range(n_shift):
        total += 0.5 * np.log1p(y2 / (x + k) ** 2)

    w = x + n_shift
    u = y / w
    total += y * np.arctan(u) - (w - 0.5) * 0.5 * np.log1p(u * u)
    power = 1.0 / w
    for k, c in enumerate(_STIRLING, start=1):
        p = 2 * k - 1
        total -= c * power * _re_one_plus_iu_pow_minus_one(u, p)
        power /= w * w
    if total.ndim == 0:
        return float(total)
    return total


def logsumexp(values, axis=None):
    """Numerically stable ln(sum(exp(values))); ``-inf`` entries are ignored."""
    return _scipy_logsumexp(values, axis=axis)
