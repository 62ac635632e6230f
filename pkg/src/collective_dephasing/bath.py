"""Spectral densities and the bath-integral kernels.

Every bath-dependent quantity in the engine is one of four integrals over the
spectral density, with the continuum rule sum_k 4|g_k|^2 F(w_k) -> int J(w) F(w) dw:

    C       = int J(w) / w                              dw
    phi(t)  = int J(w) sin(w t) / w^2                   dw
    B(t)    = int J(w) (1 - cos w t) coth(beta w / 2) / w^2 dw
    D(t)    = int J(w) (sin w t - w t) / w^2            dw

B and D are t times the usual per-unit-time decoherence rate and bath-induced
shift; they are finite and vanish at t = 0, so they are the primitive kernels.

Any object with attributes ``beta`` and ``C`` and vectorized methods
``phi``, ``B``, ``D`` can stand in for a bath elsewhere in the package.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import AccuracyError, DomainError
from .special import lgamma_vertical_drop

__all__ = [
    "OhmicBath",
    "TabulatedSpectralDensity",
    "QuadratureBath",
    "KernelValue",
    "KERNEL_KINDS",
    "coupling_constant_C",
    "phi",
    "gamma_kernel_B",
    "delta_kernel_D",
    "decoherence_rate",
    "bath_shift",
    "kernel_by_quadrature",
]

KERNEL_KINDS = ("C", "phi", "B", "D")

# Cutoff multiple for the quadrature upper limit; exp(-60) keeps the tail
# below 1e-24 relative.
_UPPER_CUTOFFS = 60.0
# Split between plain and Fourier-weighted quadrature, in radians of w t.
_OSCILLATION_SPLIT = 25.0
_LAURENT_BELOW = 1e-4
# QUADPACK refuses relative targets below 50 eps; we ask it for tol / 10.
_MIN_TOLERANCE = 1e-13


def _check_times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0):
        raise DomainError("kernel time arguments must be finite and >= 0")
    return arr


def _arctan_minus_identity(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small]
    x2 = xs * xs
    acc = np.zeros_like(xs)
    power = xs.copy()
    for k in range(1, 10):
        power = power * x2
        acc += (-1) ** k * power / (2 * k + 1)
    out[small] = acc
    xl = x[~small]
    out[~small] = np.arctan(xl) - xl
    return out


def _finish(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class OhmicBath:
    """Ohmic bath J(w) = G w exp(-w / omega_c) at inverse temperature ``beta``.

    ``beta = math.inf`` is zero temperature; the thermal parts of every kernel
    are then skipped rather than evaluated as a limit.
    """

    G: float
    omega_c: float
    beta: float = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.G) and self.G >= 0.0):
            raise DomainError(f"OhmicBath: G must be finite and >= 0, got {self.G!r}")
        if not (math.isfinite(self.omega_c) and self.omega_c > 0.0):
            raise DomainError(f"OhmicBath: omega_c must be > 0, got {self.omega_c!r}")
        if not (self.beta > 0.0) or math.isnan(self.beta):
            raise DomainError(f"OhmicBath: beta must be > 0 (inf allowed), got {self.beta!r}")

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)

    def spectral_density(self, omega):
        omega = np.asarray(omega, dtype=float)
        return _finish(self.G * omega * np.exp(-omega / self.omega_c))

    def density_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        return _finish(self.G * np.exp(-omega / self.omega_c))

    def tail_bound_C(self, upper: float) -> float:
        return self.G * self.omega_c * math.exp(-upper / self.omega_c)

    @property
    def quadrature_upper(self) -> float:
        return _UPPER_CUTOFFS * self.omega_c

    @property
    def C(self) -> float:
        return self.G * self.omega_c

    def phi(self, t):
        t = _check_times(t)
        return _finish(self.G * np.arctan(self.omega_c * t))

    def B(self, t):
        t = _check_times(t)
        x = self.omega_c * t
        value = 0.5 * self.G * np.log1p(x * x)
        if not self.zero_temperature:
            shift = 1.0 + 1.0 / (self.beta * self.omega_c)
            value = value + 2.0 * self.G * lgamma_vertical_drop(shift, t / self.beta)
        return _finish(value)

    def D(self, t):
        t = _check_times(t)
        return _finish(self.G * _arctan_minus_identity(self.omega_c * t))

    def gamma(self, t):
        return decoherence_rate(self, t)

    def delta(self, t):
        return bath_shift(self, t)


def coupling_constant_C(bath) -> float:
    """Static reorganization sum C = sum_k 4|g_k|^2 / w_k (G omega_c for Ohmic)."""
    return bath.C


def phi(bath, t):
    """Correlation phase kernel phi(t); ``G arctan(omega_c t)`` for Ohmic."""
    return bath.phi(t)


def gamma_kernel_B(bath, t):
    """Decoherence exponent B(t) = t gamma(t)."""
    return bath.B(t)


def delta_kernel_D(bath, t):
    """Bath-induced phase kernel D(t) = t Delta(t) = phi(t) - C t."""
    return bath.D(t)


def _per_unit_time(kernel, t):
    t = _check_times(t)
    safe = np.where(t > 0.0, t, 1.0)
    return _finish(np.where(t > 0.0, kernel(safe) / safe, 0.0))


def decoherence_rate(bath, t):
    """gamma(t) = B(t) / t, continued by 0 at t = 0."""
    return _per_unit_time(bath.B, t)


def bath_shift(bath, t):
    """Delta(t) = D(t) / t, continued by 0 at t = 0."""
    return _per_unit_time(bath.D, t)


class TabulatedSpectralDensity:
    """Spectral density sampled on a grid, with analytic edges.

    Between samples the density is a monotone cubic (PCHIP) interpolant.
    Below the first sample it is continued linearly to J(0) = 0; above the
    last sample it decays as ``J(w_N) exp(-(w - w_N) / tail_scale)``.
    """

    def __init__(self, omega, values, tail_scale: float):
        omega = np.asarray(omega, dtype=float)
        values = np.asarray(values, dtype=float)
        if omega.ndim != 1 or omega.shape != values.shape or omega.size < 2:
            raise DomainError("tabulated spectrum needs matching 1-D arrays with >= 2 samples")
        if not np.all(np.isfinite(omega)) or not np.all(np.isfinite(values)):
            raise DomainError("tabulated spectrum contains non-finite samples")
        if omega[0] <= 0.0 or np.any(np.diff(omega) <= 0.0):
            raise DomainError("tabulated frequencies must be > 0 and strictly increasing")
        if np.any(values < 0.0):
            raise DomainError("tabulated spectral density must be >= 0")
        if not (math.isfinite(tail_scale) and tail_scale > 0.0):
            raise DomainError(f"tail_scale must be > 0, got {tail_scale!r}")
        self.omega = omega
        self.values = values
        self.tail_scale = float(tail_scale)
        self._interp = PchipInterpolator(omega, values, extrapolate=False)

    @classmethod
    def from_file(cls, path, tail_scale: float):
        """Read two whitespace-separated columns (w, J(w)); '#' starts a comment."""
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise DomainError(f"{path}: expected two columns, found {data.shape[1]}")
        return cls(data[:, 0], data[:, 1], tail_scale)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        w0, wn = self.omega[0], self.omega[-1]
        inside = self._interp(np.clip(omega, w0, wn))
        below = self.values[0] * omega / w0
        above = self.values[-1] * np.exp(-(omega - wn) / self.tail_scale)
        out = np.where(omega < w0, below, np.where(omega > wn, above, inside))
        return _finish(out)

    spectral_density = __call__

    def density_over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        w0 = self.omega[0]
        safe = np.where(omega < w0, w0, omega)
        ratio = np.asarray(self(safe)) / safe
        return _finish(np.where(omega < w0, self.values[0] / w0, ratio))

    @property
    def quadrature_upper(self) -> float:
        return float(self.omega[-1] + _UPPER_CUTOFFS * self.tail_scale)

    def tail_bound_C(self, upper: float) -> float:
        return float(self(upper)) * self.tail_scale / upper


@dataclass(frozen=True)
class KernelValue:
    value: float
    error: float

    def __post_init__(self):
        if not self.error >= 0.0:
            raise DomainError("kernel error estimate must be >= 0")


def _omega_coth(omega, beta):
    # w coth(beta w / 2), finite at w = 0
    omega = np.asarray(omega, dtype=float)
    if math.isinf(beta):
        return omega
    x = beta * omega
    small = x < _LAURENT_BELOW
    safe = np.where(small, 1.0, x)
    regular = omega / np.tanh(0.5 * safe)
    laurent = 2.0 / beta + beta * omega**2 / 6.0 - beta**3 * omega**4 / 360.0
    return np.where(small, laurent, regular)


def _sinc_minus_one(u):
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.1
    u2 = u * u
    series = u2 * (-1.0 / 6.0 + u2 * (1.0 / 120.0 + u2 * (-1.0 / 5040.0 + u2 / 362880.0)))
    safe = np.where(small, 1.0, u)
    return np.where(small, series, np.sin(safe) / safe - 1.0)


def _full_integrand(spectrum, kind, t, beta):
    h1 = spectrum.density_over_omega
    if kind == "C":
        return lambda w: h1(w)
    if kind == "phi":
        return lambda w: h1(w) * t * np.sinc(w * t / np.pi)
    if kind == "B":
        # (1 - cos wt) / w^2 = (t^2 / 2) sinc^2(wt / 2)
        return lambda w: h1(w) * _omega_coth(w, beta) * 0.5 * t * t * np.sinc(w * t / (2 * np.pi)) ** 2
    if kind == "D":
        return lambda w: h1(w) * t * _sinc_minus_one(w * t)
    raise DomainError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")


def _quad(func, a, b, tol, breaks=(), **kw):
    edges = [a] + sorted(x for x in breaks if a < x < b) + [b]
    value = err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=tol, limit=1000, **kw)
            value += v
            err += e
    return value, err


def _feature_scales(J, beta):
    # Frequencies where the integrand changes character: thermal scale 1/beta
    # and the spectrum's own scales.
    scales = []
    if math.isfinite(beta):
        scales += [0.1 / beta, 1.0 / beta, 10.0 / beta, 100.0 / beta]
    if isinstance(J, OhmicBath):
        scales += [0.1 * J.omega_c, J.omega_c, 10.0 * J.omega_c]
    else:
        grid = J.omega
        step = max(1, grid.size // 20)
        scales += list(grid[::step]) + [float(grid[-1])]
    return scales


def kernel_by_quadrature(J, kind: str, t: float, beta: float | None = None,
                         tol: float = 1e-10) -> KernelValue:
    """Evaluate one bath kernel by adaptive quadrature over the spectrum.

    ``J`` is an :class:`OhmicBath` or a :class:`TabulatedSpectralDensity`.
    For an Ohmic bath ``beta`` defaults to the bath's own temperature.  The
    frequency axis is cut at ``quadrature_upper`` and the discarded tail is
    bounded analytically and added to the error estimate.  The region
    w t > 25 is integrated with Fourier-weighted (QAWO) quadrature so long
    times cost no more than short ones.

    Raises
    ------
    AccuracyError
        If the combined error estimate exceeds ``tol`` relative.
    """
    if kind not in KERNEL_KINDS:
        raise DomainError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")
    t = float(t)
    if not (math.isfinite(t) and t >= 0.0):
        raise DomainError(f"kernel_by_quadrature: t must be finite and >= 0, got {t!r}")
    if beta is None:
        beta = getattr(J, "beta", math.inf)
    if not beta > 0.0:
        raise DomainError(f"beta must be > 0, got {beta!r}")
    if not tol >= _MIN_TOLERANCE:
        raise DomainError(f"quadrature tolerance must be >= {_MIN_TOLERANCE:g}, got {tol!r}")
    if kind != "C" and t == 0.0:
        return KernelValue(0.0, 0.0)

    upper = J.quadrature_upper
    split = upper if (kind == "C" or t == 0.0) else min(upper, _OSCILLATION_SPLIT / t)
    breaks = _feature_scales(J, beta)
    value, err = _quad(_full_integrand(J, kind, t, beta), 0.0, split, tol * 0.1, breaks)

    if split < upper:
        h1 = J.density_over_omega
        if kind == "phi":
            v, e = _quad(lambda w: h1(w) / w, split, upper, tol * 0.1, breaks, weight="sin", wvar=t)
            value += v
            err += e
        elif kind == "B":
            g = lambda w: h1(w) * _omega_coth(w, beta) / w**2  # noqa: E731
            v1, e1 = _quad(g, split, upper, tol * 0.1, breaks)
            v2, e2 = _quad(g, split, upper, tol * 0.1, breaks, weight="cos", wvar=t)
            value += v1 - v2
            err += e1 + e2
        elif kind == "D":
            v1, e1 = _quad(lambda w: h1(w) / w, split, upper, tol * 0.1, breaks, weight="sin", wvar=t)
            v2, e2 = _quad(h1, split, upper, tol * 0.1, breaks)
            value += v1 - t * v2
            err += e1 + t * e2

    tail = J.tail_bound_C(upper)
    if kind == "phi":
        tail /= upper
    elif kind == "B":
        tail *= 2.0 * float(_omega_coth(upper, beta)) / upper**2
    elif kind == "D":
        tail *= 1.0 / upper + t
    err += tail

    if err > tol * abs(value) and err > 1e-300:
        raise AccuracyError(
            f"quadrature for kind={kind} at t={t:g}, beta={beta:g} reached error "
            f"{err:.3g} against |value| {abs(value):.3g} (tol {tol:g})",
            estimate=err, value=value)
    return KernelValue(float(value), float(err))


class QuadratureBath:
    """Kernel source backed by quadrature, for spectra without closed forms."""

    def __init__(self, spectrum, beta: float = math.inf, tol: float = 1e-10):
        if not beta > 0.0:
            raise DomainError(f"beta must be > 0, got {beta!r}")
        self.spectrum = spectrum
        self.beta = float(beta)
        self.tol = tol
        self.C = kernel_by_quadrature(spectrum, "C", 0.0, self.beta, tol).value

    def _kernel(self, kind, t):
        t = _check_times(t)
        flat = [kernel_by_quadrature(self.spectrum, kind, float(x), self.beta, self.tol).value
                for x in t.ravel()]
        return _finish(np.asarray(flat).reshape(t.shape))

    def phi(self, t):
        return self._kernel("phi", t)

    def B(self, t):
        return self._kernel("B", t)

    def D(self, t):
        return self._kernel("D", t)

    def gamma(self, t):
        return decoherence_rate(self, t)

    def delta(self, t):
        return bath_shift(self, t)
