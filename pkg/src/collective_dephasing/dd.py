"""Ideal pi_x pulse sequences and the kernels of the decoupled dynamics.

Pulses at t_1 < ... < t_Nd flip J_z in the toggling frame, so the coupling
acquires a switching function f(t) = +-1.  Its transform

    f(w, t) = sum_p c_p exp(i w t_p),   nodes 0, t_1, ..., t_Nd, t,
    c_0 = 1, c_p = 2 (-1)^p, c_{Nd+1} = (-1)^(Nd+1),

replaces 1 - exp(i w t) in every bath integral.  Because sum_p c_p = 0, each
pulsed kernel is a signed sum of the unpulsed kernels over node separations:

    B~ = -sum_{p<q} c_p c_q B(t_q - t_p)     (= 1/2 int J coth |f|^2 / w^2)
    D~ = -sum_{p<q} c_p c_q D(t_q - t_p)
    S  =  sum_p c_p Phi(t_p)                  (= int J Im f / w^2)

B~ is normalized so that the empty sequence gives B(t) back.  In the
toggling frame the correlation angle is -S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import mpmath
import numpy as np

from .bath import KernelValue, _feature_scales, _omega_coth, _quad, _sinc_minus_one
from .dynamics import EvolutionKernels, JxEvaluator, TimeSeries, _map, _resolve_state
from .errors import AccuracyError, DomainError

__all__ = [
    "SEQUENCE_KINDS",
    "PulseSequence",
    "SwitchingCoefficients",
    "bang_bang",
    "bang_bang_interval",
    "udd",
    "explicit",
    "sequence_from_spec",
    "filter_f",
    "tilde_omega0",
    "tilde_gamma_kernel",
    "tilde_delta_kernel",
    "tilde_kernel_by_quadrature",
    "tilde_correlation_phase",
    "DDKernels",
    "dd_kernels",
    "evolution_kernels",
    "jx_with_dd",
    "jx_dd_series",
]

SEQUENCE_KINDS = ("bang_bang", "udd", "explicit")

# Frequencies with w t below this use the moment expansion of f(w, t).
_SERIES_BELOW = 1.0
_SERIES_TERMS = 48
_MOMENT_DIGITS = 60


@dataclass(frozen=True)
class SwitchingCoefficients:
    nodes: tuple
    coefficients: tuple

    def __post_init__(self):
        if sum(self.coefficients) != 0:
            raise DomainError("switching coefficients must sum to zero")


@dataclass(frozen=True)
class PulseSequence:
    """Instantaneous pi pulses strictly inside (0, total_time).

    ``kind`` records how the timings were generated; for ``bang_bang`` and
    ``udd`` the low-frequency filter expansion is built from the exact
    timings rather than their rounded floats.
    """

    total_time: float
    timings: tuple
    kind: str = "explicit"

    def __post_init__(self):
        t = float(self.total_time)
        if not (math.isfinite(t) and t > 0.0):
            raise DomainError(f"total time must be finite and > 0, got {self.total_time!r}")
        timings = tuple(float(x) for x in self.timings)
        for i, x in enumerate(timings):
            if not (0.0 < x < t):
                raise DomainError(f"pulse {i + 1} at {x!r} is not strictly inside (0, {t!r})")
            if i and not x > timings[i - 1]:
                raise DomainError(
                    f"pulse timings must be strictly increasing: pulse {i} at {timings[i - 1]!r}, "
                    f"pulse {i + 1} at {x!r}")
        if self.kind not in SEQUENCE_KINDS:
            raise DomainError(f"sequence kind must be one of {SEQUENCE_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "total_time", t)
        object.__setattr__(self, "timings", timings)

    @property
    def n_pulses(self) -> int:
        return len(self.timings)

    @cached_property
    def switching(self) -> SwitchingCoefficients:
        n = self.n_pulses
        coeffs = (1, *(2 * (-1) ** p for p in range(1, n + 1)), (-1) ** (n + 1))
        return SwitchingCoefficients((0.0, *self.timings, self.total_time), coeffs)

    def truncated(self, t: float) -> "PulseSequence":
        """The pulses applied before ``t``, as a sequence ending at ``t``."""
        return PulseSequence(t, tuple(x for x in self.timings if x < t))

    def _exact_nodes(self):
        n = self.n_pulses
        T = mpmath.mpf(self.total_time)
        if self.kind == "udd":
            inner = [T * mpmath.sin(j * mpmath.pi / (2 * n + 2)) ** 2 for j in range(1, n + 1)]
        elif self.kind == "bang_bang":
            inner = [T * j / (n + 1) for j in range(1, n + 1)]
        else:
            inner = [mpmath.mpf(x) for x in self.timings]
        return [mpmath.mpf(0), *inner, T]

    @cached_property
    def moments(self) -> np.ndarray:
        """M_k = sum_p c_p t_p^k for k = 0.._SERIES_TERMS, from exact nodes."""
        with mpmath.workdps(_MOMENT_DIGITS):
            nodes = self._exact_nodes()
            coeffs = self.switching.coefficients
            return np.array([float(mpmath.fsum(c * x ** k for c, x in zip(coeffs, nodes)))
                             for k in range(_SERIES_TERMS + 1)])


def bang_bang(t: float, n_pulses: int) -> PulseSequence:
    """Equidistant pulses t_l = l t / (N_d + 1)."""
    n = _check_count(n_pulses, 0)
    return PulseSequence(t, tuple(t * j / (n + 1) for j in range(1, n + 1)), "bang_bang")


def bang_bang_interval(t: float, tau: float) -> PulseSequence:
    """Equidistant pulses with spacing ``tau``; t / tau must be an integer."""
    ratio = t / tau
    count = round(ratio)
    if count < 1 or abs(ratio - count) > 1e-9 * count:
        raise DomainError(f"pulse interval {tau!r} does not divide total time {t!r}")
    return bang_bang(t, count - 1)


def udd(t: float, n_pulses: int) -> PulseSequence:
    """Uhrig timings t_j = t sin^2(j pi / (2 N_d + 2))."""
    n = _check_count(n_pulses, 1)
    return PulseSequence(t, tuple(t * math.sin(j * math.pi / (2 * n + 2)) ** 2 for j in range(1, n + 1)),
                         "udd")


def explicit(t: float, timings) -> PulseSequence:
    return PulseSequence(t, tuple(timings), "explicit")


def _check_count(n, minimum) -> int:
    if int(n) != n or n < minimum:
        raise DomainError(f"pulse count must be an integer >= {minimum}, got {n!r}")
    return int(n)


def sequence_from_spec(spec: dict, t: float) -> PulseSequence:
    """Build from ``{"type": "bang_bang"|"udd", "n_pulses": k}``,
    ``{"type": "bang_bang", "tau": x}`` or ``{"type": "explicit", "timings": [...]}``."""
    kind = spec.get("type")
    if kind == "bang_bang":
        if "tau" in spec:
            return bang_bang_interval(t, float(spec["tau"]))
        return bang_bang(t, spec.get("n_pulses", 0))
    if kind == "udd":
        return udd(t, spec.get("n_pulses", 1))
    if kind == "explicit":
        return explicit(t, spec.get("timings", ()))
    raise DomainError(f"sequence type must be one of {SEQUENCE_KINDS}, got {kind!r}")


def filter_f(seq: PulseSequence, omega):
    """f(w, t) = sum_p c_p exp(i w t_p); vectorized over ``omega >= 0``.

    For w t < 1 the sum is expanded in moments of the nodes so that high
    orders of cancellation (UDD nulls the first N_d of them) survive.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("filter frequencies must be finite and >= 0")
    sw = seq.switching
    nodes = np.array(sw.nodes)
    coeffs = np.array(sw.coefficients, dtype=float)
    x = np.multiply.outer(w, nodes)
    s = np.sin(0.5 * x)
    direct = ((-2.0 * s * s + 1j * np.sin(x)) * coeffs).sum(axis=-1)

    small = w * seq.total_time < _SERIES_BELOW
    if np.any(small):
        ws = w[small] if w.ndim else w
        series = np.zeros(np.shape(ws), dtype=complex)
        term = np.ones(np.shape(ws), dtype=complex)
        for k in range(1, _SERIES_TERMS + 1):
            term = term * (1j * ws) / k
            series = series + term * seq.moments[k]
        if w.ndim:
            direct[small] = series
        else:
            direct = series
    return complex(direct) if w.ndim == 0 else direct


def tilde_omega0(seq: PulseSequence, omega0: float) -> float:
    """(omega0 / t) int_0^t f(t') dt' for the piecewise +-1 switching function."""
    nodes = seq.switching.nodes
    signed = math.fsum((-1) ** j * (nodes[j + 1] - nodes[j]) for j in range(len(nodes) - 1))
    return omega0 * signed / seq.total_time


def _pair_sum(seq: PulseSequence, kernel) -> float:
    sw = seq.switching
    nodes = np.array(sw.nodes)
    c = np.array(sw.coefficients, dtype=float)
    p, q = np.triu_indices(nodes.size, k=1)
    gaps = nodes[q] - nodes[p]
    values = np.asarray(kernel(gaps), dtype=float)
    return -math.fsum(c[p] * c[q] * values)


def tilde_gamma_kernel(seq: PulseSequence, bath) -> float:
    """B~ = 1/2 int J(w) coth(beta w / 2) |f(w, t)|^2 / w^2 dw, from pairwise B."""
    return max(_pair_sum(seq, bath.B), 0.0)


def _interval_pair_integrand(seq: PulseSequence):
    # int_0^t dt1 int_0^t1 dt2 f(t1) f(t2) sin(w (t2 - t1)), summed over the
    # constant-sign intervals: a diagonal triangle gives (sin wL - wL) / w^2 and
    # an earlier interval b under a later a gives
    # 4 sin(w L_a / 2) sin(w L_b / 2) sin(w (mid_b - mid_a)) / w^2.
    nodes = np.array(seq.switching.nodes)
    length = np.diff(nodes)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    sign = np.where(np.arange(length.size) % 2 == 0, 1.0, -1.0)
    a, b = np.tril_indices(length.size, k=-1)
    pair_sign = sign[a] * sign[b]

    def inner(w):
        diag = np.sum(length * _sinc_minus_one(w * length)) / w if w > 0.0 else 0.0
        if a.size == 0:
            return diag
        if w == 0.0:
            return 0.0
        off = 4.0 * np.sin(0.5 * w * length[a]) * np.sin(0.5 * w * length[b]) * np.sin(w * (mid[b] - mid[a]))
        return diag + np.sum(pair_sign * off) / (w * w)

    return inner


def _quadrature_integrand(seq: PulseSequence, spectrum, kind: str, beta: float):
    h1 = spectrum.density_over_omega
    if kind == "D":
        inner = _interval_pair_integrand(seq)
        return lambda w: float(h1(w)) * w * inner(w)
    if kind == "B":
        # 1/2 J coth |f|^2 / w^2 = 1/2 (J / w) (w coth) |f|^2 / w^2
        return lambda w: 0.5 * float(h1(w) * _omega_coth(w, beta)) * abs(filter_f(seq, w)) ** 2 / (w * w)
    if kind == "S":
        return lambda w: float(h1(w)) * filter_f(seq, w).imag / w
    raise DomainError(f"kind must be 'B', 'D' or 'S', got {kind!r}")


def tilde_kernel_by_quadrature(seq: PulseSequence, spectrum, kind: str, beta: float = math.inf,
                               tol: float = 1e-10) -> KernelValue:
    """B~, D~ or S by frequency quadrature over ``spectrum``.

    B~ and S integrate the filter function directly; D~ integrates the
    interval-pair form of the inner time integral.  ``spectrum`` is an Ohmic
    bath or a tabulated spectral density.

    Raises
    ------
    AccuracyError
        If the error estimate exceeds ``tol`` relative.
    """
    func = _quadrature_integrand(seq, spectrum, kind, beta)
    upper = spectrum.quadrature_upper
    lengths = np.diff(seq.switching.nodes)
    breaks = _feature_scales(spectrum, beta) + [1.0 / seq.total_time, 10.0 / seq.total_time,
                                                1.0 / lengths.min(), 10.0 / lengths.min()]
    value, err = _quad(func, 0.0, upper, tol * 0.1, breaks)
    # beyond the cut |f| <= 2 (N_d + 1) and the inner D integral is at most t^2 N_pairs / w
    n = seq.n_pulses + 1
    tail = spectrum.tail_bound_C(upper)
    if kind == "B":
        tail *= 2.0 * n * n * float(_omega_coth(upper, beta)) / upper ** 2
    elif kind == "S":
        tail *= 2.0 * n / upper
    else:
        tail *= seq.total_time ** 2 * n * (n + 1) / 2
    err += tail
    if err > tol * abs(value) and err > 1e-300:
        raise AccuracyError(f"{kind}~ quadrature reached error {err:.3g} against |value| {abs(value):.3g}",
                            estimate=err, value=value)
    return KernelValue(float(value), float(err))


def tilde_delta_kernel(seq: PulseSequence, bath, method: str = "closed_form", tol: float = 1e-10) -> float:
    """D~ = t Delta~(t), the bath-mediated J_z^2 phase under pulses.

    ``method="closed_form"`` sums unpulsed D over node separations;
    ``method="quadrature"`` integrates the per-frequency inner integral over
    the bath's spectral density and needs a bath that exposes one.
    """
    if method == "closed_form":
        return _pair_sum(seq, bath.D)
    if method == "quadrature":
        spectrum = getattr(bath, "spectrum", bath)
        if not hasattr(spectrum, "density_over_omega"):
            raise DomainError("quadrature method needs a bath with a spectral density")
        return tilde_kernel_by_quadrature(seq, spectrum, "D", bath.beta, tol).value
    raise DomainError(f"method must be 'closed_form' or 'quadrature', got {method!r}")


def tilde_correlation_phase(seq: PulseSequence, bath) -> float:
    """S = int J(w) Im f(w, t) / w^2 dw = sum_p c_p Phi(t_p).

    In the large-N limit the correlation factor is exp(-i N (n - m) S).
    """
    sw = seq.switching
    values = np.asarray(bath.phi(np.array(sw.nodes)), dtype=float)
    return math.fsum(c * v for c, v in zip(sw.coefficients, values))


@dataclass(frozen=True)
class DDKernels:
    t: float
    omega0_tilde: float
    B_tilde: float
    D_tilde: float
    S: float


def dd_kernels(seq: PulseSequence, bath, omega0: float) -> DDKernels:
    return DDKernels(seq.total_time, tilde_omega0(seq, omega0), tilde_gamma_kernel(seq, bath),
                     tilde_delta_kernel(seq, bath), tilde_correlation_phase(seq, bath))


def evolution_kernels(seq: PulseSequence, bath, omega0: float) -> EvolutionKernels:
    """Toggling-frame kernels: the pulsed state has the unpulsed form with these."""
    k = dd_kernels(seq, bath, omega0)
    return EvolutionKernels(k.t, k.omega0_tilde * k.t, k.B_tilde, k.D_tilde, -k.S)


def jx_with_dd(t: float, seq: PulseSequence, N: int, bath, state=None,
               correlation_mode: str = "none", omega0: float = 0.0) -> float:
    """j_x at the end of ``seq``; pi_x pulses leave J_x unchanged, so the
    toggling-frame value is the lab-frame value."""
    if abs(seq.total_time - t) > 1e-12 * max(1.0, t):
        raise DomainError(f"sequence ends at {seq.total_time!r}, not at t={t!r}")
    state = _resolve_state(N, state)
    return JxEvaluator(state, bath, omega0, correlation_mode).at(evolution_kernels(seq, bath, omega0))


def jx_dd_series(times, seq: PulseSequence, N: int, bath, state=None, correlation_mode: str = "none",
                 omega0: float = 0.0, threads: int = 1, name: str = "jx_dd",
                 metadata: dict | None = None) -> TimeSeries:
    """j_x(t') for t' on ``times`` under the pulses of ``seq`` applied before t'."""
    times = np.asarray(times, dtype=float)
    if times.size and times.max() > seq.total_time * (1.0 + 1e-12):
        raise DomainError("time grid extends past the end of the sequence")
    state = _resolve_state(N, state)
    evaluator = JxEvaluator(state, bath, omega0, correlation_mode)

    def at(t):
        if t == 0.0:
            return evaluator.at(EvolutionKernels(0.0, 0.0, 0.0, 0.0, 0.0))
        return evaluator.at(evolution_kernels(seq.truncated(min(t, seq.total_time)), bath, omega0))

    values = _map(at, list(times), threads)
    meta = {"N": N, "omega0": omega0, "preparation": state.kind, "correlation_mode": correlation_mode,
            "sequence": seq.kind, "n_pulses": seq.n_pulses, "total_time": seq.total_time}
    meta.update(metadata or {})
    return TimeSeries(times, values, name=name, metadata=meta)
