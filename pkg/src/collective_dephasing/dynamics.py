"""Reduced density-matrix elements and the collective observable j_x(t).

At each instant the evolved state depends on the bath only through four
scalars, collected in :class:`EvolutionKernels`:

* ``free_phase``: the accumulated level splitting, omega0 * t;
* ``B``: the decoherence exponent t * gamma(t);
* ``D``: the bath-mediated J_z^2 phase t * Delta(t);
* ``theta``: the correlation angle, Phi(t) without pulses.

An element (m, n) is then

    rho0_mn exp(-i free (m - n) - i D (m^2 - n^2) - (m - n)^2 B) * F_mn,

with F_mn = sum_l p_l exp(-2 i l (n - m) theta) for a projective preparation
and F = 1 for a factorized one.  Pulse sequences only change the four
scalars, so the same assembly serves the decoupled dynamics.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateStateError, DomainError
from .spin import (
    ProjectiveState,
    UnitaryPreparation,
    basis_twice_m,
    boltzmann_block_weights,
    check_index,
    preparation_weights,
)

__all__ = [
    "CORRELATION_MODES",
    "EvolutionKernels",
    "CorrelationFactor",
    "DensityElement",
    "TimeSeries",
    "rho_element_factorized",
    "correlation_factor_exact",
    "correlation_factor_largeN",
    "rho_element_correlated",
    "unitary_mu_weights",
    "initial_reduced_state",
    "reduced_density_matrix",
    "X_of_t",
    "JxEvaluator",
    "jx",
    "jx_series",
    "correlation_timescale",
]

CORRELATION_MODES = ("none", "exact", "large_N")


def _check_time(t) -> float:
    t = float(t)
    if not t >= 0.0 or not math.isfinite(t):
        raise DomainError(f"time must be finite and >= 0, got {t!r}")
    return t


@dataclass(frozen=True)
class EvolutionKernels:
    """Bath and field scalars that determine the evolved state at time ``t``."""

    t: float
    free_phase: float
    B: float
    D: float
    theta: float

    @classmethod
    def unpulsed(cls, t, bath, omega0: float) -> "EvolutionKernels":
        t = _check_time(t)
        return cls(t, omega0 * t, float(bath.B(t)), float(bath.D(t)), float(bath.phi(t)))

    def element_factor(self, twice_m: int, twice_n: int) -> tuple[float, float]:
        """(log modulus, phase) of the correlation-free evolution factor."""
        dm = (twice_m - twice_n) / 2.0
        sq = (twice_m * twice_m - twice_n * twice_n) / 4.0
        return -dm * dm * self.B, -self.free_phase * dm - self.D * sq


@dataclass(frozen=True)
class CorrelationFactor:
    value: complex
    mode: str


@dataclass(frozen=True)
class DensityElement:
    """One evolved element rho_S(t)_{mn} with its decomposition.

    ``modulus_log`` is -(m-n)^2 B(t) and ``phase`` the free plus bath-induced
    phase; ``correlation`` is the multiplicative correlation factor, or
    ``None`` for a factorized preparation or where it is undefined.
    """

    twice_m: int
    twice_n: int
    rho0: complex
    modulus_log: float
    phase: float
    correlation: CorrelationFactor | None
    value: complex


def _exact_sum(weights, twice_m: int, twice_n: int, theta: float) -> complex:
    # p_l exp(-2 i l (n - m) theta), with 2 l (n - m) = twice_l (twice_n - twice_m) / 2
    if twice_m == twice_n:
        return 1.0 + 0.0j
    idx = weights.dominant()
    twice_l = weights.twice_l[idx]
    ang = -theta * twice_l * ((twice_n - twice_m) / 2.0)
    return complex(np.sum(weights.p[idx] * np.exp(1j * ang)))


def _large_n_factor(N: int, twice_m: int, twice_n: int, theta: float) -> complex:
    return complex(np.exp(1j * N * ((twice_n - twice_m) / 2.0) * theta))


def rho_element_factorized(t, twice_m: int, twice_n: int, bath, rho0_element, omega0: float,
                           kernels: EvolutionKernels | None = None) -> DensityElement:
    """Element of rho_S(t) for a product initial state rho_S(0) x thermal bath."""
    k = kernels or EvolutionKernels.unpulsed(t, bath, omega0)
    log_mod, phase = k.element_factor(twice_m, twice_n)
    rho0 = complex(rho0_element)
    return DensityElement(twice_m, twice_n, rho0, log_mod, phase, None,
                          rho0 * complex(np.exp(log_mod + 1j * phase)))


def correlation_factor_exact(t, twice_m: int, twice_n: int, weights, bath,
                             theta: float | None = None) -> CorrelationFactor:
    """F_mn(t) = sum_l p_l exp(-2 i l (n - m) Phi(t)) over the non-negligible p_l."""
    if theta is None:
        theta = float(bath.phi(_check_time(t)))
    return CorrelationFactor(_exact_sum(weights, twice_m, twice_n, theta), "exact_sum")


def correlation_factor_largeN(t, twice_m: int, twice_n: int, N: int, bath,
                              theta: float | None = None) -> CorrelationFactor:
    """F_mn(t) = exp(i N (n - m) Phi(t)), the limit where p_{-N/2} = 1."""
    if theta is None:
        theta = float(bath.phi(_check_time(t)))
    return CorrelationFactor(_large_n_factor(N, twice_m, twice_n, theta), "large_N")


def _unitary_terms(state: UnitaryPreparation, q, twice_m: int, twice_n: int):
    idx = q.dominant()
    twice_l = q.twice_l[idx]
    i = check_index(state.N, twice_m)
    k = check_index(state.N, twice_n)
    prod = np.array([state.column(tl)[i] * np.conj(state.column(tl)[k]) for tl in twice_l])
    return twice_l, q.p[idx] * prod


def unitary_mu_weights(state: UnitaryPreparation, bath, omega0: float, twice_m: int, twice_n: int):
    """Complex block weights mu^(l)_{nm} of a unitary preparation.

    Returns ``(twice_l, mu)`` with ``sum(mu) == 1``.  The weights are the
    terms of rho_S(0)_{mn} divided by rho_S(0)_{mn} itself, so they do not
    exist when that element vanishes.

    Raises
    ------
    DegenerateStateError
        If |rho_S(0)_{mn}| < 1e-300.
    """
    q = boltzmann_block_weights(state.N, bath, omega0)
    twice_l, terms = _unitary_terms(state, q, twice_m, twice_n)
    norm = complex(np.sum(terms))
    if abs(norm) < 1e-300:
        raise DegenerateStateError(
            f"initial element ({twice_m}/2, {twice_n}/2) vanishes; mu weights undefined")
    return twice_l, terms / norm


def rho_element_correlated(t, twice_m: int, twice_n: int, bath, state, omega0: float,
                           kernels: EvolutionKernels | None = None) -> DensityElement:
    """Element of rho_S(t) for a preparation correlated with the bath.

    A projective state uses real weights p_l.  A unitary preparation sums
    q_l <m|Omega|l> <l|Omega^dag|n> exp(-2 i l (n - m) theta) directly, which
    needs no division; the reported correlation factor is that sum over
    rho_S(0)_{mn} and is ``None`` when the initial element vanishes.
    """
    k = kernels or EvolutionKernels.unpulsed(t, bath, omega0)
    log_mod, phase = k.element_factor(twice_m, twice_n)
    evol = complex(np.exp(log_mod + 1j * phase))
    theta = k.theta
    if getattr(state, "kind", None) == "projective":
        weights = preparation_weights(state, bath, omega0)
        rho0 = state.rho0_element(twice_m, twice_n)
        corr = CorrelationFactor(_exact_sum(weights, twice_m, twice_n, theta), "exact_sum")
        return DensityElement(twice_m, twice_n, rho0, log_mod, phase, corr, rho0 * evol * corr.value)
    if getattr(state, "kind", None) != "unitary":
        raise DomainError("state must be a ProjectiveState or UnitaryPreparation")
    q = boltzmann_block_weights(state.N, bath, omega0)
    twice_l, terms = _unitary_terms(state, q, twice_m, twice_n)
    ang = -theta * twice_l * ((twice_n - twice_m) / 2.0)
    rho0 = complex(np.sum(terms))
    rotated = complex(np.sum(terms * np.exp(1j * ang)))
    corr = None
    if abs(rho0) >= 1e-300:
        corr = CorrelationFactor(rotated / rho0, "exact_sum")
    return DensityElement(twice_m, twice_n, rho0, log_mod, phase, corr, rotated * evol)


def _half_index(N: int) -> np.ndarray:
    return basis_twice_m(N) / 2.0


def initial_reduced_state(state, bath=None, omega0: float = 0.0) -> np.ndarray:
    """rho_S(0) as a dense matrix; a unitary preparation needs ``bath``."""
    if state.kind == "projective":
        psi = state.amplitudes()
        return np.outer(psi, psi.conj())
    return reduced_density_matrix(0.0, state, bath, omega0, preparation="correlated")


def reduced_density_matrix(t, state, bath, omega0: float, preparation: str = "correlated",
                           kernels: EvolutionKernels | None = None) -> np.ndarray:
    """Full rho_S(t) for small N, ascending twice_m ordering.

    ``preparation`` is ``"factorized"`` (product of rho_S(0) with the bare
    thermal bath) or ``"correlated"``.
    """
    if preparation not in ("factorized", "correlated"):
        raise DomainError(f"preparation must be 'factorized' or 'correlated', got {preparation!r}")
    k = kernels or EvolutionKernels.unpulsed(t, bath, omega0)
    N = state.N
    m = _half_index(N)
    dm = m[:, None] - m[None, :]
    sq = m[:, None] ** 2 - m[None, :] ** 2
    evol = np.exp(-dm * dm * k.B - 1j * (k.free_phase * dm + k.D * sq))
    theta = k.theta

    if state.kind == "unitary":
        q = boltzmann_block_weights(N, bath, omega0)
        idx = q.dominant()
        omega = np.column_stack([state.column(tl) for tl in q.twice_l[idx]])
        l = q.twice_l[idx] / 2.0
        if preparation == "factorized":
            w = omega
        else:
            w = omega * np.exp(2j * theta * np.outer(m, l))
        return (w * q.p[idx]) @ w.conj().T * evol

    rho0 = initial_reduced_state(state)
    if preparation == "factorized":
        return rho0 * evol
    weights = preparation_weights(state, bath, omega0)
    idx = weights.dominant()
    l = weights.twice_l[idx] / 2.0
    # F depends on (m, n) only through n - m = -dm
    diffs = np.arange(-N, N + 1)
    table = np.exp(-2j * theta * np.outer(diffs, l)) @ weights.p[idx]
    F = table[(-dm).astype(int) + N]
    return rho0 * evol * F


def _coherent_first_offdiagonal(N: int) -> np.ndarray:
    # A(m) = rho0_{m,m+1} sqrt((j - m)(j + m + 1)) for m = -j .. j - 1, in log space
    k = np.arange(N)  # j + m
    log_rho = 0.5 * (2.0 * gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0)
                     - gammaln(k + 2.0) - gammaln(N - k)) - N * math.log(2.0)
    return np.exp(log_rho + 0.5 * np.log((N - k) * (k + 1.0)))


def X_of_t(N: int, t, bath) -> complex:
    """(2/N) sum_m rho0_{m,m+1} exp(2 i m D(t)) sqrt((N/2 - m)(N/2 + m + 1)).

    The coherent-state structure factor: X(0) = 1 and |X| <= 1.
    """
    N = int(N)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    D = float(bath.D(_check_time(t)))
    two_m = basis_twice_m(N)[:-1].astype(float)
    return complex((2.0 / N) * np.sum(_coherent_first_offdiagonal(N) * np.exp(1j * D * two_m)))


class JxEvaluator:
    """j_x(t) = (2/N) Re sum_m rho_{m,m+1}(t) sqrt((j - m)(j + m + 1)) in O(N) per instant.

    The l-structure of the preparation is fixed once; each instant then
    costs one complex exponential per basis index.  ``correlation_mode`` is
    ``"none"`` (the preparation's rho_S(0) times a bare thermal bath),
    ``"exact"`` (the full weight sum) or ``"large_N"`` (all weight on the
    lowest block).
    """

    def __init__(self, state, bath, omega0: float, correlation_mode: str = "exact"):
        if correlation_mode not in CORRELATION_MODES:
            raise DomainError(f"correlation_mode must be one of {CORRELATION_MODES}, got {correlation_mode!r}")
        self.state = state
        self.bath = bath
        self.omega0 = float(omega0)
        self.mode = correlation_mode
        N = self.N = state.N
        self._odd = (basis_twice_m(N)[:-1] + 1).astype(float)  # 2m + 1
        ladder = np.sqrt((N - np.arange(N)) * (np.arange(N) + 1.0))
        if state.kind == "projective":
            amp = state.amplitudes()
            self._A = (amp[:-1] * np.conj(amp[1:]) * ladder)[None, :]
            self._twice_l = None
            if correlation_mode == "exact":
                w = preparation_weights(state, bath, omega0)
                idx = w.dominant()
                self._twice_l = w.twice_l[idx].astype(float)
                self._p = w.p[idx]
        elif state.kind == "unitary":
            q = boltzmann_block_weights(N, bath, omega0)
            idx = q.dominant()
            rows = []
            for tl, p in zip(q.twice_l[idx], q.p[idx]):
                col = state.column(tl)
                rows.append(p * col[:-1] * np.conj(col[1:]) * ladder)
            self._A = np.array(rows)
            self._twice_l = q.twice_l[idx].astype(float)
        else:
            raise DomainError("state must be a ProjectiveState or UnitaryPreparation")

    def at(self, kernels: EvolutionKernels) -> float:
        """j_x for precomputed kernels."""
        theta = kernels.theta
        Y = self._A @ np.exp(1j * kernels.D * self._odd)
        if self.mode == "none":
            total = np.sum(Y)
        elif self.mode == "large_N":
            total = np.exp(1j * self.N * theta) * np.sum(Y)
        elif self.state.kind == "projective":
            total = Y[0] * np.sum(self._p * np.exp(-1j * theta * self._twice_l))
        else:
            total = np.sum(Y * np.exp(-1j * theta * self._twice_l))
        value = (2.0 / self.N) * math.exp(-kernels.B) * (np.exp(1j * kernels.free_phase) * total).real
        return float(value)

    def __call__(self, t) -> float:
        return self.at(EvolutionKernels.unpulsed(t, self.bath, self.omega0))

    def series(self, times, threads: int = 1) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if times.size and (not np.all(np.isfinite(times)) or np.min(times) < 0.0):
            raise DomainError("times must be finite and >= 0")
        B = np.asarray(self.bath.B(times), dtype=float)
        D = np.asarray(self.bath.D(times), dtype=float)
        phi = np.asarray(self.bath.phi(times), dtype=float)
        kernels = [EvolutionKernels(float(t), self.omega0 * float(t), float(b), float(d), float(p))
                   for t, b, d, p in zip(times, B, D, phi)]
        return _map(self.at, kernels, threads)


def _map(func, items, threads: int) -> np.ndarray:
    threads = int(threads or 1)
    if threads <= 1 or len(items) < 2:
        return np.array([func(x) for x in items], dtype=float)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(func, items)), dtype=float)


def _resolve_state(N, state):
    if state is None:
        return ProjectiveState.coherent_x(N)
    if state.N != N:
        raise DomainError(f"state is for N={state.N}, requested N={N}")
    return state


def jx(t, N: int, bath, state=None, correlation_mode: str = "none", omega0: float = 0.0) -> float:
    """Scaled collective polarization 2 <J_x> / N at time ``t``.

    ``state`` defaults to the x-polarized coherent state.
    """
    state = _resolve_state(N, state)
    return JxEvaluator(state, bath, omega0, correlation_mode)(t)


def jx_series(times, N: int, bath, state=None, correlation_mode: str = "none", omega0: float = 0.0,
              threads: int = 1, name: str = "jx", metadata: dict | None = None) -> "TimeSeries":
    state = _resolve_state(N, state)
    values = JxEvaluator(state, bath, omega0, correlation_mode).series(times, threads)
    meta = {"N": N, "omega0": omega0, "preparation": state.kind, "correlation_mode": correlation_mode}
    meta.update(metadata or {})
    return TimeSeries(np.asarray(times, dtype=float), values, name=name, metadata=meta)


def correlation_timescale(N: int, bath) -> float | None:
    """t_c = 1 / (N C); ``None`` when the bath is uncoupled and t_c is unbounded."""
    N = int(N)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    C = float(bath.C)
    if C == 0.0:
        return None
    return 1.0 / (N * C)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Values on a strictly increasing time grid.

    Real series are written as columns ``t,<name>``; complex ones as
    ``t,re,im``.
    """

    t: np.ndarray
    values: np.ndarray
    name: str = "value"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1 or v.shape != t.shape:
            raise DomainError("time and value arrays must be one-dimensional and equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise DomainError("time grid must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        if self.is_complex:
            buf.write("t,re,im\n")
            for t, v in zip(self.t, self.values):
                buf.write(f"{t:.17g},{v.real:.17g},{v.imag:.17g}\n")
        else:
            buf.write(f"t,{self.name}\n")
            for t, v in zip(self.t, self.values):
                buf.write(f"{t:.17g},{float(v):.17g}\n")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(os.fspath(path), "w", newline="\n", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())
