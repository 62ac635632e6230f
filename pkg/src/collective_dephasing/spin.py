"""Collective-spin bookkeeping in the J_z basis.

Basis states |m> are indexed by ``twice_m = 2 m`` in {-N, -N+2, ..., N} so that
half-integer m stays exact for odd N.  Arrays over the basis are ordered by
ascending ``twice_m``: position ``i`` holds ``twice_m = -N + 2 i``.

Everything that multiplies large binomials with Boltzmann factors is kept in
log space; at N = 20000 the weight exp(beta l^2 C) reaches exp(1e7).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import DegenerateStateError, DomainError
from .special import log_binomial, logsumexp

__all__ = [
    "basis_twice_m",
    "check_index",
    "spin_operators",
    "wigner_coherent_amplitude",
    "coherent_rho0_element",
    "ProjectiveState",
    "UnitaryPreparation",
    "PreparationWeights",
    "preparation_weights",
    "boltzmann_block_weights",
]

# Terms in a Wigner sum may exceed the unit-normalized result by at most this
# factor, bounding the absolute error of an element near 1e-10.
_WIGNER_CANCELLATION_LIMIT = 1e6
# Largest N for which a rotation is materialized as a dense matrix.
_DENSE_ROTATION_MAX_N = 400


def basis_twice_m(N: int) -> np.ndarray:
    return np.arange(-N, N + 1, 2)


def check_index(N: int, twice_m: int) -> int:
    twice_m = int(twice_m)
    if abs(twice_m) > N or (twice_m - N) % 2:
        raise DomainError(
            f"twice_m={twice_m} is not a valid J_z index for N={N} "
            f"(need |twice_m| <= N and twice_m = N mod 2)")
    return (twice_m + N) // 2


def _check_N(N) -> int:
    if int(N) != N or N < 1:
        raise DomainError(f"particle count must be a positive integer, got {N!r}")
    return int(N)


def spin_operators(N: int) -> dict:
    """Dense J_z, J_+, J_-, J_x, J_y for spin N/2 in the ascending-m basis."""
    N = _check_N(N)
    m = basis_twice_m(N) / 2.0
    j = N / 2.0
    jz = np.diag(m).astype(complex)
    jp = np.zeros((N + 1, N + 1), dtype=complex)
    for i in range(N):
        jp[i + 1, i] = math.sqrt((j - m[i]) * (j + m[i] + 1.0))
    jm = jp.conj().T
    return {
        "z": jz,
        "+": jp,
        "-": jm,
        "x": 0.5 * (jp + jm),
        "y": (jp - jm) / 2j,
    }


def wigner_coherent_amplitude(N: int, twice_m: int) -> float:
    """ln <m| exp(-i pi/2 J_y) |N/2> = (ln C(N, N/2 + m) - N ln 2) / 2.

    The amplitude itself is real and positive for every m.
    """
    N = _check_N(N)
    check_index(N, twice_m)
    return 0.5 * (log_binomial(N, (N + twice_m) // 2) - N * math.log(2.0))


def _coherent_log_amplitudes(N: int) -> np.ndarray:
    k = np.arange(N + 1)
    return 0.5 * (gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0) - N * math.log(2.0))


def coherent_rho0_element(N: int, twice_m: int, twice_n: int) -> float:
    """<m|psi><psi|n> for the x-polarized coherent state."""
    return math.exp(wigner_coherent_amplitude(N, twice_m) + wigner_coherent_amplitude(N, twice_n))


@dataclass(frozen=True, eq=False)
class ProjectiveState:
    """Pure system state |psi> selected by a projective measurement.

    Stored as ln|<l|psi>|^2 and arg <l|psi> per basis index; entries of
    ``log_amplitude_sq`` may be ``-inf`` for components that vanish.
    """

    N: int
    log_amplitude_sq: np.ndarray
    phase: np.ndarray

    kind = "projective"

    def __post_init__(self):
        _check_N(self.N)
        la = np.asarray(self.log_amplitude_sq, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if la.shape != (self.N + 1,) or ph.shape != (self.N + 1,):
            raise DomainError(f"state arrays must have length N+1 = {self.N + 1}")
        if np.any(np.isnan(la)) or np.any(la == np.inf) or not np.all(np.isfinite(ph)):
            raise DomainError("state arrays contain NaN or +inf")
        norm = logsumexp(la)
        if not np.isfinite(norm):
            raise DegenerateStateError("projective state has no nonzero amplitude")
        if abs(norm) > 1e-10:
            raise DomainError(f"state is not normalized: ln sum |psi|^2 = {norm:.3g}")
        object.__setattr__(self, "log_amplitude_sq", la)
        object.__setattr__(self, "phase", ph)

    @classmethod
    def coherent_x(cls, N: int) -> "ProjectiveState":
        """exp(-i pi/2 J_y)|N/2>, the +x eigenstate of J_x with eigenvalue N/2."""
        N = _check_N(N)
        return cls(N, 2.0 * _coherent_log_amplitudes(N), np.zeros(N + 1))

    @classmethod
    def from_amplitudes(cls, N: int, amplitudes) -> "ProjectiveState":
        """Build from complex amplitudes ordered by ascending twice_m; normalizes."""
        N = _check_N(N)
        amp = np.asarray(amplitudes, dtype=complex)
        if amp.shape != (N + 1,):
            raise DomainError(f"expected {N + 1} amplitudes, got shape {amp.shape}")
        mag = np.abs(amp)
        if not np.any(mag > 0.0):
            raise DegenerateStateError("all amplitudes vanish")
        with np.errstate(divide="ignore"):
            la = 2.0 * np.log(mag)
        la -= logsumexp(la)
        return cls(N, la, np.where(mag > 0.0, np.angle(amp), 0.0))

    @classmethod
    def from_file(cls, path, N: int | None = None) -> "ProjectiveState":
        """Read lines ``twice_l re im``; missing indices are zero amplitudes."""
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
        if data.shape[1] != 3:
            raise DomainError(f"{path}: expected columns twice_l re im")
        twice = data[:, 0].astype(int)
        if np.any(data[:, 0] != twice):
            raise DomainError(f"{path}: twice_l column must hold integers")
        if N is None:
            N = int(np.max(np.abs(twice)))
        amp = np.zeros(N + 1, dtype=complex)
        for tl, re, im in zip(twice, data[:, 1], data[:, 2]):
            amp[check_index(N, tl)] += complex(re, im)
        return cls.from_amplitudes(N, amp)

    def amplitudes(self) -> np.ndarray:
        return np.exp(0.5 * self.log_amplitude_sq + 1j * self.phase)

    def amplitude(self, twice_m: int) -> complex:
        i = check_index(self.N, twice_m)
        return complex(np.exp(0.5 * self.log_amplitude_sq[i] + 1j * self.phase[i]))

    def rho0_element(self, twice_m: int, twice_n: int) -> complex:
        i = check_index(self.N, twice_m)
        k = check_index(self.N, twice_n)
        log_mod = 0.5 * (self.log_amplitude_sq[i] + self.log_amplitude_sq[k])
        return complex(np.exp(log_mod + 1j * (self.phase[i] - self.phase[k])))


def _wigner_half_pi_column(N: int, c: int):
    """Column of d^{N/2}(pi/2) with column index m = c - N/2, all rows m'.

    Returns the real column ordered by ascending m', or ``None`` when the
    alternating Wigner sum would cancel beyond ``_WIGNER_CANCELLATION_LIMIT``.
    """
    a = np.arange(N + 1)          # j + m'
    b = N - a                     # j - m'
    d = N - c                     # j - m
    half_log_fact = 0.5 * (gammaln(a + 1.0) + gammaln(b + 1.0) + gammaln(c + 1.0) + gammaln(d + 1.0))
    logs = []
    signs = []
    for s in range(0, c + 1):
        valid = (a - c + s >= 0) & (b - s >= 0)
        with np.errstate(invalid="ignore"):
            log_term = (half_log_fact - gammaln(c - s + 1.0) - gammaln(s + 1.0)
                        - gammaln(np.where(valid, a - c + s, 0) + 1.0)
                        - gammaln(np.where(valid, b - s, 0) + 1.0) - 0.5 * N * math.log(2.0))
        logs.append(np.where(valid, log_term, -np.inf))
        signs.append(np.where((a - c + s) % 2 == 0, 1.0, -1.0))
    logs = np.array(logs)
    signs = np.array(signs)
    peak = np.max(logs, axis=0)
    if np.max(peak) > math.log(_WIGNER_CANCELLATION_LIMIT):
        return None
    finite = np.isfinite(peak)
    safe_peak = np.where(finite, peak, 0.0)
    total = np.sum(signs * np.exp(logs - safe_peak), axis=0)
    return np.where(finite, total * np.exp(safe_peak), 0.0)


@lru_cache(maxsize=8)
def _dense_rotation(N: int) -> np.ndarray:
    jy = spin_operators(N)["y"]
    return expm(1j * (math.pi / 2.0) * jy)


class UnitaryPreparation:
    """Unitary preparation Omega acting on the (N+1)-dimensional spin space.

    Only matrix elements <m|Omega|l> are ever needed; they are served column
    by column.  Use :meth:`from_matrix` for an explicit small matrix or
    :meth:`rotation_y_half_pi` for Omega = exp(i pi/2 J_y), evaluated from
    Wigner d elements.
    """

    kind = "unitary"

    def __init__(self, N: int, column_source, matrix=None, label: str = "custom"):
        self.N = _check_N(N)
        self._column_source = column_source
        self._cache = {}
        self.matrix = matrix
        self.label = label

    @classmethod
    def from_matrix(cls, matrix, tol: float = 1e-10) -> "UnitaryPreparation":
        omega = np.asarray(matrix, dtype=complex)
        n = omega.shape[0]
        if omega.shape != (n, n) or n < 2:
            raise DomainError("unitary preparation must be a square matrix of size >= 2")
        residual = np.max(np.abs(omega.conj().T @ omega - np.eye(n)))
        if residual > tol:
            raise DomainError(f"preparation matrix is not unitary (residual {residual:.3g})")
        return cls(n - 1, lambda c: omega[:, c], matrix=omega, label="matrix")

    @classmethod
    def rotation_y_half_pi(cls, N: int) -> "UnitaryPreparation":
        N = _check_N(N)

        def column(c):
            # <m| exp(i pi/2 J_y) |l> = d_{l m}(pi/2) = (-1)^(m - l) d_{m l}(pi/2);
            # columns near l = +N/2 go through d_{m l} = (-1)^(l - m) d_{-m,-l}.
            if c <= N - c:
                col = _wigner_half_pi_column(N, c)
                if col is not None:
                    k = np.arange(N + 1)
                    return np.where((k - c) % 2 == 0, 1.0, -1.0) * col
            else:
                col = _wigner_half_pi_column(N, N - c)
                if col is not None:
                    return col[::-1].copy()
            if N <= _DENSE_ROTATION_MAX_N:
                return _dense_rotation(N)[:, c]
            raise DomainError(
                f"rotation column twice_l={2 * c - N} at N={N} needs a Wigner sum with "
                "excessive cancellation and is too large to materialize")

        return cls(N, column, label="rotation_y_half_pi")

    def column(self, twice_l: int) -> np.ndarray:
        """<m|Omega|l> for all m (ascending twice_m)."""
        c = check_index(self.N, twice_l)
        if c not in self._cache:
            self._cache[c] = np.asarray(self._column_source(c), dtype=complex)
        return self._cache[c]

    def element(self, twice_m: int, twice_l: int) -> complex:
        return complex(self.column(twice_l)[check_index(self.N, twice_m)])

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.column_stack([self.column(tl) for tl in basis_twice_m(self.N)])


@dataclass(frozen=True, eq=False)
class PreparationWeights:
    """Normalized block weights p_l with their logarithms, ascending twice_l."""

    N: int
    log_p: np.ndarray
    p: np.ndarray
    beta: float
    omega0: float
    C: float

    def __post_init__(self):
        if np.any(self.p < 0.0) or abs(math.fsum(self.p) - 1.0) > 1e-12:
            raise DomainError("preparation weights must be nonnegative and sum to 1")

    @property
    def twice_l(self) -> np.ndarray:
        return basis_twice_m(self.N)

    def dominant(self, cut: float = 46.0) -> np.ndarray:
        """Indices whose weight is within exp(-cut) of the largest one."""
        return np.nonzero(self.log_p >= np.max(self.log_p) - cut)[0]


def _log_boltzmann(N: int, beta: float, omega0: float, C: float) -> np.ndarray:
    l = basis_twice_m(N) / 2.0
    return -beta * omega0 * l + beta * C * l * l


def _normalize(N, log_w, beta, omega0, C) -> PreparationWeights:
    if not np.any(np.isfinite(log_w)):
        raise DegenerateStateError("all preparation weights vanish")
    log_p = log_w - logsumexp(log_w)
    p = np.exp(log_p)
    p = p / math.fsum(p)
    return PreparationWeights(N, log_p, p, beta, omega0, C)


def _weights(N, log_amp_sq, bath, omega0) -> PreparationWeights:
    beta = float(bath.beta)
    C = float(bath.C)
    if math.isinf(beta):
        # Zero temperature: all weight on the lowest energies -omega0 l + ... among
        # components present in the state.
        energy = -_log_boltzmann(N, 1.0, omega0, C)
        support = np.isfinite(log_amp_sq)
        if not np.any(support):
            raise DegenerateStateError("all preparation weights vanish")
        e_min = np.min(energy[support])
        chosen = support & (energy <= e_min + 1e-12 * max(1.0, abs(e_min)))
        log_w = np.where(chosen, np.where(support, log_amp_sq, -np.inf), -np.inf)
        return _normalize(N, log_w, beta, omega0, C)
    return _normalize(N, log_amp_sq + _log_boltzmann(N, beta, omega0, C), beta, omega0, C)


def preparation_weights(state, bath, omega0: float) -> PreparationWeights:
    """p_l proportional to |<l|psi>|^2 exp(-beta omega0 l + beta l^2 C).

    ``bath`` supplies ``beta`` and ``C``.  Only projective preparations carry
    these weights; a unitary preparation mixes blocks through complex
    elements and uses :func:`boltzmann_block_weights` instead.
    """
    if getattr(state, "kind", None) != "projective":
        raise DomainError("preparation_weights applies to projective preparations")
    return _weights(state.N, state.log_amplitude_sq, bath, omega0)


def boltzmann_block_weights(N: int, bath, omega0: float) -> PreparationWeights:
    """exp(-beta omega0 l + beta l^2 C), normalized over all blocks l."""
    N = _check_N(N)
    return _weights(N, np.zeros(N + 1), bath, omega0)
