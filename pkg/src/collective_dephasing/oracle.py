"""Brute-force reference dynamics for a spin coupled to a few truncated modes.

Two exact engines evolve the truncated Hamiltonian

    H = omega0 J_z + sum_k omega_k b_k^dag b_k + 2 J_z sum_k (g_k^* b_k + g_k b_k^dag)

* the dense engine assembles H on the full product space, diagonalizes it
  once and forms every state by matrix functions of that decomposition;
* the mode engine uses that H commutes with J_z: in the block J_z = l it is
  omega0 l plus a sum of independent single-mode Hamiltonians, so thermal
  states and propagators factorize mode by mode and a two-mode bath with
  60 Fock states per mode costs a handful of 60 x 60 diagonalizations.

Both are exact for the same truncated operator; they are checked against
each other.  :class:`DiscreteBath` supplies the finite-sum kernels that the
closed-form engine consumes when the bath is this set of modes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .dynamics import reduced_density_matrix
from .errors import DegenerateStateError, DomainError, SizeError
from .spin import ProjectiveState, UnitaryPreparation, basis_twice_m, spin_operators

__all__ = [
    "MAX_DIMENSION",
    "DiscreteBathSpec",
    "DiscreteBath",
    "Hamiltonian",
    "assemble_hamiltonian",
    "prepare_initial",
    "evolve_and_trace",
    "evolve_with_pulses",
    "ModeOracle",
    "discrete_closed_form",
    "closed_form_states",
    "OracleReport",
    "compare_states",
    "equivalence_report",
]

MAX_DIMENSION = 200_000
# Dense diagonalization beyond this size is a mistake at desk scale.
_DENSE_LIMIT = 6000


@dataclass(frozen=True)
class DiscreteBathSpec:
    """Explicit bath modes (omega_k, g_k) with a per-mode Fock cutoff."""

    modes: tuple
    n_max: int

    def __post_init__(self):
        modes = tuple((float(w), complex(g)) for w, g in self.modes)
        if not modes:
            raise DomainError("a discrete bath needs at least one mode")
        if any(not (w > 0.0 and math.isfinite(w)) for w, _ in modes):
            raise DomainError("mode frequencies must be finite and positive")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise DomainError(f"Fock cutoff must be an integer >= 2, got {self.n_max!r}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def omegas(self) -> np.ndarray:
        return np.array([w for w, _ in self.modes])

    @property
    def coupling_sq(self) -> np.ndarray:
        """4 |g_k|^2 per mode."""
        return np.array([4.0 * abs(g) ** 2 for _, g in self.modes])

    def with_cutoff(self, n_max: int) -> "DiscreteBathSpec":
        return DiscreteBathSpec(self.modes, n_max)


def _coth_half(beta: float, w: np.ndarray) -> np.ndarray:
    if math.isinf(beta):
        return np.ones_like(w)
    return 1.0 / np.tanh(0.5 * beta * w)


class DiscreteBath:
    """Bath kernels as finite sums over explicit modes.

    C = sum 4|g|^2 / w, Phi(t) = sum 4|g|^2 sin(w t) / w^2,
    B(t) = sum 4|g|^2 (1 - cos w t) coth(beta w / 2) / w^2 and
    D(t) = sum 4|g|^2 (sin w t - w t) / w^2.

    ``phi_sign`` multiplies Phi and exists only so that validation can
    confirm a flipped sign is detected.
    """

    def __init__(self, modes, beta: float, phi_sign: float = 1.0):
        if isinstance(modes, DiscreteBathSpec):
            modes = modes.modes
        spec = DiscreteBathSpec(modes, 2)
        if not beta > 0.0:
            raise DomainError(f"beta must be > 0, got {beta!r}")
        self.beta = float(beta)
        self.omegas = spec.omegas
        self.weights = spec.coupling_sq
        self.phi_sign = float(phi_sign)
        self._coth = _coth_half(self.beta, self.omegas)

    @property
    def C(self) -> float:
        return float(np.sum(self.weights / self.omegas))

    def _sum(self, t, per_mode):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError("kernels are defined for t >= 0")
        wt = np.multiply.outer(t, self.omegas)
        out = np.sum(per_mode(wt) * self.weights / self.omegas ** 2, axis=-1)
        return float(out) if out.ndim == 0 else out

    def phi(self, t):
        return self._sum(t, lambda wt: self.phi_sign * np.sin(wt))

    def B(self, t):
        return self._sum(t, lambda wt: 2.0 * np.sin(0.5 * wt) ** 2 * self._coth)

    def D(self, t):
        return self._sum(t, lambda wt: np.sin(wt) - wt)


def _annihilation(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, n_max)), 1)


class Hamiltonian:
    """H_total on |m> x |n_1 ... n_K>, spin index slowest."""

    def __init__(self, N: int, spec: DiscreteBathSpec, omega0: float, matrix):
        self.N = N
        self.spec = spec
        self.omega0 = float(omega0)
        self.matrix = matrix
        self.dim_s = N + 1
        self.dim_b = spec.n_max ** len(spec.modes)

    @property
    def dim(self) -> int:
        return self.dim_s * self.dim_b

    def dense(self) -> np.ndarray:
        if self.dim > _DENSE_LIMIT:
            raise SizeError(f"dense operations need dimension <= {_DENSE_LIMIT}, have {self.dim}")
        return self.matrix.toarray()

    @cached_property
    def eigh(self):
        return np.linalg.eigh(self.dense())

    @cached_property
    def bath_hamiltonian(self) -> np.ndarray:
        """Diagonal of sum_k omega_k n_k on the bath factor."""
        n = np.arange(self.spec.n_max, dtype=float)
        diag = np.zeros(1)
        for w in self.spec.omegas:
            diag = np.add.outer(diag, w * n).ravel()
        return diag


def assemble_hamiltonian(N: int, spec: DiscreteBathSpec, omega0: float) -> Hamiltonian:
    """Sparse Hermitian H_total for N spins and the modes of ``spec``."""
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    K = len(spec.modes)
    dim = (N + 1) * spec.n_max ** K
    if dim > MAX_DIMENSION:
        raise SizeError(f"total dimension {dim} exceeds the budget {MAX_DIMENSION}")
    n = spec.n_max
    eye = sp.identity(n, format="csr")
    b = sp.csr_matrix(_annihilation(n))
    num = sp.diags(np.arange(n, dtype=float), format="csr")

    def embed(op, k):
        out = sp.identity(1, format="csr")
        for j in range(K):
            out = sp.kron(out, op if j == k else eye, format="csr")
        return out

    h_b = sp.csr_matrix((n ** K, n ** K))
    coupling = sp.csr_matrix((n ** K, n ** K), dtype=complex)
    for k, (w, g) in enumerate(spec.modes):
        h_b = h_b + w * embed(num, k)
        coupling = coupling + np.conj(g) * embed(b, k) + g * embed(b.T.tocsr(), k)
    jz = sp.diags(basis_twice_m(N) / 2.0, format="csr")
    eye_s = sp.identity(N + 1, format="csr")
    eye_b = sp.identity(n ** K, format="csr")
    H = (omega0 * sp.kron(jz, eye_b) + sp.kron(eye_s, h_b) + 2.0 * sp.kron(jz, coupling)).tocsr()
    return Hamiltonian(N, spec, omega0, H.astype(complex))


def _psi_vector(N, psi) -> np.ndarray:
    if isinstance(psi, ProjectiveState):
        return psi.amplitudes()
    vec = np.asarray(psi, dtype=complex)
    if vec.shape != (N + 1,):
        raise DomainError(f"state vector must have length {N + 1}")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise DegenerateStateError("state vector vanishes")
    return vec / norm


def _omega_matrix(N, omega) -> np.ndarray:
    if isinstance(omega, UnitaryPreparation):
        return omega.dense()
    mat = np.asarray(omega, dtype=complex)
    if mat.shape != (N + 1, N + 1):
        raise DomainError(f"preparation matrix must be {N + 1} x {N + 1}")
    return mat


def prepare_initial(kind: str, prep, beta: float, H: Hamiltonian) -> np.ndarray:
    """Full initial density matrix by exact matrix functions of H.

    ``kind`` is ``factorized`` (|psi><psi| x thermal bath), ``projective``
    (|psi><psi| x <psi|exp(-beta H)|psi> / Z) or ``unitary``
    (Omega exp(-beta H) Omega^dag / Z).  ``prep`` is the state for the first
    two and the preparation for the last.
    """
    if not (beta > 0.0 and math.isfinite(beta)):
        raise DomainError(f"oracle preparation needs finite beta > 0, got {beta!r}")
    N = H.N
    if kind == "factorized":
        psi = _psi_vector(N, prep)
        eb = H.bath_hamiltonian
        w = np.exp(-beta * (eb - eb.min()))
        rho_b = np.diag(w / w.sum())
        return np.kron(np.outer(psi, psi.conj()), rho_b)
    if kind not in ("projective", "unitary"):
        raise DomainError(f"unknown preparation kind {kind!r}")
    E, V = H.eigh
    gibbs = (V * np.exp(-beta * (E - E.min()))) @ V.conj().T
    if kind == "projective":
        psi = _psi_vector(N, prep)
        blocks = gibbs.reshape(N + 1, H.dim_b, N + 1, H.dim_b)
        bath_part = np.einsum("i,ibjc,j->bc", psi.conj(), blocks, psi)
        rho = np.kron(np.outer(psi, psi.conj()), bath_part)
    else:
        omega = np.kron(_omega_matrix(N, prep), np.eye(H.dim_b))
        rho = omega @ gibbs @ omega.conj().T
    tr = np.trace(rho).real
    if not tr > 0.0:
        raise DegenerateStateError("prepared state has zero trace")
    return rho / tr


def _partial_trace(rho: np.ndarray, dim_s: int, dim_b: int) -> np.ndarray:
    return np.einsum("ibjb->ij", rho.reshape(dim_s, dim_b, dim_s, dim_b))


def evolve_and_trace(rho0: np.ndarray, H: Hamiltonian, t) -> np.ndarray:
    """rho_S(t) = Tr_B[U rho0 U^dag]; ``t`` may be a scalar or an array."""
    E, V = H.eigh
    rho_e = V.conj().T @ rho0 @ V
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0.0):
        raise DomainError("times must be >= 0")
    out = []
    for tau in times:
        ph = np.exp(-1j * E * tau)
        rho_t = V @ (ph[:, None] * rho_e * ph.conj()[None, :]) @ V.conj().T
        out.append(_partial_trace(rho_t, H.dim_s, H.dim_b))
    out = np.array(out)
    return out[0] if np.ndim(t) == 0 else out


def evolve_with_pulses(rho0: np.ndarray, H: Hamiltonian, timings, t: float) -> np.ndarray:
    """Reduced state in the toggling frame after ideal pi_x pulses at ``timings``.

    The lab-frame state after N_d pulses P = exp(-i pi J_x) is rotated back
    by P^(-N_d), which flips J_z -> (-1)^(N_d) J_z and leaves J_x alone.
    """
    E, V = H.eigh
    N = H.N
    jx = spin_operators(N)["x"]
    ew, ev = np.linalg.eigh(jx)
    pulse_s = (ev * np.exp(-1j * np.pi * ew)) @ ev.conj().T
    pulse = np.kron(pulse_s, np.eye(H.dim_b))
    nodes = [0.0, *sorted(float(x) for x in timings), float(t)]
    rho = rho0
    for p in range(1, len(nodes)):
        dt = nodes[p] - nodes[p - 1]
        if dt < 0.0:
            raise DomainError("pulse timings must lie in [0, t]")
        U = (V * np.exp(-1j * E * dt)) @ V.conj().T
        rho = U @ rho @ U.conj().T
        if p < len(nodes) - 1:
            rho = pulse @ rho @ pulse.conj().T
    rho_s = _partial_trace(rho, H.dim_s, H.dim_b)
    back = np.linalg.matrix_power(pulse_s.conj().T, len(nodes) - 2)
    return back @ rho_s @ back.conj().T


class ModeOracle:
    """Exact reduced dynamics using the J_z block structure of H.

    For J_z = l each mode k evolves under h_{k,l} = omega_k n + 2 l (g^* b + g b^dag)
    truncated to ``n_max`` levels, and the truncated H_total is exactly
    omega0 l + sum_k h_{k,l} in that block.  Traces of products over the
    bath therefore factor into single-mode traces.
    """

    def __init__(self, N: int, spec: DiscreteBathSpec, omega0: float):
        self.N = int(N)
        self.spec = spec
        self.omega0 = float(omega0)
        self.twice = basis_twice_m(self.N)
        n = spec.n_max
        b = _annihilation(n)
        num = np.diag(np.arange(n, dtype=float))
        self._eig = {}
        for k, (w, g) in enumerate(spec.modes):
            for tl in self.twice:
                h = w * num + tl * (np.conj(g) * b + g * b.T)
                self._eig[k, int(tl)] = np.linalg.eigh(h)
        self._bare = [w * np.arange(n, dtype=float) for w in spec.omegas]

    def _propagator(self, k, tl, t):
        E, V = self._eig[k, int(tl)]
        return (V * np.exp(-1j * E * t)) @ V.conj().T

    def reduced_states(self, kind: str, prep, beta: float, times) -> np.ndarray:
        """rho_S(t) for every t in ``times``; shape (T, N+1, N+1)."""
        if not (beta > 0.0 and math.isfinite(beta)):
            raise DomainError(f"oracle preparation needs finite beta > 0, got {beta!r}")
        N = self.N
        K = len(self.spec.modes)
        times = np.asarray(times, dtype=float)
        m = self.twice / 2.0

        # thermal factor per block, shifted per mode so every exponent is <= 0
        shift = [min(self._eig[k, int(tl)][0].min() for tl in self.twice) for k in range(K)]
        if kind == "factorized":
            psi = _psi_vector(N, prep)
            thermal = []
            for k in range(K):
                w = np.exp(-beta * self._bare[k])
                thermal.append(np.diag(w / w.sum()))
            blocks = [(np.outer(psi, psi.conj()), thermal)]
        elif kind in ("projective", "unitary"):
            log_c = -beta * self.omega0 * m
            if kind == "projective":
                psi = _psi_vector(N, prep)
                with np.errstate(divide="ignore"):
                    log_c = log_c + np.log(np.abs(psi) ** 2)
                system = [np.outer(psi, psi.conj())] * (N + 1)
            else:
                omega = _omega_matrix(N, prep)
                system = [np.outer(omega[:, i], omega[:, i].conj()) for i in range(N + 1)]
            blocks = []
            log_z = []
            for i, tl in enumerate(self.twice):
                mats = []
                log_tr = 0.0
                for k in range(K):
                    E, V = self._eig[k, int(tl)]
                    w = np.exp(-beta * (E - shift[k]))
                    log_tr += math.log(w.sum())
                    mats.append((V * (w / w.sum())) @ V.conj().T)
                log_z.append(log_c[i] + log_tr)
                blocks.append((system[i], mats))
            log_z = np.array(log_z)
            if not np.any(np.isfinite(log_z)):
                raise DegenerateStateError("all preparation blocks vanish")
            weights = np.exp(log_z - np.max(log_z))
            weights /= weights.sum()
            blocks = [(weights[i] * s, mats) for i, (s, mats) in enumerate(blocks) if weights[i] > 0.0]
        else:
            raise DomainError(f"unknown preparation kind {kind!r}")

        out = np.zeros((times.size, N + 1, N + 1), dtype=complex)
        for it, tau in enumerate(times):
            props = {(k, int(tl)): self._propagator(k, tl, tau) for k in range(K) for tl in self.twice}
            for a, tm in enumerate(self.twice):
                for c, tn in enumerate(self.twice):
                    free = np.exp(-1j * self.omega0 * (m[a] - m[c]) * tau)
                    total = 0.0j
                    for system, mats in blocks:
                        if system[a, c] == 0.0:
                            continue
                        prod = 1.0 + 0.0j
                        for k in range(K):
                            # Tr[u_m R u_n^dag] = sum_ij (u_m R)_ij conj(u_n)_ij
                            prod *= np.sum((props[k, int(tm)] @ mats[k]) * props[k, int(tn)].conj())
                        total += system[a, c] * prod
                    out[it, a, c] = free * total
        return out


def _as_state(kind, prep, N):
    if kind == "unitary":
        if isinstance(prep, UnitaryPreparation):
            return prep
        return UnitaryPreparation.from_matrix(prep)
    if isinstance(prep, ProjectiveState):
        return prep
    return ProjectiveState.from_amplitudes(N, prep)


def closed_form_states(kind: str, prep, N: int, bath, omega0: float, times) -> np.ndarray:
    """Closed-form rho_S(t) on a time grid for any kernel-protocol bath."""
    state = _as_state(kind, prep, N)
    preparation = "factorized" if kind == "factorized" else "correlated"
    return np.array([
        reduced_density_matrix(t, state, bath, omega0, preparation) for t in np.asarray(times, dtype=float)
    ])


def discrete_closed_form(t, twice_m: int, twice_n: int, spec: DiscreteBathSpec, kind: str, prep,
                         beta: float, omega0: float, N: int, phi_sign: float = 1.0) -> complex:
    """Closed-form rho_S(t)_{mn} with every bath integral replaced by its mode sum."""
    bath = DiscreteBath(spec, beta, phi_sign)
    rho = closed_form_states(kind, prep, N, bath, omega0, [t])[0]
    twice = list(basis_twice_m(N))
    return complex(rho[twice.index(twice_m), twice.index(twice_n)])


@dataclass
class OracleReport:
    """Elementwise comparison of closed-form and oracle reduced states."""

    label: str
    rows: list = field(default_factory=list)
    truncation_change: float | None = None

    @property
    def max_deviation(self) -> float:
        return max((r[5] for r in self.rows), default=0.0)

    @property
    def worst(self):
        return max(self.rows, key=lambda r: r[5]) if self.rows else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["m", "n", "t", "abs_closed_form", "abs_oracle", "deviation"])
            for m, n, t, a, b, d in self.rows:
                writer.writerow([f"{m:g}", f"{n:g}", f"{t:.17g}", f"{a:.17g}", f"{b:.17g}", f"{d:.17g}"])


def compare_states(label: str, N: int, times, closed: np.ndarray, oracle: np.ndarray) -> OracleReport:
    report = OracleReport(label)
    m = basis_twice_m(N) / 2.0
    for it, t in enumerate(times):
        for a in range(N + 1):
            for c in range(N + 1):
                x, y = closed[it, a, c], oracle[it, a, c]
                report.rows.append((m[a], m[c], float(t), abs(x), abs(y), abs(x - y)))
    return report


def _oracle_states(N, spec, omega0, kind, prep, beta, times, engine):
    if engine == "dense":
        H = assemble_hamiltonian(N, spec, omega0)
        rho0 = prepare_initial(kind, _oracle_prep(kind, prep), beta, H)
        return evolve_and_trace(rho0, H, times)
    return ModeOracle(N, spec, omega0).reduced_states(kind, _oracle_prep(kind, prep), beta, times)


def _oracle_prep(kind, prep):
    if kind == "unitary" and isinstance(prep, UnitaryPreparation):
        return prep.dense()
    return prep


def equivalence_report(N: int, spec: DiscreteBathSpec, omega0: float, kind: str, prep, beta: float,
                       times, engine: str = "mode", phi_sign: float = 1.0,
                       truncation_step: int | None = 10) -> OracleReport:
    """Compare the closed form on a discrete bath with an exact engine.

    With ``truncation_step`` set, the oracle is rerun at ``n_max + step``
    and the largest change of any deviation is stored on the report.
    """
    times = np.asarray(times, dtype=float)
    bath = DiscreteBath(spec, beta, phi_sign)
    closed = closed_form_states(kind, prep, N, bath, omega0, times)
    oracle = _oracle_states(N, spec, omega0, kind, prep, beta, times, engine)
    label = f"{kind} N={N} K={len(spec.modes)} beta={beta:g} n_max={spec.n_max} engine={engine}"
    report = compare_states(label, N, times, closed, oracle)
    if truncation_step:
        finer = _oracle_states(N, spec.with_cutoff(spec.n_max + truncation_step), omega0, kind, prep,
                               beta, times, engine)
        report.truncation_change = float(np.max(np.abs(finer - oracle)))
    return report
