import math

import numpy as np
import pytest

from collective_dephasing.dd import bang_bang, evolution_kernels, udd
from collective_dephasing.dynamics import reduced_density_matrix
from collective_dephasing.errors import DomainError, SizeError
from collective_dephasing.oracle import (
    DiscreteBath,
    DiscreteBathSpec,
    ModeOracle,
    assemble_hamiltonian,
    closed_form_states,
    discrete_closed_form,
    equivalence_report,
    evolve_and_trace,
    evolve_with_pulses,
    prepare_initial,
)
from collective_dephasing.spin import ProjectiveState, UnitaryPreparation, basis_twice_m

TIMES = np.linspace(0.25, 5.0, 20)
ONE = ((1.0, 0.3),)
TWO = ((1.0, 0.2), (math.sqrt(2.0), 0.25 + 0.1j))


def prep_for(kind, N):
    return UnitaryPreparation.rotation_y_half_pi(N) if kind == "unitary" else ProjectiveState.coherent_x(N)


def dense_prep(kind, N):
    prep = prep_for(kind, N)
    return prep.dense() if kind == "unitary" else prep


def test_uncoupled_spectrum():
    spec = DiscreteBathSpec(((0.9, 0.0), (1.7, 0.0)), 4)
    H = assemble_hamiltonian(2, spec, 0.35)
    n = np.arange(4)
    expected = sorted(0.35 * m + 0.9 * a + 1.7 * b
                      for m in (-1, 0, 1) for a in n for b in n)
    np.testing.assert_allclose(np.linalg.eigvalsh(H.dense()), expected, atol=1e-12)


def test_single_spin_single_mode_matrix():
    w, g, omega0, n_max = 1.3, 0.2 - 0.1j, 0.6, 5
    H = assemble_hamiltonian(1, DiscreteBathSpec(((w, g),), n_max), omega0).dense()
    expected = np.zeros((2 * n_max, 2 * n_max), dtype=complex)
    for s, m in enumerate((-0.5, 0.5)):
        for n in range(n_max):
            i = s * n_max + n
            expected[i, i] = omega0 * m + w * n
            if n + 1 < n_max:
                # 2 m g b^dag raises n, 2 m g* b lowers it
                expected[i + 1, i] = 2 * m * g * math.sqrt(n + 1)
                expected[i, i + 1] = 2 * m * np.conj(g) * math.sqrt(n + 1)
    np.testing.assert_allclose(H, expected, atol=1e-15)


def test_hermitian():
    H = assemble_hamiltonian(3, DiscreteBathSpec(TWO, 8), 0.7).dense()
    assert np.max(np.abs(H - H.conj().T)) <= 1e-14


def test_size_budget():
    with pytest.raises(SizeError):
        assemble_hamiltonian(5, DiscreteBathSpec(TWO * 2, 20), 0.1)
    with pytest.raises(DomainError):
        DiscreteBathSpec(((0.0, 0.1),), 10)


def test_uncoupled_projective_is_factorized():
    spec = DiscreteBathSpec(((1.0, 0.0), (1.4, 0.0)), 6)
    H = assemble_hamiltonian(2, spec, 0.7)
    psi = ProjectiveState.coherent_x(2)
    a = prepare_initial("projective", psi, 1.5, H)
    b = prepare_initial("factorized", psi, 1.5, H)
    assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("kind", ["factorized", "projective", "unitary"])
def test_initial_trace(kind):
    H = assemble_hamiltonian(2, DiscreteBathSpec(TWO, 8), 0.7)
    rho = prepare_initial(kind, dense_prep(kind, 2), 2.0, H)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["factorized", "projective"])
def test_cold_bath_sits_in_its_ground_state(kind):
    w1, beta = 0.005, 1000.0
    H = assemble_hamiltonian(1, DiscreteBathSpec(((w1, 1e-5),), 12), 0.1)
    rho = prepare_initial(kind, ProjectiveState.coherent_x(1), beta, H)
    bath_pop = np.einsum("ibib->b", rho.reshape(2, 12, 2, 12)).real
    assert 1 - bath_pop[0] <= math.exp(-beta * w1) * 1.01


def test_evolution_at_time_zero_is_partial_trace():
    H = assemble_hamiltonian(2, DiscreteBathSpec(ONE, 10), 0.7)
    rho0 = prepare_initial("projective", ProjectiveState.coherent_x(2), 1.0, H)
    reduced = np.einsum("ibjb->ij", rho0.reshape(3, 10, 3, 10))
    np.testing.assert_allclose(evolve_and_trace(rho0, H, 0.0), reduced, atol=1e-13)


def test_uncoupled_evolution_is_free_precession():
    H = assemble_hamiltonian(2, DiscreteBathSpec(((1.0, 0.0),), 6), 0.7)
    psi = ProjectiveState.coherent_x(2)
    rho0 = prepare_initial("factorized", psi, 1.0, H)
    m = basis_twice_m(2) / 2
    start = evolve_and_trace(rho0, H, 0.0)
    for t in (0.3, 2.0):
        expected = start * np.exp(-1j * 0.7 * np.subtract.outer(m, m) * t)
        np.testing.assert_allclose(evolve_and_trace(rho0, H, t), expected, atol=1e-12)


def test_two_spins_factorized_against_closed_form():
    spec = DiscreteBathSpec(ONE, 40)
    psi = ProjectiveState.coherent_x(2)
    H = assemble_hamiltonian(2, spec, 0.7)
    exact = evolve_and_trace(prepare_initial("factorized", psi, 1.0, H), H, TIMES)
    closed = closed_form_states("factorized", psi, 2, DiscreteBath(spec, 1.0), 0.7, TIMES)
    off = ~np.eye(3, dtype=bool)
    assert np.max(np.abs(exact[:, off] - closed[:, off])) <= 1e-8


def test_mode_engine_keeps_populations():
    spec = DiscreteBathSpec(ONE, 20)
    rho = ModeOracle(2, spec, 0.7).reduced_states("projective", ProjectiveState.coherent_x(2), 1.0, TIMES)
    diag = np.einsum("tii->ti", rho)
    np.testing.assert_allclose(diag, np.broadcast_to(diag[0], diag.shape), atol=1e-13)


def test_mode_engine_single_mode_factorized():
    spec = DiscreteBathSpec(((1.0, 0.1),), 60)
    psi = ProjectiveState.coherent_x(1)
    H = assemble_hamiltonian(1, spec, 0.7)
    dense = evolve_and_trace(prepare_initial("factorized", psi, 2.0, H), H, TIMES)
    mode = ModeOracle(1, spec, 0.7).reduced_states("factorized", psi, 2.0, TIMES)
    assert np.max(np.abs(dense - mode)) <= 1e-8


def test_mode_engine_two_incommensurate_modes_projective():
    spec = DiscreteBathSpec(TWO, 20)
    psi = ProjectiveState.coherent_x(2)
    H = assemble_hamiltonian(2, spec, 0.7)
    dense = evolve_and_trace(prepare_initial("projective", psi, 1.0, H), H, TIMES)
    mode = ModeOracle(2, spec, 0.7).reduced_states("projective", psi, 1.0, TIMES)
    assert np.max(np.abs(dense - mode)) <= 1e-7


def test_discrete_closed_form_examples():
    spec = DiscreteBathSpec(((1.0, 0.1),), 60)
    psi = ProjectiveState.coherent_x(1)
    exact = ModeOracle(1, spec, 0.7).reduced_states("factorized", psi, 2.0, TIMES)
    for i, t in enumerate(TIMES):
        value = discrete_closed_form(t, -1, 1, spec, "factorized", psi, 2.0, 0.7, 1)
        assert abs(value - exact[i, 0, 1]) <= 1e-8
    spec = DiscreteBathSpec(TWO, 40)
    psi = ProjectiveState.coherent_x(2)
    exact = ModeOracle(2, spec, 0.7).reduced_states("projective", psi, 1.0, TIMES)
    for i, t in enumerate(TIMES):
        value = discrete_closed_form(t, -2, 2, spec, "projective", psi, 1.0, 0.7, 2)
        assert abs(value - exact[i, 0, 2]) <= 1e-7


@pytest.mark.parametrize("kind", ["factorized", "projective", "unitary"])
@pytest.mark.parametrize("beta", [1.0, 5.0])
def test_truncation_convergence_is_monotone(kind, beta):
    deviations = [equivalence_report(2, DiscreteBathSpec(ONE, n), 0.7, kind, prep_for(kind, 2), beta,
                                     TIMES, truncation_step=None).max_deviation
                  for n in (20, 40, 60)]
    assert deviations[1] <= deviations[0] + 1e-12
    assert deviations[2] <= deviations[1] + 1e-12
    assert deviations[2] <= 1e-7


@pytest.mark.parametrize("kind", ["factorized", "projective", "unitary"])
def test_pulsed_closed_form_against_exact_pulses(kind):
    spec = DiscreteBathSpec(ONE, 40)
    beta, omega0, t = 2.0, 0.7, 3.0
    bath = DiscreteBath(spec, beta)
    H = assemble_hamiltonian(2, spec, omega0)
    prep = prep_for(kind, 2)
    rho0 = prepare_initial(kind, dense_prep(kind, 2), beta, H)
    for seq in (udd(t, 3), bang_bang(t, 2)):
        exact = evolve_with_pulses(rho0, H, seq.timings, t)
        closed = reduced_density_matrix(t, prep, bath, omega0,
                                        "factorized" if kind == "factorized" else "correlated",
                                        kernels=evolution_kernels(seq, bath, omega0))
        assert np.max(np.abs(exact - closed)) <= 1e-7


def test_report_csv(tmp_path):
    rep = equivalence_report(1, DiscreteBathSpec(ONE, 20), 0.7, "projective", ProjectiveState.coherent_x(1),
                             1.0, TIMES[:3], truncation_step=None)
    path = tmp_path / "r.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 3 * 4
    assert rep.worst[5] == rep.max_deviation


def test_oracle_requires_finite_temperature():
    H = assemble_hamiltonian(1, DiscreteBathSpec(ONE, 5), 0.7)
    with pytest.raises(DomainError):
        prepare_initial("projective", ProjectiveState.coherent_x(1), math.inf, H)
