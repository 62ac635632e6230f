import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from collective_dephasing.errors import DegenerateStateError, DomainError
from collective_dephasing.spin import (
    ProjectiveState,
    UnitaryPreparation,
    _weights,
    basis_twice_m,
    boltzmann_block_weights,
    check_index,
    coherent_rho0_element,
    preparation_weights,
    spin_operators,
    wigner_coherent_amplitude,
)


def weights_bath(beta, C):
    return SimpleNamespace(beta=beta, C=C)


def test_single_spin_amplitudes():
    for tm in (-1, 1):
        assert math.exp(wigner_coherent_amplitude(1, tm)) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_two_spin_middle_amplitude():
    assert math.exp(wigner_coherent_amplitude(2, 0)) == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_large_N_normalization():
    state = ProjectiveState.coherent_x(2000)
    assert math.fsum(np.abs(state.amplitudes()) ** 2) == pytest.approx(1.0, abs=1e-9)
    trace = math.fsum(coherent_rho0_element(2000, tm, tm) for tm in basis_twice_m(2000))
    assert trace == pytest.approx(1.0, abs=1e-9)


def test_rho0_examples():
    assert coherent_rho0_element(2, 0, 2) == pytest.approx(math.sqrt(2) / 4, abs=1e-15)
    assert coherent_rho0_element(1, -1, 1) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("N", [1, 2, 5, 12])
def test_coherent_state_is_top_jx_eigenvector(N):
    ops = spin_operators(N)
    psi = ProjectiveState.coherent_x(N).amplitudes()
    np.testing.assert_allclose(ops["x"] @ psi, 0.5 * N * psi, atol=1e-12)


@pytest.mark.parametrize("N", range(1, 101, 7))
def test_parity_symmetry(N):
    for tm in basis_twice_m(N):
        assert wigner_coherent_amplitude(N, tm) == wigner_coherent_amplitude(N, -tm)


def test_weights_at_infinite_temperature_follow_amplitudes():
    rng = np.random.default_rng(3)
    amp = rng.normal(size=9) + 1j * rng.normal(size=9)
    state = ProjectiveState.from_amplitudes(8, amp)
    w = _weights(8, state.log_amplitude_sq, weights_bath(0.0, 0.3), 0.7)
    np.testing.assert_allclose(w.p, np.abs(amp) ** 2 / np.sum(np.abs(amp) ** 2), rtol=1e-13)


def test_reference_weights_concentrate(ref_bath):
    w = preparation_weights(ProjectiveState.coherent_x(2000), ref_bath, 0.1)
    assert w.twice_l[np.argmax(w.p)] == -2000
    assert w.p[0] >= 1 - 1e-12


def test_two_spin_weights_by_hand():
    beta, omega0, C = 1.0, 0.5, 0.1
    raw = [a * math.exp(-beta * omega0 * l + beta * C * l * l)
           for a, l in ((0.25, -1), (0.5, 0), (0.25, 1))]
    expected = [r / sum(raw) for r in raw]
    w = preparation_weights(ProjectiveState.coherent_x(2), weights_bath(beta, C), omega0)
    np.testing.assert_allclose(w.p, expected, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-500.0, 500.0), st.integers(1, 300), st.floats(0.01, 100.0), st.floats(0.0, 0.1))
def test_weights_ignore_normalization(shift, N, beta, C):
    log_amp = ProjectiveState.coherent_x(N).log_amplitude_sq
    bath = weights_bath(beta, C)
    a = _weights(N, log_amp, bath, 0.3)
    b = _weights(N, log_amp + shift, bath, 0.3)
    np.testing.assert_allclose(a.p, b.p, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3000), st.floats(1e-3, 10.0), st.floats(0.0, 1e-3), st.floats(1.0, 1e4))
def test_weights_peak_at_lowest_block(N, omega0, C, beta):
    # adjacent-weight ratio from the lowest block is at most N exp(-beta omega0)
    if beta * omega0 * N < 50 or beta * omega0 <= math.log(N) or C * N >= omega0:
        return
    w = preparation_weights(ProjectiveState.coherent_x(N), weights_bath(beta, C), omega0)
    assert w.twice_l[np.argmax(w.p)] == -N


def test_large_N_beta_omega0_alone_does_not_fix_the_peak():
    # beta omega0 N = 63 but the binomial factor 21 outweighs exp(-3)
    w = preparation_weights(ProjectiveState.coherent_x(21), weights_bath(3.0, 0.0), 1.0)
    assert w.twice_l[np.argmax(w.p)] == -19


def test_zero_temperature_weights():
    w = preparation_weights(ProjectiveState.coherent_x(4), weights_bath(math.inf, 0.01), 0.2)
    np.testing.assert_array_equal(w.p, [1, 0, 0, 0, 0])
    w = boltzmann_block_weights(3, weights_bath(2.0, 0.0), 0.0)
    np.testing.assert_allclose(w.p, 0.25)


def test_amplitude_file_round_trip(tmp_path):
    path = tmp_path / "amps.txt"
    path.write_text("# twice_l re im\n-2 1 0\n2 0 1\n")
    state = ProjectiveState.from_file(path, 2)
    assert state.amplitude(-2) == pytest.approx(1 / math.sqrt(2))
    assert state.amplitude(0) == 0
    assert state.amplitude(2) == pytest.approx(1j / math.sqrt(2))
    assert state.rho0_element(-2, 2) == pytest.approx(-0.5j)


def test_state_errors():
    with pytest.raises(DegenerateStateError):
        ProjectiveState.from_amplitudes(2, [0, 0, 0])
    with pytest.raises(DomainError):
        ProjectiveState.from_amplitudes(2, [1, 0])
    with pytest.raises(DomainError):
        ProjectiveState(1, np.array([0.0, 0.0]), np.zeros(2))
    with pytest.raises(DomainError):
        check_index(3, 2)
    with pytest.raises(DomainError):
        check_index(3, 5)
    with pytest.raises(DomainError):
        ProjectiveState.coherent_x(0)


@pytest.mark.parametrize("N", [1, 2, 3, 6, 7, 30])
def test_rotation_columns_match_matrix_exponential(N):
    dense = expm(1j * (math.pi / 2) * spin_operators(N)["y"])
    prep = UnitaryPreparation.rotation_y_half_pi(N)
    np.testing.assert_allclose(prep.dense(), dense, atol=1e-10)
    assert prep.element(basis_twice_m(N)[0], N) == pytest.approx(dense[0, -1], abs=1e-12)


def test_rotation_edge_columns_at_large_N():
    N = 20000
    prep = UnitaryPreparation.rotation_y_half_pi(N)
    for tl in (-N, -N + 2, N - 2, N):
        col = prep.column(tl)
        assert np.sum(np.abs(col) ** 2) == pytest.approx(1.0, abs=1e-9)
    # exp(i pi/2 J_y) carries |-N/2> to the +x coherent state
    coherent = ProjectiveState.coherent_x(N).amplitudes()
    assert abs(np.vdot(prep.column(-N), coherent)) == pytest.approx(1.0, abs=1e-9)


def test_from_matrix():
    theta = 0.3
    mat = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    prep = UnitaryPreparation.from_matrix(mat)
    assert prep.N == 1
    assert prep.element(1, -1) == pytest.approx(math.sin(theta))
    with pytest.raises(DomainError):
        UnitaryPreparation.from_matrix([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DomainError):
        preparation_weights(prep, weights_bath(1.0, 0.0), 0.1)
