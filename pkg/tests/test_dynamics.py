import numpy as np
import pytest
from scipy.linalg import expm

from oracles import oracle_hint, random_sequence, total, trotter_period, SX, SY, SZ
from pulseforge.dynamics import (
    PulsePeriod,
    PulseSequence,
    SystemOperators,
    effective_hamiltonian,
    evolve_state,
    expm_hermitian,
    external_hamiltonian_lab,
    free_evolution,
    identity_sequence,
    load_sequence,
    net_propagator,
    pad_sequence,
    period_propagator,
    save_sequence,
)
from pulseforge.spin_model import ConfigError, SpinSystem, internal_hamiltonian, is_unitary, random_hermitian, spin_operator


def test_expm_hermitian_matches_pade(rng):
    for dim in (2, 4, 8):
        H = random_hermitian(dim, rng) * 1e4
        for tau in (0.0, 1e-6, 3.7e-5):
            assert np.allclose(expm_hermitian(H, tau), expm(-1j * H * tau), atol=1e-11)


def test_period_propagator_unitary(fixture3, rng):
    for p in random_sequence(rng, 20):
        assert is_unitary(period_propagator(fixture3, p))


def test_zero_power_period_is_free_evolution(fixture3):
    p = PulsePeriod(0.0, 0.0, 0.3, 17e-6)
    assert np.allclose(period_propagator(fixture3, p), free_evolution(fixture3, 17e-6))


def test_nonzero_offset_zero_power_is_still_free_evolution(fixture3):
    # the transmitter frame correction undoes the frame rotation exactly
    p = PulsePeriod(0.0, 2 * np.pi * 3333.0, 0.0, 21e-6)
    assert np.allclose(period_propagator(fixture3, p), free_evolution(fixture3, 21e-6), atol=1e-12)


def test_rotation_sense_on_resonance():
    s = SpinSystem.from_hz([0.0], [[0.0]])
    w = 2 * np.pi * 10e3
    U = period_propagator(s, PulsePeriod(w, 0.0, 0.0, (np.pi / 2) / w))
    Iz, Iy = spin_operator(1, 1, "z"), spin_operator(1, 1, "y")
    assert np.allclose(evolve_state(Iz, U), Iy, atol=1e-12)


def test_phase_pi_pulse_realizes_rot_x():
    s = SpinSystem.from_hz([0.0], [[0.0]])
    w = 2 * np.pi * 10e3
    U = period_propagator(s, PulsePeriod(w, 0.0, np.pi, (np.pi / 2) / w))
    assert np.allclose(U, expm(-1j * (np.pi / 2) * SX), atol=1e-12)


def test_lab_frame_hamiltonian_rotates():
    s = SpinSystem.from_hz([0.0], [[0.0]])
    p = PulsePeriod(1.0, 2 * np.pi * 1000.0, 0.0, 1e-3)
    H = external_hamiltonian_lab(s, p, 0.25e-3)  # theta = pi/2
    assert np.allclose(H, -SY, atol=1e-12)


def test_matches_time_sliced_integration(rng):
    sh, J = [-1200.0, 2100.0], [[0, 45.0], [45.0, 0]]
    s = SpinSystem.from_hz(sh, J)
    H0 = oracle_hint(sh, J)
    for p in random_sequence(rng, 3):
        ref = trotter_period(H0, 2, p.power, p.offset, p.phase, p.duration, slices=4000)
        assert np.abs(period_propagator(s, p) - ref).max() < 1e-6


def test_effective_hamiltonian_formula(fixture3):
    p = PulsePeriod(2 * np.pi * 5e3, 2 * np.pi * 1e3, 0.4, 30e-6)
    H = effective_hamiltonian(fixture3, p)
    Iz = total(SZ, 3)
    expected = internal_hamiltonian(fixture3) - p.offset * Iz - p.power * (np.cos(0.4) * total(SX, 3) + np.sin(0.4) * total(SY, 3))
    assert np.allclose(H, expected)


def test_sequence_order_first_period_rightmost(fixture3, rng):
    seq = random_sequence(rng, 3)
    U1, U2, U3 = (period_propagator(fixture3, p) for p in seq)
    assert np.allclose(net_propagator(fixture3, seq), U3 @ U2 @ U1)


def test_batched_operators_match_single(fixture3, rng):
    seq = random_sequence(rng, 5)
    ops = SystemOperators(fixture3)
    Us = ops.period_propagators(seq.as_array())
    for U, p in zip(Us, seq):
        assert np.allclose(U, period_propagator(fixture3, p), atol=1e-12)


def test_pad_sequence(fixture3, rng):
    seq = random_sequence(rng, 2)
    P = free_evolution(fixture3, 6e-6)
    assert np.allclose(net_propagator(fixture3, pad_sequence(seq, 6e-6)), P @ net_propagator(fixture3, seq) @ P)
    assert pad_sequence(seq, 0) is seq


def test_invalid_periods():
    with pytest.raises(ValueError):
        PulsePeriod(1.0, 0.0, 0.0, -1e-6)
    with pytest.raises(ValueError):
        PulsePeriod(np.inf, 0.0, 0.0, 1e-6)
    with pytest.raises(ValueError):
        PulseSequence(())


def test_evolve_state_dimension_check():
    with pytest.raises(ValueError):
        evolve_state(np.eye(2), np.eye(4))


def test_sequence_file_roundtrip(tmp_path, rng):
    seq = random_sequence(rng, 4).with_metadata(gate="rot(1,x,90)")
    path = tmp_path / "p.json"
    save_sequence(seq, path)
    back = load_sequence(path)
    assert np.allclose(back.as_array(), seq.as_array(), rtol=1e-14, atol=0)
    assert back.metadata["gate"] == "rot(1,x,90)"


def test_sequence_file_errors(tmp_path):
    p = tmp_path / "p.json"
    p.write_text('{"periods": [{"power_khz": 1}]}')
    with pytest.raises(ConfigError, match="duration_us"):
        load_sequence(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_sequence(p)


def test_identity_sequence_is_identity(fixture3):
    assert np.allclose(net_propagator(fixture3, identity_sequence()), np.eye(8))


def test_summary_properties(rng):
    seq = random_sequence(rng, 3)
    arr = seq.as_array()
    assert seq.total_duration == pytest.approx(arr[:, 3].sum())
    assert seq.max_power == pytest.approx(np.abs(arr[:, 0]).max())
