import json

import numpy as np
import pytest

from oracles import SX, SY, SZ, embed, oracle_hint
from pulseforge.spin_model import (
    ConfigError,
    SpinSystem,
    internal_hamiltonian,
    is_hermitian,
    is_unitary,
    load_system,
    pauli_basis,
    random_unitary,
    spin_operator,
    system_from_dict,
    total_spin,
    z_projections,
)


def test_shift_units_convert_to_rad_s():
    s = SpinSystem.from_hz([100.0, -250.0], [[0, 7], [7, 0]])
    assert np.allclose(s.shifts, 2 * np.pi * np.array([100.0, -250.0]))
    assert np.allclose(s.shifts_hz, [100.0, -250.0])
    # couplings stay in Hz
    assert s.couplings[0, 1] == 7


def test_invalid_systems_rejected():
    with pytest.raises(ValueError):
        SpinSystem.from_hz([0, 1], [[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        SpinSystem.from_hz([0, 1], [[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        SpinSystem.from_hz([np.nan], [[0]])


def test_asymmetric_config_names_entries():
    with pytest.raises(ConfigError, match=r"J\[1\]\[2\]"):
        system_from_dict({"shifts_hz": [0, 1], "couplings_hz": [[0, 5], [6, 0]]})


def test_upper_triangle_couplings():
    s = system_from_dict({"shifts_hz": [0, 1, 2], "couplings_hz": [54, 1.3, 35]})
    assert s.couplings[0, 1] == 54 and s.couplings[0, 2] == 1.3 and s.couplings[2, 1] == 35


def test_missing_shifts_is_config_error():
    with pytest.raises(ConfigError, match="shifts_hz"):
        system_from_dict({"couplings_hz": []})


def test_json_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "shifts_hz": [1, 2,\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_system(p)


def test_load_roundtrip(tmp_path, fixture3):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(fixture3.to_dict()))
    assert np.allclose(load_system(p).shifts, fixture3.shifts)


def test_spin_operator_matches_kron_oracle():
    for n in (1, 2, 3):
        for k in range(1, n + 1):
            for axis, S in zip("xyz", (SX, SY, SZ)):
                assert np.allclose(spin_operator(n, k, axis), embed(S, k, n))


def test_spin_index_out_of_range():
    with pytest.raises(IndexError):
        spin_operator(2, 3, "x")
    with pytest.raises(IndexError):
        spin_operator(2, 0, "x")


def test_commutation_relations():
    n = 2
    X, Y, Z = (spin_operator(n, 1, a) for a in "xyz")
    assert np.allclose(X @ Y - Y @ X, 1j * Z)
    # different spins commute
    assert np.allclose(X @ spin_operator(n, 2, "y"), spin_operator(n, 2, "y") @ X)


def test_z_projections_is_diagonal_of_total_iz():
    for n in (1, 2, 3):
        assert np.allclose(np.diag(total_spin(n, "z")).real, z_projections(n))


def test_internal_hamiltonian_matches_oracle(fixture3):
    H = internal_hamiltonian(fixture3)
    assert is_hermitian(H)
    assert np.allclose(H, oracle_hint(fixture3.shifts_hz, fixture3.couplings))


def test_hamiltonian_commutes_with_total_iz(fixture3):
    H = internal_hamiltonian(fixture3)
    Z = total_spin(3, "z")
    assert np.allclose(H @ Z, Z @ H)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pauli_basis_orthonormal_and_complete(n):
    B = pauli_basis(n)
    N = 2 ** n
    assert B.shape == (N * N, N, N)
    gram = np.einsum("aij,bij->ab", B.conj(), B)
    assert np.allclose(gram, np.eye(N * N), atol=1e-12)
    # completeness: sum_a B_a X B_a^dag = Tr(X) 1 for any X
    X = np.random.default_rng(n).standard_normal((N, N))
    recon = sum(np.vdot(b, X) * b for b in B)
    assert np.allclose(recon, X)
    assert np.allclose(B[0], np.eye(N) / np.sqrt(N))
    assert all(is_hermitian(b) for b in B)


def test_random_unitary(rng):
    for dim in (2, 4, 8):
        assert is_unitary(random_unitary(dim, rng))
