"""
Spin-1/2 operators, internal Hamiltonians and operator bases.

Conventions
-----------
- Spin operators are I_a = sigma_a / 2 (hbar = 1).
- Spin indices are 1-based in the public API, matching NMR usage
  ("spin 1" is the first nucleus, the leftmost tensor factor).
- Chemical shifts are held in rad/s; scalar couplings stay in Hz and pick
  up their 2*pi inside :func:`internal_hamiltonian`.
- Operators are dense complex ``numpy`` arrays of shape (2**n, 2**n).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_SPINS = 8

_PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class ConfigError(ValueError):
    """Raised when a system or pulse file cannot be parsed."""


@dataclass(frozen=True)
class SpinSystem:
    """
    Homonuclear system of ``n`` spin-1/2 nuclei.

    Parameters
    ----------
    shifts : array_like
        Chemical shift offsets in rad/s, one per spin.
    couplings : array_like
        Symmetric (n, n) scalar-coupling matrix in Hz, zero diagonal.
    labels : sequence of str, optional
        Display names. Defaults to ``S1 ... Sn``.
    """

    shifts: np.ndarray
    couplings: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float).reshape(-1)
        n = shifts.size
        if not 1 <= n <= MAX_SPINS:
            raise ValueError(f"number of spins must be in [1, {MAX_SPINS}], got {n}")
        if not np.all(np.isfinite(shifts)):
            raise ValueError("chemical shifts must be finite")
        couplings = np.asarray(self.couplings, dtype=float)
        if couplings.shape != (n, n):
            raise ValueError(f"couplings must have shape ({n}, {n}), got {couplings.shape}")
        if not np.all(np.isfinite(couplings)):
            raise ValueError("couplings must be finite")
        if not np.array_equal(couplings, couplings.T):
            raise ValueError("coupling matrix is not symmetric")
        if np.any(np.diag(couplings) != 0):
            raise ValueError("coupling matrix must have a zero diagonal")
        labels = tuple(self.labels) or tuple(f"S{k + 1}" for k in range(n))
        if len(labels) != n:
            raise ValueError(f"expected {n} labels, got {len(labels)}")
        shifts.setflags(write=False)
        couplings = couplings.copy()
        couplings.setflags(write=False)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.shifts.size

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def shifts_hz(self) -> np.ndarray:
        return self.shifts / (2 * np.pi)

    @classmethod
    def from_hz(cls, shifts_hz, couplings_hz, labels=()) -> "SpinSystem":
        return cls(2 * np.pi * np.asarray(shifts_hz, dtype=float), couplings_hz, tuple(labels))

    def with_shifts(self, shifts) -> "SpinSystem":
        return SpinSystem(shifts, self.couplings, self.labels)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "shifts_hz": self.shifts_hz.tolist(),
            "couplings_hz": self.couplings.tolist(),
        }


def _coupling_matrix(raw, n: int) -> np.ndarray:
    arr = np.asarray(raw, dtype=float) if len(raw) else np.zeros((0,))
    if arr.ndim == 2:
        if arr.shape != (n, n):
            raise ConfigError(f"couplings_hz must be {n}x{n}, got {arr.shape[0]}x{arr.shape[1]}")
        if not np.array_equal(arr, arr.T):
            bad = np.argwhere(arr != arr.T)[0]
            raise ConfigError(
                "couplings_hz is asymmetric: "
                f"J[{bad[0] + 1}][{bad[1] + 1}]={arr[bad[0], bad[1]]} "
                f"but J[{bad[1] + 1}][{bad[0] + 1}]={arr[bad[1], bad[0]]}"
            )
        return arr
    # upper-triangle list: J12, J13, ..., J1n, J23, ...
    flat = arr.reshape(-1)
    expected = n * (n - 1) // 2
    if flat.size != expected:
        raise ConfigError(f"upper-triangle couplings_hz needs {expected} values, got {flat.size}")
    out = np.zeros((n, n))
    out[np.triu_indices(n, 1)] = flat
    return out + out.T


def system_from_dict(data: dict) -> SpinSystem:
    """Build a :class:`SpinSystem` from a parsed config mapping (Hz units)."""
    try:
        shifts = [float(v) for v in data["shifts_hz"]]
    except KeyError:
        raise ConfigError("system config is missing 'shifts_hz'") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad shifts_hz: {exc}") from None
    n = len(shifts)
    raw = data.get("couplings_hz", np.zeros((n, n)).tolist())
    try:
        couplings = _coupling_matrix(raw, n)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad couplings_hz: {exc}") from None
    labels = data.get("labels", ())
    try:
        return SpinSystem.from_hz(shifts, couplings, labels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_system(path) -> SpinSystem:
    """Read a JSON spin-system config file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return system_from_dict(data)


def _check_index(n: int, k: int):
    if not 1 <= k <= n:
        raise IndexError(f"spin index {k} out of range for {n} spins")


def spin_operator(n: int, k: int, axis: str) -> np.ndarray:
    """Return I_axis acting on spin ``k`` (1-based) of an ``n``-spin system."""
    _check_index(n, k)
    factors = [_PAULI["i"]] * n
    factors[k - 1] = _PAULI[axis] / 2
    return reduce(np.kron, factors)


def total_spin(n: int, axis: str, spins: Sequence[int] | None = None) -> np.ndarray:
    """Sum of I_axis over ``spins`` (1-based; all spins by default)."""
    spins = range(1, n + 1) if spins is None else spins
    out = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for k in spins:
        out += spin_operator(n, k, axis)
    return out


def z_projections(n: int) -> np.ndarray:
    """Total m_z of each computational basis state (diagonal of sum I_z)."""
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return np.sum(0.5 - bits, axis=1)


def internal_hamiltonian(sys: SpinSystem) -> np.ndarray:
    """Zeeman (chemical shift) plus isotropic scalar-coupling Hamiltonian, rad/s."""
    n = sys.n
    ops = {(k, a): spin_operator(n, k, a) for k in range(1, n + 1) for a in "xyz"}
    H = np.zeros((sys.dim, sys.dim), dtype=complex)
    for k in range(1, n + 1):
        H += sys.shifts[k - 1] * ops[k, "z"]
    for k, j in itertools.combinations(range(1, n + 1), 2):
        J = sys.couplings[k - 1, j - 1]
        if J:
            H += 2 * np.pi * J * sum(ops[k, a] @ ops[j, a] for a in "xyz")
    return H


def pauli_basis(n: int) -> np.ndarray:
    """
    Trace-orthonormal Pauli basis of the n-spin operator space.

    Returns an array of shape (4**n, 2**n, 2**n). Element 0 is the identity
    scaled by 2**(-n/2); the rest are tensor products of {1, X, Y, Z} with
    the same normalization, in lexicographic order over "ixyz".
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > MAX_SPINS:
        raise MemoryError(f"Pauli basis for {n} spins exceeds the supported size")
    scale = 2.0 ** (-n / 2)
    out = np.empty((4 ** n, 2 ** n, 2 ** n), dtype=complex)
    for idx, word in enumerate(itertools.product("ixyz", repeat=n)):
        out[idx] = scale * reduce(np.kron, [_PAULI[c] for c in word])
    return out


def is_hermitian(A, atol: float = 1e-12) -> bool:
    A = np.asarray(A)
    return bool(np.max(np.abs(A - A.conj().T), initial=0.0) < atol)


def is_unitary(U, atol: float = 1e-10) -> bool:
    U = np.asarray(U)
    return bool(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) < atol)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (A + A.conj().T) / 2


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase fix."""
    Z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))
