"""
Exact propagation of piecewise-constant RF control.

Each period has constant power, transmitter offset, initial phase and
duration. In the frame rotating with the transmitter the Hamiltonian is
time independent::

    H_eff = sum_k (w_k - w_rf) Iz_k + H_J - w (cos(phi) Ix + sin(phi) Iy)

and the propagator back in the base rotating frame is

    U_period = exp(-i w_rf Iz tau) exp(-i H_eff tau).

Periods compose with period 1 applied first, i.e. as the rightmost factor:
``U_net = U_N ... U_2 U_1``.

Rotation sense: a period with phase 0 drives ``-w Ix``, so on resonance
its propagator is exp(+i w tau Ix) and a pulse with w*tau = pi/2 takes I_z
to +I_y. The ideal gate rot(k, x, 90) = exp(-i (pi/2) Ix) takes I_z to -I_y;
a phase-0 pulse therefore needs phase pi (or negative power) to realize it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spin_model import ConfigError, SpinSystem, internal_hamiltonian, total_spin, z_projections


class NumericalError(RuntimeError):
    """Raised when an eigensolver or propagation step fails."""


@dataclass(frozen=True)
class PulsePeriod:
    """
    One square RF period.

    Attributes
    ----------
    power : float
        Nutation amplitude w in rad/s (files carry w / 2pi in kHz).
    offset : float
        Transmitter offset w_rf from the base rotating frame, rad/s.
    phase : float
        Initial RF phase, radians.
    duration : float
        Seconds, non-negative.
    """

    power: float
    offset: float
    phase: float
    duration: float

    def __post_init__(self):
        vals = (self.power, self.offset, self.phase, self.duration)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pulse period field in {vals}")
        if self.duration < 0:
            raise ValueError(f"negative period duration {self.duration}")

    def as_array(self) -> np.ndarray:
        return np.array([self.power, self.offset, self.phase, self.duration], dtype=float)

    def to_dict(self) -> dict:
        return {
            "power_khz": self.power / (2e3 * np.pi),
            "offset_hz": self.offset / (2 * np.pi),
            "phase_deg": float(np.degrees(self.phase)),
            "duration_us": self.duration * 1e6,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulsePeriod":
        return cls(
            power=2e3 * np.pi * float(d["power_khz"]),
            offset=2 * np.pi * float(d.get("offset_hz", 0.0)),
            phase=float(np.radians(float(d.get("phase_deg", 0.0)))),
            duration=float(d["duration_us"]) * 1e-6,
        )


@dataclass(frozen=True)
class PulseSequence:
    periods: tuple[PulsePeriod, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        periods = tuple(self.periods)
        if not periods:
            raise ValueError("a pulse sequence needs at least one period")
        object.__setattr__(self, "periods", periods)

    def __len__(self):
        return len(self.periods)

    def __iter__(self):
        return iter(self.periods)

    @property
    def total_duration(self) -> float:
        return float(sum(p.duration for p in self.periods))

    @property
    def max_power(self) -> float:
        return float(max(abs(p.power) for p in self.periods))

    def as_array(self) -> np.ndarray:
        """(N, 4) array of (power, offset, phase, duration) in SI units."""
        return np.array([p.as_array() for p in self.periods])

    @classmethod
    def from_array(cls, params, metadata=None) -> "PulseSequence":
        params = np.asarray(params, dtype=float).reshape(-1, 4)
        return cls(tuple(PulsePeriod(*row) for row in params), dict(metadata or {}))

    def then(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.periods + other.periods, dict(self.metadata))

    def with_metadata(self, **kw) -> "PulseSequence":
        return replace(self, metadata={**self.metadata, **kw})

    def to_dict(self) -> dict:
        return {"metadata": dict(self.metadata), "periods": [p.to_dict() for p in self.periods]}

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSequence":
        try:
            periods = tuple(PulsePeriod.from_dict(p) for p in d["periods"])
        except KeyError as exc:
            raise ConfigError(f"pulse period is missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad pulse period: {exc}") from None
        try:
            return cls(periods, dict(d.get("metadata", {})))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def identity_sequence() -> PulseSequence:
    """A single zero-power, zero-length period (the trivial pulse)."""
    return PulseSequence((PulsePeriod(0.0, 0.0, 0.0, 0.0),), {"gate": "identity"})


def save_sequence(seq: PulseSequence, path):
    Path(path).write_text(json.dumps(seq.to_dict(), indent=2, sort_keys=True) + "\n")


def load_sequence(path) -> PulseSequence:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "periods" not in data:
        raise ConfigError(f"{path}: expected an object with a 'periods' list")
    return PulseSequence.from_dict(data)


class SystemOperators:
    """
    Cached operators for one spin system.

    The optimizer evaluates thousands of sequences on the same system, so the
    drive operators and internal Hamiltonian are built once here and the
    per-period eigendecompositions are batched.
    """

    def __init__(self, sys: SpinSystem):
        self.sys = sys
        n = sys.n
        self.dim = sys.dim
        self.H_int = internal_hamiltonian(sys)
        self.Ix = total_spin(n, "x")
        self.Iy = total_spin(n, "y")
        self.Iz = total_spin(n, "z")
        self.mz = z_projections(n)

    def effective_hamiltonians(self, params: np.ndarray) -> np.ndarray:
        p = np.asarray(params, dtype=float).reshape(-1, 4)
        w = p[:, 0, None, None]
        wrf = p[:, 1, None, None]
        phi = p[:, 2, None, None]
        return (
            self.H_int[None]
            - wrf * self.Iz[None]
            - w * (np.cos(phi) * self.Ix[None] + np.sin(phi) * self.Iy[None])
        )

    def period_propagators(self, params: np.ndarray) -> np.ndarray:
        """Stack of U_period for each row of ``params`` (shape (N, dim, dim))."""
        p = np.asarray(params, dtype=float).reshape(-1, 4)
        H = self.effective_hamiltonians(p)
        try:
            evals, V = np.linalg.eigh(H)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed for period parameters {p.tolist()}: {exc}") from exc
        tau = p[:, 3]
        inner = (V * np.exp(-1j * evals * tau[:, None])[:, None, :]) @ V.conj().swapaxes(-1, -2)
        # U_z^{-1} is diagonal: exp(-i w_rf tau m_z) row scaling
        frame = np.exp(-1j * np.outer(p[:, 1] * tau, self.mz))
        return frame[:, :, None] * inner

    def net(self, params: np.ndarray) -> np.ndarray:
        Us = self.period_propagators(params)
        out = Us[0]
        for U in Us[1:]:
            out = U @ out
        return out


def external_hamiltonian_lab(sys: SpinSystem, p: PulsePeriod, t: float) -> np.ndarray:
    """RF Hamiltonian at time ``t`` (from period start) in the base rotating frame."""
    n = sys.n
    theta = p.offset * t + p.phase
    # e^{-i theta Iz} Ix e^{+i theta Iz} = cos(theta) Ix + sin(theta) Iy, spinwise
    Rz = np.diag(np.exp(-1j * theta * z_projections(n)))
    return Rz @ (-p.power * total_spin(n, "x")) @ Rz.conj().T


def effective_hamiltonian(sys: SpinSystem, p: PulsePeriod) -> np.ndarray:
    return SystemOperators(sys).effective_hamiltonians(p.as_array())[0]


def expm_hermitian(H, tau: float) -> np.ndarray:
    """exp(-i H tau) for Hermitian ``H`` via a single eigendecomposition."""
    H = np.asarray(H)
    try:
        evals, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigh failed: shape={H.shape}, max|H|={np.max(np.abs(H)):.3e}, "
            f"hermiticity defect={np.max(np.abs(H - H.conj().T)):.3e}"
        ) from exc
    return (V * np.exp(-1j * evals * tau)) @ V.conj().T


def frame_correction(sys: SpinSystem, p: PulsePeriod) -> np.ndarray:
    """U_z(tau) = exp(+i w_rf sum_k Iz_k tau), diagonal."""
    return np.diag(np.exp(1j * p.offset * p.duration * z_projections(sys.n)))


def period_propagator(sys: SpinSystem, p: PulsePeriod) -> np.ndarray:
    U = expm_hermitian(effective_hamiltonian(sys, p), p.duration)
    return frame_correction(sys, p).conj().T @ U


def net_propagator(sys: SpinSystem, seq: PulseSequence | Iterable[PulsePeriod], ops: SystemOperators | None = None) -> np.ndarray:
    """Ordered product of period propagators, first period rightmost."""
    periods = seq.periods if isinstance(seq, PulseSequence) else tuple(seq)
    if not periods:
        raise ValueError("empty pulse sequence")
    ops = ops or SystemOperators(sys)
    return ops.net(np.array([p.as_array() for p in periods]))


def evolve_state(rho, U) -> np.ndarray:
    rho = np.asarray(rho)
    U = np.asarray(U)
    if rho.shape != U.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs U {U.shape}")
    return U @ rho @ U.conj().T


def free_evolution(sys: SpinSystem, duration: float) -> np.ndarray:
    return expm_hermitian(internal_hamiltonian(sys), duration)


def pad_sequence(seq: PulseSequence, pad: float) -> PulseSequence:
    """Wrap ``seq`` with zero-power periods of length ``pad`` seconds on both sides."""
    if pad <= 0:
        return seq
    z = PulsePeriod(0.0, 0.0, 0.0, pad)
    return PulseSequence((z,) + seq.periods + (z,), dict(seq.metadata))


def sequence_from_periods(periods: Sequence[PulsePeriod], **metadata) -> PulseSequence:
    return PulseSequence(tuple(periods), metadata)
