"""
State- and propagator-level figures of merit.

The gate fidelity is defined operationally as the mean attenuated
correlation over a trace-orthonormal set of input operators. For unitary
(or Kraus) implementations it collapses to ``|Tr(U_th^dag U)/N|^2``; both
routes are provided so one can be checked against the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import PulseSequence, SystemOperators, evolve_state
from .spin_model import SpinSystem, pauli_basis, total_spin


class UndefinedMetricError(ValueError):
    """Raised when a metric is requested for a zero-norm operator."""


def _purity(rho) -> float:
    return float(np.real(np.trace(rho @ rho)))


def _overlap(a, b) -> float:
    return float(np.real(np.trace(a @ b)))


def projection(rho_th, rho_out) -> float:
    """Normalized trace overlap of two Hermitian operators, in [-1, 1]."""
    rho_th, rho_out = np.asarray(rho_th), np.asarray(rho_out)
    if rho_th.shape != rho_out.shape:
        raise ValueError(f"dimension mismatch: {rho_th.shape} vs {rho_out.shape}")
    norm = _purity(rho_th) * _purity(rho_out)
    if norm <= 0:
        raise UndefinedMetricError("projection is undefined for a zero operator")
    return _overlap(rho_th, rho_out) / np.sqrt(norm)


def attenuated_correlation(rho_th, rho_out, rho_in) -> float:
    """Projection scaled by sqrt(Tr rho_out^2 / Tr rho_in^2)."""
    rho_th, rho_out, rho_in = map(np.asarray, (rho_th, rho_out, rho_in))
    norm = _purity(rho_th) * _purity(rho_in)
    if norm <= 0:
        raise UndefinedMetricError("attenuated correlation is undefined for a zero operator")
    return _overlap(rho_th, rho_out) / np.sqrt(norm)


def gate_fidelity_states(
    U_th,
    apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    basis: np.ndarray | None = None,
) -> float:
    """
    Mean attenuated correlation over an orthonormal operator basis.

    ``apply`` maps an input operator to the implemented output; it need not
    be a unitary conjugation. ``basis`` defaults to the normalized Pauli
    basis and may be any Hermitian trace-orthonormal set spanning the
    operator space.
    """
    U_th = np.asarray(U_th)
    basis = pauli_basis(n) if basis is None else basis
    Udag = U_th.conj().T
    total = 0.0
    for rho_in in basis:
        total += attenuated_correlation(U_th @ rho_in @ Udag, apply(rho_in), rho_in)
    return total / len(basis)


def gate_fidelity_unitary(U_th, U_sim) -> float:
    """|Tr(U_th^dag U_sim) / N|^2, insensitive to global phase."""
    U_th, U_sim = np.asarray(U_th), np.asarray(U_sim)
    if U_th.shape != U_sim.shape:
        raise ValueError(f"dimension mismatch: {U_th.shape} vs {U_sim.shape}")
    N = U_th.shape[0]
    return float(np.abs(np.vdot(U_th, U_sim) / N) ** 2)


def quality_factor(F: float) -> float:
    if F < -1e-12 or F > 1 + 1e-12:
        raise ValueError(f"fidelity {F} outside [0, 1]")
    return 1.0 - np.sqrt(min(max(F, 0.0), 1.0))


def collective_inputs(n: int) -> dict[str, np.ndarray]:
    """The deviation states sum_k I_j^k for j in x, y, z."""
    return {a: total_spin(n, a) for a in "xyz"}


@dataclass
class FidelityReport:
    """Metrics for one pulse/gate pair; ``states`` holds per-input rows."""

    projection: float
    correlation: float
    fidelity: float
    quality: float
    states: list = field(default_factory=list)
    name: str = ""

    @property
    def attenuation(self) -> float:
        return self.correlation / self.projection if self.projection else float("nan")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "projection": self.projection,
            "correlation": self.correlation,
            "attenuation": self.attenuation,
            "fidelity": self.fidelity,
            "quality": self.quality,
            "states": self.states,
        }


def fidelity_report(U_th, U_sim, n: int, name: str = "") -> FidelityReport:
    """Propagator fidelity plus P/C averaged over the collective x, y, z inputs."""
    F = gate_fidelity_unitary(U_th, U_sim)
    rows = []
    for label, rho_in in collective_inputs(n).items():
        rho_th = evolve_state(rho_in, U_th)
        rho_out = evolve_state(rho_in, U_sim)
        rows.append({
            "input": f"I{label}",
            "projection": projection(rho_th, rho_out),
            "correlation": attenuated_correlation(rho_th, rho_out, rho_in),
        })
    P = float(np.mean([r["projection"] for r in rows]))
    C = float(np.mean([r["correlation"] for r in rows]))
    return FidelityReport(P, C, F, quality_factor(F), rows, name)


def simulate_experiment_table(
    sys: SpinSystem,
    pulses: Sequence[PulseSequence],
    targets: Sequence[np.ndarray],
    names: Sequence[str] | None = None,
) -> list[FidelityReport]:
    """One report per pulse, with P and C averaged over the three collective inputs."""
    if len(pulses) != len(targets):
        raise ValueError("need one target per pulse")
    ops = SystemOperators(sys)
    names = names or [p.metadata.get("gate", f"pulse{i + 1}") for i, p in enumerate(pulses)]
    return [
        fidelity_report(U_th, ops.net(seq.as_array()), sys.n, name)
        for seq, U_th, name in zip(pulses, targets, names)
    ]


def format_table(reports: Sequence[FidelityReport]) -> str:
    """Tab-delimited rows: projection, correlation, attenuation, one column per pulse."""
    head = "metric\t" + "\t".join(r.name or f"pulse{i + 1}" for i, r in enumerate(reports))
    lines = [head]
    for key in ("projection", "correlation", "attenuation", "fidelity"):
        vals = "\t".join(f"{getattr(r, key):.6f}" for r in reports)
        lines.append(f"{key}\t{vals}")
    return "\n".join(lines) + "\n"
