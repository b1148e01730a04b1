"""Design and analysis of strongly modulating pulses for NMR quantum gates."""

__version__ = "0.1.0"

from .dynamics import PulsePeriod, PulseSequence, net_propagator
from .fidelity import FidelityReport, gate_fidelity_unitary
from .optimizer import GateSpec, PenaltyConfig, SearchConfig, design_pulse, standard_gate
from .spin_model import ConfigError, SpinSystem, load_system

__all__ = [
    "ConfigError", "FidelityReport", "GateSpec", "PenaltyConfig", "PulsePeriod", "PulseSequence",
    "SearchConfig", "SpinSystem", "design_pulse", "gate_fidelity_unitary", "load_system",
    "net_propagator", "standard_gate",
]
