"""
Sampling of pulse sequences into hardware amplitude/phase lists.

Within a period the transmitter offset is realized as a linear phase ramp
at a fixed carrier: a sample whose midpoint sits at time ``t`` into period
``m`` gets amplitude ``w_m`` and phase ``phi_m + w_rf_m * t``. A sample that
straddles a period boundary gets the time average of the complex RF field
over its interval, which keeps the first-order (average Hamiltonian) error
of the boundary sample at zero. Zero-power pads are added on both sides;
the last sample may run past the end of the pulse, and the trailing pad is
shortened by that overrun so the total duration is exact.

Waveforms are stored in file units (us, kHz, degrees) so a JSON round trip
is exact; SI views are available as properties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import PulseSequence, SystemOperators, expm_hermitian
from .spin_model import ConfigError, SpinSystem

DEFAULT_PAD_US = 6.0


@dataclass(frozen=True)
class SampledWaveform:
    sample_period_us: float
    amp_khz: np.ndarray
    phase_deg: np.ndarray
    pad_us: float = DEFAULT_PAD_US
    trail_pad_us: float | None = None

    def __post_init__(self):
        if self.trail_pad_us is None:
            object.__setattr__(self, "trail_pad_us", self.pad_us)
        amp = np.asarray(self.amp_khz, dtype=float).reshape(-1)
        phase = np.asarray(self.phase_deg, dtype=float).reshape(-1)
        if amp.shape != phase.shape:
            raise ValueError("amplitude and phase lists differ in length")
        if self.sample_period_us <= 0 or self.pad_us < 0 or self.trail_pad_us < 0:
            raise ValueError("sample period must be positive and pads non-negative")
        if np.any(amp < 0):
            raise ValueError("sample amplitudes must be non-negative")
        if np.any((phase < 0) | (phase >= 360)):
            raise ValueError("sample phases must lie in [0, 360) degrees")
        amp.setflags(write=False)
        phase.setflags(write=False)
        object.__setattr__(self, "amp_khz", amp)
        object.__setattr__(self, "phase_deg", phase)

    def __len__(self):
        return self.amp_khz.size

    def __eq__(self, other):
        if not isinstance(other, SampledWaveform):
            return NotImplemented
        return (self.sample_period_us == other.sample_period_us and self.pad_us == other.pad_us
                and self.trail_pad_us == other.trail_pad_us
                and np.array_equal(self.amp_khz, other.amp_khz)
                and np.array_equal(self.phase_deg, other.phase_deg))

    @property
    def sample_period(self) -> float:
        return self.sample_period_us * 1e-6

    @property
    def pad(self) -> float:
        return self.pad_us * 1e-6

    @property
    def trail_pad(self) -> float:
        return self.trail_pad_us * 1e-6

    @property
    def amplitudes(self) -> np.ndarray:
        """rad/s"""
        return self.amp_khz * 2e3 * np.pi

    @property
    def phases(self) -> np.ndarray:
        """radians in [0, 2pi)"""
        return np.radians(self.phase_deg)

    @property
    def total_duration(self) -> float:
        return len(self) * self.sample_period + self.pad + self.trail_pad

    def to_dict(self) -> dict:
        return {
            "sample_period_us": self.sample_period_us,
            "pad_us": self.pad_us,
            "trail_pad_us": self.trail_pad_us,
            "samples": [{"amp_khz": float(a), "phase_deg": float(p)} for a, p in zip(self.amp_khz, self.phase_deg)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampledWaveform":
        try:
            samples = d["samples"]
            return cls(
                float(d["sample_period_us"]),
                np.array([s["amp_khz"] for s in samples], dtype=float),
                np.array([s["phase_deg"] for s in samples], dtype=float),
                float(d.get("pad_us", DEFAULT_PAD_US)),
                None if d.get("trail_pad_us") is None else float(d["trail_pad_us"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad waveform: {exc}") from None


def max_sample_period(seq: PulseSequence) -> float:
    """
    Coarsest sample period (s) accepted for ``seq``.

    The fastest phase ramp must advance by less than pi/2 per sample.
    Periods shorter than a sample are allowed; they end up inside boundary
    samples and are averaged in.
    """
    fastest = max(abs(p.offset) for p in seq if p.duration > 0) if seq.total_duration > 0 else 0.0
    return (np.pi / 2) / fastest if fastest > 0 else np.inf


def _field_integral(w, wrf, phi, t0, a, b):
    """Integral over [a, b] of w*exp(i(phi + wrf (t - t0))) dt."""
    if wrf == 0:
        return w * np.exp(1j * phi) * (b - a)
    return w * np.exp(1j * (phi - wrf * t0)) * (np.exp(1j * wrf * b) - np.exp(1j * wrf * a)) / (1j * wrf)


def discretize(seq: PulseSequence, sample_period: float, pad: float = DEFAULT_PAD_US * 1e-6) -> SampledWaveform:
    """Sample ``seq`` at a constant rate; ``sample_period`` and ``pad`` in seconds."""
    if sample_period <= 0:
        raise ValueError("sample period must be positive")
    limit = max_sample_period(seq)
    if sample_period > limit:
        raise ValueError(
            f"sample period {sample_period * 1e6:.4g} us is too coarse for this sequence; "
            f"need at most {limit * 1e6:.4g} us"
        )
    dt = sample_period
    periods = [p for p in seq if p.duration > 0]
    starts = np.concatenate([[0.0], np.cumsum([p.duration for p in periods])])
    T = starts[-1]
    # relative slack keeps float noise in T/dt from adding a whole sample
    n_samples = int(np.ceil(T / dt * (1 - 1e-12))) if T > 0 else 0
    overrun = n_samples * dt - T
    if overrun > pad:
        raise ValueError(f"pad of {pad * 1e6:.4g} us cannot absorb a {overrun * 1e6:.4g} us final-sample overrun")
    field = np.zeros(n_samples, dtype=complex)
    for i in range(n_samples):
        a, b = i * dt, (i + 1) * dt
        mid = 0.5 * (a + b)
        m = int(np.searchsorted(starts, mid, side="right") - 1)
        inside = 0 <= m < len(periods) and starts[m] <= a and b <= starts[m + 1]
        if inside:
            p = periods[m]
            field[i] = p.power * np.exp(1j * (p.phase + p.offset * (mid - starts[m])))
            continue
        acc = 0j
        lo = int(max(np.searchsorted(starts, a, side="right") - 1, 0))
        for k in range(lo, len(periods)):
            s, e = max(a, starts[k]), min(b, starts[k + 1])
            if s >= b:
                break
            if e > s:
                p = periods[k]
                acc += _field_integral(p.power, p.offset, p.phase, starts[k], s, e)
        field[i] = acc / dt
    amp = np.abs(field) / (2e3 * np.pi)
    phase = np.mod(np.degrees(np.angle(field)), 360.0)
    phase[phase >= 360.0] = 0.0
    return SampledWaveform(dt * 1e6, amp, phase, pad * 1e6, (pad - overrun) * 1e6)


def resimulate(sys: SpinSystem, w: SampledWaveform, ops: SystemOperators | None = None) -> np.ndarray:
    """Propagator of the sampled waveform, pads included as free evolution."""
    ops = ops or SystemOperators(sys)
    pad_U = expm_hermitian(ops.H_int, w.pad)
    trail_U = expm_hermitian(ops.H_int, w.trail_pad)
    if len(w) == 0:
        return trail_U @ pad_U
    params = np.column_stack([w.amplitudes, np.zeros(len(w)), w.phases, np.full(len(w), w.sample_period)])
    U = pad_U
    for chunk in range(0, len(params), 512):
        for Uk in ops.period_propagators(params[chunk:chunk + 512]):
            U = Uk @ U
    return trail_U @ U


def energy(w: SampledWaveform) -> float:
    """Sum of w^2 dt over samples (pads carry no power)."""
    return float(np.sum(w.amplitudes ** 2) * w.sample_period)


def save_json(w: SampledWaveform, path):
    Path(path).write_text(json.dumps(w.to_dict(), indent=1) + "\n")


def load_json(path) -> SampledWaveform:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return SampledWaveform.from_dict(data)


def shape_table(w: SampledWaveform) -> str:
    """Two-column text shape: amplitude in percent of max, phase in degrees."""
    peak = float(np.max(w.amp_khz)) if len(w) else 0.0
    lead = int(round(w.pad_us / w.sample_period_us))
    trail = int(round(w.trail_pad_us / w.sample_period_us))
    lines = [
        "# pulseforge shape",
        f"# sample_period_us = {w.sample_period_us:.6g}",
        f"# max_amplitude_khz = {peak:.6g}",
        f"# pad_us = {w.pad_us:.6g} lead, {w.trail_pad_us:.6g} trail ({lead}+{trail} zero rows)",
        f"# points = {len(w) + lead + trail}",
        "# amp_percent phase_deg",
    ]
    zero = f"{0.0:.6g} {0.0:.6g}"
    scale = 100.0 / peak if peak > 0 else 0.0
    rows = [zero] * lead
    rows += [f"{a * scale:.6g} {p:.6g}" for a, p in zip(w.amp_khz, w.phase_deg)]
    rows += [zero] * trail
    return "\n".join(lines + rows) + "\n"


def export(w: SampledWaveform, path, fmt: str = "json"):
    if fmt == "json":
        save_json(w, path)
    elif fmt in ("shape", "shape-table"):
        Path(path).write_text(shape_table(w))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
