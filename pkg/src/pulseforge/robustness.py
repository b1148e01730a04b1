"""
Sensitivity of designed pulses to control errors and to the resonance
frequency of the driven spin.

Three analyses are provided: fidelity surfaces over pairs of uniformly
perturbed control parameters, fidelity statistics over RF power scale
factors for a set of pulses, and the frequency response of an isolated
test spin whose shift is swept across the band.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import PulseSequence, SystemOperators, expm_hermitian, pad_sequence
from .spin_model import SpinSystem

PARAMS = ("power", "offset", "phase", "duration")
# multiplicative params take a scale factor, additive ones a shift
RELATIVE = {"power": True, "duration": True, "phase": False, "offset": False}

# typical experimental errors: +-10 % power/duration, +-5 deg phase, +-50 Hz offset
DEFAULT_RANGES = {
    "power": (0.9, 1.1),
    "duration": (0.9, 1.1),
    "phase": (-np.radians(5.0), np.radians(5.0)),
    "offset": (-50.0, 50.0),
}
DEFAULT_COUNT = 41


def _check_param(param: str):
    if param not in PARAMS:
        raise ValueError(f"unknown control parameter {param!r}; expected one of {', '.join(PARAMS)}")


def perturb_sequence(seq: PulseSequence, param: str, value: float) -> PulseSequence:
    """
    Apply one uniform control error to every period.

    ``power`` and ``duration`` are multiplied by ``value``; ``phase`` is
    shifted by ``value`` radians and ``offset`` by ``value`` Hz.
    """
    _check_param(param)
    if param == "power":
        periods = [replace(p, power=p.power * value) for p in seq]
    elif param == "duration":
        periods = [replace(p, duration=p.duration * value) for p in seq]
    elif param == "phase":
        periods = [replace(p, phase=p.phase + value) for p in seq]
    else:
        periods = [replace(p, offset=p.offset + 2 * np.pi * value) for p in seq]
    return PulseSequence(tuple(periods), dict(seq.metadata))


def _perturb_array(params: np.ndarray, param: str, value: float) -> np.ndarray:
    p = params.copy()
    col = PARAMS.index(param)
    if RELATIVE[param]:
        p[..., col] *= value
    elif param == "offset":
        p[..., col] += 2 * np.pi * value
    else:
        p[..., col] += value
    return p


@dataclass(frozen=True)
class AxisSpec:
    """One sweep axis; ``lo``/``hi`` are scale factors or shifts (rad, Hz)."""

    param: str
    lo: float
    hi: float
    count: int = DEFAULT_COUNT

    def __post_init__(self):
        _check_param(self.param)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "count", int(self.count))
        if self.count < 1:
            raise ValueError("axis needs at least one sample")
        if self.count > 1 and not self.hi > self.lo:
            raise ValueError(f"axis {self.param}: need lo < hi, got {self.lo}, {self.hi}")

    @classmethod
    def default(cls, param: str, count: int = DEFAULT_COUNT) -> "AxisSpec":
        _check_param(param)
        lo, hi = DEFAULT_RANGES[param]
        return cls(param, lo, hi, count)

    @property
    def relative(self) -> bool:
        return RELATIVE[self.param]

    @property
    def nominal(self) -> float:
        return 1.0 if self.relative else 0.0

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    def unit(self) -> str:
        return {"power": "scale", "duration": "scale", "phase": "rad", "offset": "Hz"}[self.param]


@dataclass
class SweepGrid:
    """Gate fidelity over a 2-d grid; ``values[i, j]`` pairs axis 0 sample i with axis 1 sample j."""

    axes: tuple
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(a.count for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"grid shape {self.values.shape} does not match axes {shape}")
        if np.any(self.values < 0) or np.any(self.values > 1 + 1e-12):
            raise ValueError("grid fidelities must lie in [0, 1]")

    @property
    def center(self) -> tuple:
        """Index of the unperturbed point, or None if it is not on the grid."""
        idx = []
        for a in self.axes:
            v = a.values()
            i = int(np.argmin(np.abs(v - a.nominal)))
            if not np.isclose(v[i], a.nominal, rtol=0, atol=1e-12 * max(1.0, abs(a.hi - a.lo))):
                return None
            idx.append(i)
        return tuple(idx)

    def transpose(self) -> "SweepGrid":
        return SweepGrid(self.axes[::-1], self.values.T.copy(), dict(self.metadata))

    def curvatures(self) -> dict:
        """
        Negative second derivative of F at the center along each axis.

        Each axis coordinate is normalized so its sweep range spans [-1, 1];
        axes are thus compared per unit of their typical error.
        """
        c = self.center
        if c is None:
            raise ValueError("grid does not contain the unperturbed point")
        out = {}
        for k, a in enumerate(self.axes):
            if a.count < 3 or c[k] in (0, a.count - 1):
                raise ValueError(f"axis {a.param} needs samples on both sides of the center")
            h = 2.0 / (a.count - 1)
            line = self.values[:, c[1]] if k == 0 else self.values[c[0], :]
            i = c[k]
            out[a.param] = -(line[i + 1] - 2 * line[i] + line[i - 1]) / h ** 2
        return out

    def to_text(self) -> str:
        a0, a1 = self.axes
        lines = ["# pulseforge sweep-pair"]
        for k, v in sorted(self.metadata.items()):
            lines.append(f"# {k} = {v}")
        for i, a in enumerate(self.axes):
            lines.append(f"# axis{i} = {a.param} {a.unit()} {a.lo!r} {a.hi!r} {a.count}")
        lines.append("# rows follow axis0, columns follow axis1")
        lines.append(f"axis0\t" + "\t".join(f"{v:.10g}" for v in a0.values()))
        lines.append(f"axis1\t" + "\t".join(f"{v:.10g}" for v in a1.values()))
        for row in self.values:
            lines.append("\t".join(f"{v:.12f}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SweepGrid":
        axes, meta, rows = [], {}, []
        for line in text.splitlines():
            if line.startswith("# axis"):
                _, spec = line[2:].split(" = ", 1)
                param, _unit, lo, hi, count = spec.split()
                axes.append(AxisSpec(param, float(lo), float(hi), int(count)))
            elif line.startswith("# ") and " = " in line:
                k, v = line[2:].split(" = ", 1)
                meta[k] = v
            elif line.startswith("#") or line.startswith("axis"):
                continue
            elif line.strip():
                rows.append([float(v) for v in line.split("\t")])
        return cls(tuple(axes), np.array(rows), meta)


def batch_fidelity(ops: SystemOperators, stack: np.ndarray, target: np.ndarray, pad: float = 0.0) -> np.ndarray:
    """
    Gate fidelities for a stack of period tables of shape (M, N, 4).

    Periods are propagated in one batched eigendecomposition and the products
    are accumulated with batched matrix multiplication.
    """
    stack = np.asarray(stack, dtype=float)
    M, N = stack.shape[:2]
    Us = ops.period_propagators(stack.reshape(M * N, 4)).reshape(M, N, ops.dim, ops.dim)
    U = Us[:, 0]
    for k in range(1, N):
        U = Us[:, k] @ U
    if pad > 0:
        P = expm_hermitian(ops.H_int, pad)
        U = P @ U @ P
    overlap = np.einsum("ij,mij->m", np.conj(target), U) / ops.dim
    return np.minimum(np.abs(overlap) ** 2, 1.0)


def _grid_rows(args):
    sys, params, a, va_list, b, target, pad = args
    ops = SystemOperators(sys)
    rows = []
    for va in va_list:
        pa = _perturb_array(params, a.param, va)
        stack = np.stack([_perturb_array(pa, b.param, vb) for vb in b.values()])
        rows.append(batch_fidelity(ops, stack, target, pad))
    return np.array(rows)


def sweep_pair(
    sys: SpinSystem,
    seq: PulseSequence,
    U_th,
    param_a: str | AxisSpec,
    param_b: str | AxisSpec,
    *,
    pad: float = 0.0,
    threads: int = 1,
    metadata: dict | None = None,
) -> SweepGrid:
    """
    Fidelity surface over two uniformly perturbed control parameters.

    Axes given by name use the default typical-error ranges and 41 samples.
    With ``threads > 1`` rows of the grid are split across worker
    processes; assembly order is fixed so results do not depend on it.
    """
    a = param_a if isinstance(param_a, AxisSpec) else AxisSpec.default(param_a)
    b = param_b if isinstance(param_b, AxisSpec) else AxisSpec.default(param_b)
    if a.param == b.param:
        raise ValueError("sweep_pair needs two different parameters")
    params = seq.as_array()
    target = np.asarray(U_th, dtype=complex)
    if threads > 1 and a.count > 1:
        chunks = np.array_split(a.values(), min(threads, a.count))
        jobs = [(sys, params, a, c, b, target, pad) for c in chunks]
        with ProcessPoolExecutor(threads) as pool:
            values = np.vstack(list(pool.map(_grid_rows, jobs)))
    else:
        values = _grid_rows((sys, params, a, a.values(), b, target, pad))
    meta = {"pulse": seq.metadata.get("gate", "")}
    meta.update(metadata or {})
    return SweepGrid((a, b), values, meta)


def all_pairs(sys, seq, U_th, **kw) -> dict:
    """The six unordered parameter pairs, keyed by (param_a, param_b)."""
    return {(a, b): sweep_pair(sys, seq, U_th, a, b, **kw)
            for i, a in enumerate(PARAMS) for b in PARAMS[i + 1:]}


@dataclass
class AmplitudeSensitivity:
    scales: np.ndarray
    fidelities: np.ndarray  # (n_scales, n_pulses)
    names: list = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.fidelities.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.fidelities.std(axis=1)

    def at(self, scale: float) -> tuple:
        i = int(np.argmin(np.abs(self.scales - scale)))
        return float(self.mean[i]), float(self.std[i])

    def to_text(self) -> str:
        head = "scale\tmean\tstd\t" + "\t".join(self.names or [f"pulse{i + 1}" for i in range(self.fidelities.shape[1])])
        lines = ["# pulseforge sweep-amplitude", head]
        for s, m, d, row in zip(self.scales, self.mean, self.std, self.fidelities):
            lines.append(f"{s:.6g}\t{m:.10f}\t{d:.10f}\t" + "\t".join(f"{v:.10f}" for v in row))
        return "\n".join(lines) + "\n"


def amplitude_sensitivity(sys: SpinSystem, pulses, targets, scales, *, pad: float = 0.0,
                          names=None) -> AmplitudeSensitivity:
    """Fidelity of every pulse with its power scaled, for each scale factor."""
    pulses, targets = list(pulses), list(targets)
    if len(pulses) != len(targets):
        raise ValueError("need one target per pulse")
    if not pulses:
        raise ValueError("need at least one pulse")
    scales = np.asarray(scales, dtype=float).reshape(-1)
    ops = SystemOperators(sys)
    F = np.empty((scales.size, len(pulses)))
    for j, (seq, U_th) in enumerate(zip(pulses, targets)):
        base = seq.as_array()
        stack = np.stack([_perturb_array(base, "power", s) for s in scales])
        F[:, j] = batch_fidelity(ops, stack, np.asarray(U_th, dtype=complex), pad)
    names = list(names) if names is not None else [p.metadata.get("gate", f"pulse{i + 1}") for i, p in enumerate(pulses)]
    return AmplitudeSensitivity(scales, F, names)


@dataclass
class ShiftCurves:
    """
    Test-spin frequency response.

    ``identity`` is curve A (best match to the identity up to a z-rotation,
    whose fitted angle is ``z_angle``); ``desired`` is curve B.
    """

    shifts_hz: np.ndarray
    identity: np.ndarray
    desired: np.ndarray
    z_angle: np.ndarray
    metadata: dict = field(default_factory=dict)

    def at(self, shift_hz: float) -> tuple:
        i = int(np.argmin(np.abs(self.shifts_hz - shift_hz)))
        return float(self.identity[i]), float(self.desired[i])

    def to_text(self) -> str:
        lines = ["# pulseforge sweep-shift"]
        for k, v in sorted(self.metadata.items()):
            lines.append(f"# {k} = {v}")
        lines.append("shift_hz\tF_identity_z\tF_desired\tz_angle_rad")
        for row in zip(self.shifts_hz, self.identity, self.desired, self.z_angle):
            lines.append("\t".join(f"{v:.10g}" for v in row))
        return "\n".join(lines) + "\n"


def identity_up_to_z(U) -> tuple:
    """
    max over theta of |Tr(Rz(theta)^dag U) / 2|^2 for a 2x2 ``U``.

    With Rz(theta) = diag(e^{-i theta/2}, e^{+i theta/2}) the trace is
    e^{i theta/2} U00 + e^{-i theta/2} U11, whose modulus peaks at
    |U00| + |U11| when theta = arg U11 - arg U00.
    """
    U = np.asarray(U)
    F = ((np.abs(U[..., 0, 0]) + np.abs(U[..., 1, 1])) / 2) ** 2
    theta = np.angle(U[..., 1, 1]) - np.angle(U[..., 0, 0])
    return np.minimum(F, 1.0), np.mod(theta + np.pi, 2 * np.pi) - np.pi


def chemshift_sweep(seq: PulseSequence, shifts_hz, desired, *, pad: float = 0.0,
                    metadata: dict | None = None) -> ShiftCurves:
    """
    Drive an isolated spin-1/2 at each shift with ``seq``.

    ``desired`` is the 2x2 rotation the pulse should apply when the test
    spin sits at the design shift (for example the single-spin part of
    the target gate).
    """
    shifts_hz = np.asarray(shifts_hz, dtype=float).reshape(-1)
    desired = np.asarray(desired, dtype=complex)
    if desired.shape != (2, 2):
        raise ValueError("desired rotation must be a 2x2 matrix")
    s = pad_sequence(seq, pad)
    params = s.as_array()
    Us = []
    for nu in shifts_hz:
        ops = SystemOperators(SpinSystem.from_hz([nu], [[0.0]]))
        Us.append(ops.net(params))
    Us = np.array(Us)
    F_id, theta = identity_up_to_z(Us)
    F_des = np.minimum(np.abs(np.einsum("ij,mij->m", np.conj(desired), Us) / 2) ** 2, 1.0)
    meta = {"pulse": seq.metadata.get("gate", "")}
    meta.update(metadata or {})
    return ShiftCurves(shifts_hz, F_id, F_des, theta, meta)
