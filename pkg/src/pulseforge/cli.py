"""
pulseforge command-line front end.

Every command computes its results in memory first and only then writes
them, so a failing run leaves no partial outputs. Each successful run
appends one line to ``manifest.jsonl`` in the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import NumericalError, load_sequence, net_propagator, pad_sequence
from .fidelity import fidelity_report, format_table
from .optimizer import GateSpec, PenaltyConfig, SearchConfig, design_pulse, parse_gate, rotation, standard_gate
from .robustness import PARAMS, AxisSpec, amplitude_sensitivity, chemshift_sweep, sweep_pair
from .spin_model import ConfigError, SpinSystem, is_unitary, load_system
from .waveform import discretize, shape_table

log = logging.getLogger("pulseforge")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "manifest.jsonl"


class UsageError(Exception):
    pass


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: list
    seed: int | None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    started: str = ""
    wall_clock_s: float = 0.0

    def add_input(self, path):
        if path is not None:
            self.inputs[str(path)] = sha256(path)

    def to_json(self) -> str:
        return json.dumps({
            "command": self.command, "seed": self.seed, "version": self.version,
            "inputs": self.inputs, "outputs": self.outputs,
            "started": self.started, "wall_clock_s": round(self.wall_clock_s, 3),
        }, sort_keys=True)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _commit(out_dir: Path, files: dict, manifest: RunManifest):
    """Write all outputs, then append the manifest line with their hashes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        path = out_dir / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        manifest.outputs[str(path)] = sha256(path)
    with open(out_dir / MANIFEST, "a") as fh:
        fh.write(manifest.to_json() + "\n")


def _load_target(args, sys_: SpinSystem, fallback: str | None = None):
    """Target unitary and its label from --gate, --target-file or pulse metadata."""
    if getattr(args, "target_file", None):
        path = args.target_file
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        try:
            U = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data.get("imag", 0.0), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: target needs 'real' (and optional 'imag') matrices: {exc}") from None
        if U.shape != (sys_.dim, sys_.dim):
            raise ConfigError(f"{path}: target is {U.shape}, system needs {sys_.dim}x{sys_.dim}")
        if not is_unitary(U, atol=1e-8):
            raise ConfigError(f"{path}: target matrix is not unitary")
        return U, data.get("name", Path(path).stem)
    name = getattr(args, "gate", None) or fallback
    if not name:
        raise UsageError("a target is required: pass --gate or --target-file")
    try:
        return standard_gate(name, sys_), name
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PULSEFORGE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PULSEFORGE_SEED must be an integer, got {env!r}") from None


def _pulse_summary(seq) -> dict:
    return {
        "n_periods": len(seq),
        "total_duration_us": seq.total_duration * 1e6,
        "max_power_khz": seq.max_power / (2e3 * np.pi),
    }


def parse_range(text: str, count: int) -> np.ndarray:
    """``lo..hi`` (``count`` evenly spaced points) or a comma-separated list."""
    try:
        if ".." in text:
            lo, hi = (float(v) for v in text.split("..", 1))
            if count < 2 or not hi > lo:
                raise ValueError
            return np.linspace(lo, hi, count)
        vals = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad range {text!r}; use lo..hi or a comma-separated list") from None
    if vals.size == 0:
        raise UsageError(f"empty range {text!r}")
    return vals


# -- commands ----------------------------------------------------------------

def cmd_design(args, manifest: RunManifest) -> dict:
    sys_ = load_system(args.system)
    manifest.add_input(args.system)
    manifest.add_input(args.target_file)
    target, name = _load_target(args, sys_)
    seed = _seed(args)
    manifest.seed = seed
    gate = GateSpec(target, name, args.fidelity, 2e3 * np.pi * args.max_power_khz,
                    args.max_duration_us * 1e-6, args.max_periods)
    cfg = SearchConfig(restarts=args.restarts, seed=seed, threads=args.threads,
                       include_pads=args.include_pads, pad=args.pad_us * 1e-6)
    result = design_pulse(sys_, gate, PenaltyConfig.for_gate(gate), cfg)
    status = "ok" if result.met else "warning: fidelity threshold not met"
    if not result.met:
        log.warning("%s: best fidelity %.6f is below the threshold %.6f", name, result.fidelity, args.fidelity)
    report = {
        **result.report.to_dict(),
        **_pulse_summary(result.sequence),
        "met": result.met,
        "status": status,
        "threshold": args.fidelity,
        "seed": seed,
        "constraints": {"max_power_khz": args.max_power_khz, "max_duration_us": args.max_duration_us,
                        "max_periods": args.max_periods},
    }
    seq_text = json.dumps(result.sequence.to_dict(), indent=2, sort_keys=True) + "\n"
    print(f"{name}: F = {result.fidelity:.6f} ({status}), {len(result.sequence)} periods, "
          f"{report['total_duration_us']:.1f} us, {report['max_power_khz']:.2f} kHz")
    return {"pulse.json": seq_text, "report.json": _dumps(report), "audit.json": _dumps(result.audit_dicts())}


def cmd_simulate(args, manifest: RunManifest) -> dict:
    sys_ = load_system(args.system)
    seq = load_sequence(args.pulse)
    for p in (args.system, args.pulse, args.target_file):
        manifest.add_input(p)
    target, name = _load_target(args, sys_, seq.metadata.get("gate"))
    U = net_propagator(sys_, pad_sequence(seq, args.pad_us * 1e-6))
    rep = fidelity_report(target, U, sys_.n, name)
    files = {"simulation.json": _dumps({**rep.to_dict(), **_pulse_summary(seq)})}
    if args.table2:
        table = format_table([rep])
        files["table2.tsv"] = table
        print(table, end="")
    else:
        print(f"{name}: F = {rep.fidelity:.12f}, P = {rep.projection:.6f}, C = {rep.correlation:.6f}")
    return files


def cmd_sweep_pair(args, manifest: RunManifest) -> dict:
    sys_ = load_system(args.system)
    seq = load_sequence(args.pulse)
    for p in (args.system, args.pulse, args.target_file):
        manifest.add_input(p)
    if args.param_a == args.param_b:
        raise UsageError("sweep-pair needs two different parameters")
    target, name = _load_target(args, sys_, seq.metadata.get("gate"))
    axes = []
    for param, rng in ((args.param_a, args.range_a), (args.param_b, args.range_b)):
        if rng is None:
            axes.append(AxisSpec.default(param, args.count))
        else:
            vals = parse_range(rng, args.count)
            lo, hi = vals[0], vals[-1]
            if param == "phase":
                lo, hi = np.radians(lo), np.radians(hi)
            axes.append(AxisSpec(param, lo, hi, args.count))
    grid = sweep_pair(sys_, seq, target, axes[0], axes[1], pad=args.pad_us * 1e-6, threads=args.threads,
                      metadata={"target": name})
    curv = grid.curvatures() if grid.center is not None else {}
    print(f"{args.param_a} x {args.param_b}: {grid.values.shape[0]}x{grid.values.shape[1]} grid, "
          f"F in [{grid.values.min():.4f}, {grid.values.max():.4f}]"
          + "".join(f", curvature[{k}] = {v:.4g}" for k, v in curv.items()))
    return {f"sweep_pair_{args.param_a}_{args.param_b}.txt": grid.to_text()}


def cmd_sweep_amplitude(args, manifest: RunManifest) -> dict:
    sys_ = load_system(args.system)
    manifest.add_input(args.system)
    seqs = [load_sequence(p) for p in args.pulse]
    for p in args.pulse:
        manifest.add_input(p)
    gates = args.gate or [None] * len(seqs)
    if len(gates) != len(seqs):
        raise UsageError("pass one --gate per --pulse, or none to use each pulse's recorded gate")
    targets, names = [], []
    for seq, g in zip(seqs, gates):
        name = g or seq.metadata.get("gate")
        if not name:
            raise UsageError("pulse file records no gate; pass --gate")
        try:
            targets.append(standard_gate(name, sys_))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        names.append(name)
    scales = parse_range(args.scales, args.count)
    res = amplitude_sensitivity(sys_, seqs, targets, scales, pad=args.pad_us * 1e-6, names=names)
    for s, m, d in zip(res.scales, res.mean, res.std):
        print(f"scale {s:.4f}: F = {m:.4f} +- {d:.4f}")
    return {"sweep_amplitude.txt": res.to_text()}


def cmd_sweep_shift(args, manifest: RunManifest) -> dict:
    seq = load_sequence(args.pulse)
    manifest.add_input(args.pulse)
    name = args.gate or seq.metadata.get("gate")
    if not name:
        raise UsageError("pulse file records no gate; pass --gate")
    try:
        parsed = parse_gate(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    desired = np.eye(2, dtype=complex) if parsed is None else rotation(1, [1], parsed[1], parsed[2])
    shifts = parse_range(args.range, args.count)
    curves = chemshift_sweep(seq, shifts, desired, pad=args.pad_us * 1e-6, metadata={"target": name})
    i = int(np.argmax(curves.desired))
    print(f"{len(shifts)} shifts, desired-gate fidelity peaks at {curves.desired[i]:.4f} "
          f"near {curves.shifts_hz[i]:.0f} Hz")
    return {"sweep_shift.txt": curves.to_text()}


def cmd_export(args, manifest: RunManifest) -> dict:
    seq = load_sequence(args.pulse)
    manifest.add_input(args.pulse)
    try:
        w = discretize(seq, args.sample_period_us * 1e-6, args.pad_us * 1e-6)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{len(w)} samples at {args.sample_period_us:g} us plus pads")
    if args.format == "json":
        return {"waveform.json": json.dumps(w.to_dict(), indent=1) + "\n"}
    return {"waveform.shape": shape_table(w)}


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pulseforge", description="Design and analyze strongly modulating NMR pulses.",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, system=True, pulse=True, target=True):
        if system:
            p.add_argument("--system", required=True, help="spin-system JSON config")
        if pulse:
            p.add_argument("--pulse", required=True, help="pulse sequence JSON file")
        if target:
            p.add_argument("--gate", help="target gate: identity or rot(spins,axis,angle_deg)")
            p.add_argument("--target-file", help="JSON target unitary {real, imag}")
        p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
        p.add_argument("--pad-us", type=float, default=0.0, help="zero-power pad on each side, us")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    threads = os.cpu_count() or 1

    p = sub.add_parser("design", help="search for a pulse implementing a gate", formatter_class=fmt)
    common(p, pulse=False)
    p.add_argument("--fidelity", type=float, default=0.999, help="fidelity threshold")
    p.add_argument("--max-power-khz", type=float, default=12.0, help="power cap, w/2pi in kHz")
    p.add_argument("--max-duration-us", type=float, default=400.0, help="total duration cap")
    p.add_argument("--max-periods", type=int, default=6, help="largest period count tried")
    p.add_argument("--restarts", type=int, default=8, help="random starts per period count")
    p.add_argument("--include-pads", action="store_true", help="include pad evolution in the objective")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $PULSEFORGE_SEED, then 0)")
    p.add_argument("--threads", type=int, default=threads, help="worker processes for restarts")
    p.set_defaults(func=cmd_design, pad_us=6.0)

    p = sub.add_parser("simulate", help="propagate a pulse and report its fidelity", formatter_class=fmt)
    common(p)
    p.add_argument("--table2", action="store_true", help="emit projection/correlation/attenuation rows")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-pair", help="fidelity grid over two control errors", formatter_class=fmt)
    p.add_argument("param_a", choices=PARAMS)
    p.add_argument("param_b", choices=PARAMS)
    common(p)
    p.add_argument("--range-a", help="lo..hi for the first axis (scale, Hz or degrees)")
    p.add_argument("--range-b", help="lo..hi for the second axis")
    p.add_argument("--count", type=int, default=41, help="samples per axis")
    p.add_argument("--threads", type=int, default=threads, help="worker processes")
    p.set_defaults(func=cmd_sweep_pair)

    p = sub.add_parser("sweep-amplitude", help="fidelity statistics over RF power scale factors",
                       formatter_class=fmt)
    p.add_argument("--system", required=True, help="spin-system JSON config")
    p.add_argument("--pulse", required=True, nargs="+", help="pulse sequence files")
    p.add_argument("--gate", nargs="+", help="one gate per pulse (default: recorded gate)")
    p.add_argument("--scales", default="0.90..1.10", help="lo..hi or comma list")
    p.add_argument("--count", type=int, default=21, help="points for a lo..hi range")
    p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
    p.add_argument("--pad-us", type=float, default=0.0, help="zero-power pad on each side, us")
    p.set_defaults(func=cmd_sweep_amplitude)

    p = sub.add_parser("sweep-shift", help="test-spin frequency response", formatter_class=fmt)
    p.add_argument("--pulse", required=True, help="pulse sequence JSON file")
    p.add_argument("--gate", help="gate whose single-spin rotation is the desired response")
    p.add_argument("--range", default="-5000..9000", help="test shifts in Hz, lo..hi or comma list")
    p.add_argument("--count", type=int, default=281, help="points for a lo..hi range")
    p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
    p.add_argument("--pad-us", type=float, default=0.0, help="zero-power pad on each side, us")
    p.set_defaults(func=cmd_sweep_shift)

    p = sub.add_parser("export", help="sample a pulse into an amplitude/phase waveform", formatter_class=fmt)
    p.add_argument("--pulse", required=True, help="pulse sequence JSON file")
    p.add_argument("--sample-period-us", type=float, default=0.5, help="sample period")
    p.add_argument("--pad-us", type=float, default=6.0, help="zero-power pad on each side, us")
    p.add_argument("--format", choices=("json", "shape-table"), default="json")
    p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
    p.set_defaults(func=cmd_export)
    return parser


_VALUE_FLAGS = ("--range", "--range-a", "--range-b", "--scales")


def _join_negative_values(argv: list) -> list:
    """Let ``--range -5000..9000`` through; argparse would read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    manifest = RunManifest(["pulseforge", *argv], getattr(args, "seed", None),
                           started=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    t0 = time.perf_counter()
    try:
        files = args.func(args, manifest)
    except UsageError as exc:
        print(f"pulseforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"pulseforge: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"pulseforge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest.wall_clock_s = time.perf_counter() - t0
    _commit(Path(args.out_dir), files, manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
