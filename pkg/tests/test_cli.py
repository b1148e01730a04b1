import hashlib
import json

import numpy as np
import pytest

from conftest import FIXTURE3
from pulseforge.cli import main, parse_range, UsageError
from pulseforge.dynamics import PulseSequence, save_sequence
from pulseforge.robustness import SweepGrid


@pytest.fixture
def one_spin(tmp_path):
    p = tmp_path / "one.json"
    p.write_text(json.dumps({"shifts_hz": [300.0], "couplings_hz": [[0.0]]}))
    return p


@pytest.fixture
def pulse_file(tmp_path):
    seq = PulseSequence.from_array([[2e3 * np.pi * 9, -2 * np.pi * 3000, np.pi, 30e-6],
                                    [2e3 * np.pi * 6, 2 * np.pi * 500, 0.5, 40e-6]], {"gate": "rot(1,x,90)"})
    p = tmp_path / "pulse.json"
    save_sequence(seq, p)
    return p


def manifest_lines(d):
    return [json.loads(l) for l in (d / "manifest.jsonl").read_text().splitlines()]


def sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def test_design_identity(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["design", "--system", str(FIXTURE3), "--gate", "identity", "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["fidelity"] == 1.0 and report["met"]
    m = manifest_lines(out)
    assert len(m) == 1 and m[0]["seed"] == 0
    for path, digest in m[0]["outputs"].items():
        assert sha(__import__("pathlib").Path(path)) == digest
    assert m[0]["inputs"][str(FIXTURE3)] == sha(FIXTURE3)


def test_missing_system_leaves_no_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["design", "--system", str(tmp_path / "nope.json"), "--gate", "identity", "--out-dir", str(out)]) == 3
    assert not out.exists()


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "shifts_hz": [1,\n}')
    assert main(["design", "--system", str(bad), "--gate", "identity", "--out-dir", str(tmp_path / "o")]) == 3
    assert "line 3" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["design", "--system", str(FIXTURE3), "--gate", "rot(7,x,90)", "--out-dir", str(tmp_path)]) == 2
    assert main(["design", "--system", str(FIXTURE3), "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_seeded_design_is_byte_identical(tmp_path, one_spin, monkeypatch):
    monkeypatch.setenv("PULSEFORGE_SEED", "11")
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        args = ["design", "--system", str(one_spin), "--gate", "rot(1,x,90)", "--restarts", "2",
                "--threads", "1", "--out-dir", str(out)]
        assert main(args) == 0
        runs.append(out)
    for f in ("pulse.json", "report.json"):
        assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()
    assert manifest_lines(runs[0])[0]["seed"] == 11


def test_threshold_not_met_exits_zero(tmp_path, one_spin):
    out = tmp_path / "o"
    code = main(["design", "--system", str(one_spin), "--gate", "rot(1,x,180)", "--max-duration-us", "1",
                 "--max-power-khz", "1", "--max-periods", "1", "--restarts", "1", "--threads", "1",
                 "--out-dir", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["met"] is False and rep["status"].startswith("warning")


def test_simulate_matches_design_report(tmp_path, one_spin):
    out = tmp_path / "d"
    main(["design", "--system", str(one_spin), "--gate", "rot(1,y,90)", "--restarts", "1", "--threads", "1",
          "--out-dir", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert main(["simulate", "--system", str(one_spin), "--pulse", str(out / "pulse.json"), "--out-dir", str(out)]) == 0
    sim = json.loads((out / "simulation.json").read_text())
    assert sim["fidelity"] == pytest.approx(rep["fidelity"], abs=1e-12)
    assert len(manifest_lines(out)) == 2


def test_simulate_table2_identity(tmp_path, capsys):
    out = tmp_path / "o"
    main(["design", "--system", str(FIXTURE3), "--gate", "identity", "--out-dir", str(out)])
    assert main(["simulate", "--system", str(FIXTURE3), "--pulse", str(out / "pulse.json"), "--table2",
                 "--out-dir", str(out)]) == 0
    rows = dict(l.split("\t") for l in (out / "table2.tsv").read_text().splitlines()[1:])
    assert rows["projection"] == rows["correlation"] == rows["attenuation"] == "1.000000"


def test_simulate_wrong_target(tmp_path, pulse_file):
    before = sha(pulse_file)
    assert main(["simulate", "--system", str(FIXTURE3), "--pulse", str(pulse_file), "--gate", "rot(3,y,90)",
                 "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "simulation.json").read_text())["fidelity"] < 1
    assert sha(pulse_file) == before


def test_target_file(tmp_path, pulse_file):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"name": "eye", "real": np.eye(8).tolist()}))
    assert main(["simulate", "--system", str(FIXTURE3), "--pulse", str(pulse_file), "--target-file", str(t),
                 "--out-dir", str(tmp_path)]) == 0
    t.write_text(json.dumps({"real": (2 * np.eye(8)).tolist()}))
    assert main(["simulate", "--system", str(FIXTURE3), "--pulse", str(pulse_file), "--target-file", str(t),
                 "--out-dir", str(tmp_path / "x")]) == 3


def test_sweep_pair_grid_file(tmp_path, pulse_file):
    assert main(["sweep-pair", "power", "duration", "--system", str(FIXTURE3), "--pulse", str(pulse_file),
                 "--threads", "1", "--out-dir", str(tmp_path)]) == 0
    g = SweepGrid.from_text((tmp_path / "sweep_pair_power_duration.txt").read_text())
    assert g.values.shape == (41, 41)


def test_sweep_amplitude_table(tmp_path, pulse_file):
    assert main(["sweep-amplitude", "--system", str(FIXTURE3), "--pulse", str(pulse_file),
                 "--scales", "0.90..1.10", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep_amplitude.txt").read_text().splitlines()
    assert lines[1].startswith("scale\tmean\tstd")
    assert len(lines) == 2 + 21


def test_sweep_shift_negative_range(tmp_path, pulse_file):
    assert main(["sweep-shift", "--pulse", str(pulse_file), "--range", "-5000..9000", "--count", "15",
                 "--out-dir", str(tmp_path)]) == 0
    rows = [l for l in (tmp_path / "sweep_shift.txt").read_text().splitlines() if not l.startswith(("#", "shift"))]
    assert len(rows) == 15
    assert float(rows[0].split("\t")[0]) == -5000


@pytest.mark.parametrize("fmt,name", [("json", "waveform.json"), ("shape-table", "waveform.shape")])
def test_export(tmp_path, pulse_file, fmt, name):
    assert main(["export", "--pulse", str(pulse_file), "--sample-period-us", "0.5", "--format", fmt,
                 "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / name).exists()


def test_export_too_coarse(tmp_path, pulse_file):
    assert main(["export", "--pulse", str(pulse_file), "--sample-period-us", "200", "--out-dir", str(tmp_path)]) == 2
    assert not (tmp_path / "waveform.json").exists()


def test_parse_range():
    assert np.allclose(parse_range("0.9..1.1", 3), [0.9, 1.0, 1.1])
    assert np.allclose(parse_range("1,2,5", 3), [1, 2, 5])
    with pytest.raises(UsageError):
        parse_range("a..b", 3)
