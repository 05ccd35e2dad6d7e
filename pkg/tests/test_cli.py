import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from herdsweep.cli import main
from herdsweep.scenario import parse_ladder, parse_phi, scenario_from_dict, scenario_hash
from herdsweep.errors import DomainError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_strong(capsys):
    code, out, _ = run(capsys, "classify", "--phi", "power:3", "--dim", "2")
    assert code == 0
    rep = json.loads(out)
    assert rep["a2"] is True


def test_classify_weak(capsys):
    code, out, _ = run(capsys, "classify", "--phi", "power:0.5", "--dim", "2")
    rep = json.loads(out)
    assert code == 0
    assert rep["necessary_integral_diverges"] is False
    assert rep["necessary_integral"] == pytest.approx(2.0)


def test_classify_malformed(capsys):
    code, _, err = run(capsys, "classify", "--phi", "power:abc")
    assert code == 2
    assert "input error" in err


def test_classify_from_table(tmp_path, capsys):
    table = tmp_path / "phi.csv"
    table.write_text("\n".join(f"{r},{r ** -3}" for r in (0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0)) + "\n")
    code, out, _ = run(capsys, "classify", "--phi", f"table:{table}")
    assert code == 0
    assert json.loads(out)["scare"]["kind"] == "tabulated"


def test_confine_theory_gate(tmp_path, capsys):
    code, _, err = run(capsys, "confine", "--scenario", SCENARIOS / "weak_scare.json", "--out", tmp_path)
    assert code == 3
    assert "necessary condition violated" in err


def test_confine_not_nested(tmp_path, capsys):
    code, _, _ = run(capsys, "confine", "--scenario", SCENARIOS / "not_nested.json", "--out", tmp_path)
    assert code == 2


def test_confine_missing_scenario_file(tmp_path, capsys):
    code, _, _ = run(capsys, "confine", "--scenario", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 2


def test_confine_budget_exhausted_writes_report(tmp_path, capsys):
    code, out, _ = run(capsys, "confine", "--scenario", SCENARIOS / "concentric_disks.json", "--ladder", "20x32",
                       "--out", tmp_path)
    assert code == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["success"] is False and rep["rung"] == [20, 32]
    for name in ("ladder.csv", "schedule.json", "evolution.csv", "evolution.png", "ladder.png", "manifest.json"):
        assert (tmp_path / name).exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_code"] == 1
    assert man["scenario_hash"] == scenario_hash(json.loads((SCENARIOS / "concentric_disks.json").read_text()))
    assert {"numpy", "scipy", "python"} <= set(man["versions"])
    assert "confine" in man["timings"]
    with (tmp_path / "evolution.csv").open() as fh:
        assert next(csv.reader(fh)) == ["t", "kind", "index", "x", "y"]


def test_simulate_replays_schedule(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "confine", "--scenario", SCENARIOS / "concentric_disks.json", "--ladder", "20x32", "--out", a,
        "--no-figures")
    code, _, _ = run(capsys, "simulate", "--scenario", SCENARIOS / "concentric_disks.json",
                     "--schedule", a / "schedule.json", "--out", b, "--no-figures")
    assert code == 0
    last = lambda p: [r for r in csv.DictReader(p.open()) if r["t"] == "5.0"]  # noqa: E731
    assert last(a / "evolution.csv") == last(b / "evolution.csv")
    with (b / "volume.csv").open() as fh:
        assert next(csv.reader(fh)) == ["t", "volume"]


def test_sweep_static_tube(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--scenario", SCENARIOS / "static_tube.json", "--out", tmp_path,
                     "--continuum", "4")
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["sup_error"] < 1e-12
    with (tmp_path / "errors.csv").open() as fh:
        assert next(csv.reader(fh)) == ["t", "max_error", "hausdorff"]
    with (tmp_path / "reference.csv").open() as fh:
        assert next(csv.reader(fh)) == ["t", "sample", "x", "y"]


def test_sweep_gate(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--scenario", SCENARIOS / "static_tube.json", "--phi", "power:2",
                     "--out", tmp_path)
    assert code == 3


def test_sweep_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "sweep", "--scenario", SCENARIOS / "static_tube.json", "--out", tmp_path / d,
            "--continuum", "4", "--no-figures")
    for name in ("reference.csv", "candidate.csv", "errors.csv", "ladder.csv", "schedule.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_profile_circle(tmp_path, capsys):
    code, _, _ = run(capsys, "profile", "--scenario", SCENARIOS / "circle_profile.json", "--out", tmp_path)
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["slope"] == pytest.approx(-2.0, abs=0.15)
    assert (tmp_path / "profile.png").exists()
    with (tmp_path / "profiles.csv").open() as fh:
        assert next(csv.reader(fh)) == ["eps", "normal_inflow", "alignment_defect"]


def test_profile_from_phi(tmp_path, capsys):
    code, _, _ = run(capsys, "profile", "--phi", "power:0.5", "--out", tmp_path, "--no-figures")
    assert code == 0
    assert json.loads((tmp_path / "report.json").read_text())["inflow_ratio"] < 3


def test_module_entry_point_exit_code():
    proc = subprocess.run([sys.executable, "-m", "herdsweep", "classify", "--phi", "bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr


# scenario parsing ---------------------------------------------------------------------------


def test_parse_ladder():
    assert parse_ladder("20x32,40X64") == [(20, 32), (40, 64)]
    with pytest.raises(DomainError):
        parse_ladder("20x")
    with pytest.raises(DomainError):
        parse_ladder("0x4")


def test_parse_phi():
    f = parse_phi("power:2.5:3")
    assert (f.p, f.c) == (2.5, 3.0)
    with pytest.raises(DomainError):
        parse_phi("gauss:1")


def test_scenario_validation():
    with pytest.raises(DomainError):
        scenario_from_dict({"scare": "power:3", "T": -1})
    with pytest.raises(DomainError):
        scenario_from_dict({"scare": "power:3", "version": 7})
    with pytest.raises(DomainError):
        scenario_from_dict({"T": 1})
    with pytest.raises(DomainError):
        scenario_from_dict({"scare": "power:3", "omega0": {"kind": "disk"}})


def test_scenario_hash_ignores_key_order():
    assert scenario_hash({"a": 1, "b": [1, 2]}) == scenario_hash({"b": [1, 2], "a": 1})
