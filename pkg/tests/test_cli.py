import json
import subprocess
import sys

import pytest
import yaml

from mvie.cli import main

MIE = {
    "medium": {"eps_r": 1.2},
    "shape": {"kind": "sphere", "size": [0.5]},
    "grid": {"n": 12},
    "experiment": {"kind": "mie-validate", "directions": 40, "bound": 0.2},
}


def write(tmp_path, cfg, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def run(tmp_path, cfg, out="out", extra=()):
    return main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])


def manifest(tmp_path, out="out"):
    return json.loads((tmp_path / out / "manifest.json").read_text())


def test_check_regime_ok(tmp_path):
    cfg = {"medium": {"eps_r": 1.1, "V": [0.01, 0, 0]}, "experiment": {"kind": "check-regime"}}
    assert run(tmp_path, cfg) == 0
    rec = json.loads((tmp_path / "out" / "regime.json").read_text())
    assert rec["pass1"] and rec["lhs1"] == pytest.approx(0.011)
    assert manifest(tmp_path)["exit_status"] == 0


def test_regime_violation_exit_3(tmp_path):
    cfg = {"medium": {"eps_r": 2.0, "V": [0.6, 0, 0]},
           "experiment": {"kind": "check-regime", "require_regime": True}}
    assert run(tmp_path, cfg) == 3


@pytest.mark.parametrize("raw", [
    {"medium": {"bogus": 1}, "experiment": {"kind": "check-regime"}},
    {"experiment": {"kind": "nope"}},
    {"medium": {"eps_r": 0.5}, "experiment": {"kind": "check-regime"}},
    {"shape": {"kind": "sphere"}, "experiment": {"kind": "solve"}},
    {"extra": {}, "experiment": {"kind": "check-regime"}},
])
def test_config_errors_exit_2(tmp_path, raw, capsys):
    assert run(tmp_path, raw) == 2
    assert "config error" in capsys.readouterr().err


def test_born_strong_contrast_exit_4(tmp_path):
    cfg = {"medium": {"eps_r": 8.0}, "shape": {"size": [0.5]}, "grid": {"n": 10},
           "solver": {"method": "born"}, "experiment": {"kind": "solve"}}
    assert run(tmp_path, cfg) == 4
    assert manifest(tmp_path)["error"]["type"] == "NotContractive"


def test_mie_validate_and_baseline(tmp_path):
    base = str(tmp_path / "baseline.json")
    assert run(tmp_path, MIE, extra=["--baseline", base]) == 0
    m = manifest(tmp_path)
    assert m["records"]["mie"]["max_rel_error"] < 0.2
    assert {"mie_diff.csv", "farfield.csv", "mie_reference.csv"} <= set(m["artifacts"])
    assert run(tmp_path, MIE, "again", ["--baseline", base]) == 0
    assert manifest(tmp_path, "again")["baseline"]["problems"] == []
    snap = json.loads(open(base).read())
    entry = snap["files"]["farfield.csv"]
    entry["sha256"] = "0" * 64
    entry["values"][3] += 1.0
    json.dump(snap, open(base, "w"))
    assert run(tmp_path, MIE, "third", ["--baseline", base]) == 5


def test_bound_exceeded_exit_1(tmp_path):
    cfg = json.loads(json.dumps(MIE))
    cfg["experiment"]["bound"] = 1e-6
    assert run(tmp_path, cfg) == 1


def test_runs_are_deterministic(tmp_path):
    cfg = dict(MIE, experiment={"kind": "farfield", "directions": 20})
    assert run(tmp_path, cfg, "a") == 0
    assert run(tmp_path, cfg, "b") == 0
    assert (tmp_path / "a" / "farfield.csv").read_bytes() == (tmp_path / "b" / "farfield.csv").read_bytes()


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"experiment": {"kind": "check-regime"}})
    r = subprocess.run([sys.executable, "-m", "mvie", "--config", cfg, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "exit status 0" in r.stdout


def test_baseline_threads_and_grid_change(tmp_path):
    base = str(tmp_path / "b.json")
    assert run(tmp_path, MIE, "one", ["--baseline", base]) == 0
    assert run(tmp_path, MIE, "two", ["--baseline", base, "--threads", "2"]) == 0
    changed = json.loads(json.dumps(MIE))
    changed["grid"] = {"n": 14}
    assert run(tmp_path, changed, "three", ["--baseline", base]) == 5


def test_manifest_reproduces_run(tmp_path):
    cfg = dict(MIE, experiment={"kind": "farfield", "directions": 20})
    assert run(tmp_path, cfg, "a") == 0
    resolved = manifest(tmp_path, "a")["config"]
    assert run(tmp_path, resolved, "b") == 0
    assert (tmp_path / "a" / "farfield.csv").read_bytes() == (tmp_path / "b" / "farfield.csv").read_bytes()
