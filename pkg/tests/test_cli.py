import json
import subprocess
import sys
from pathlib import Path

import pytest

from melnikovkit import instances
from melnikovkit.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
REF = str(CONFIGS / "reference.toml")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_reference_matches_closed_form(capsys):
    code, out, _ = run(capsys, "eval", REF, "--tau", "0.3", "--I", "0.2", "--phi", "0.05", "--t", "0.1")
    assert code == 0
    doc = json.loads(out)
    assert doc["version"] and len(doc["config_hash"]) == 64
    val = doc["result"]["melnikov_potential"]["value"]
    assert val == pytest.approx(instances.reference_closed_form(0.3, 0.2, 0.05, 0.1), abs=1e-11)


def test_eval_zero_and_general(capsys):
    _, out, _ = run(capsys, "eval", str(CONFIGS / "zero.toml"))
    res = json.loads(out)["result"]
    assert res["melnikov_vector"]["value"] == [0.0] and res["melnikov_potential"]["value"] == 0.0
    _, out, _ = run(capsys, "eval", str(CONFIGS / "dissipative.toml"))
    res = json.loads(out)["result"]
    assert res["melnikov_potential"] is None and "not Hamiltonian" in res["melnikov_potential_reason"]


def test_critical_certificate(capsys):
    code, out, _ = run(capsys, "critical", REF, "--grid", "16", "--max-condition", "1e6")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["rank"] == 1 and res["nondegenerate"]


def test_reduced_reports_h4_margin(capsys):
    code, out, _ = run(capsys, "reduced", REF, "--I-grid", "0.2", "--theta-grid=-0.05,0.05")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["h4_min_dtheta_norm"] == pytest.approx(0.128, abs=2e-3)


def test_additivity_additive_h(capsys, tmp_path):
    cfg = tmp_path / "add.toml"
    text = (CONFIGS / "two_pendulum.toml").read_text().replace("coef = 0.5", "coef = 0.0")
    cfg.write_text(text)
    code, out, _ = run(capsys, "additivity", str(cfg), "--max-gap", "1e-12")
    assert code == 0
    assert all(r["gap"] <= 1e-12 for r in json.loads(out)["result"]["rows"])


def test_sweep_reference_passes_slope(capsys):
    code, out, _ = run(capsys, "sweep", REF, "--tau", "0.3", "--phi", "0.05", "--t", "0.25",
                       "--min-slope", "1.7")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["splitting"]["fit"]["slope"] >= 1.7


def test_threshold_exit_code(capsys):
    code, out, err = run(capsys, "verify-splitting", REF, "--tau", "0.3", "--phi", "0.05",
                         "--min-slope", "5")
    assert code == 4
    assert "threshold failed" in json.loads(out)["status"]


def test_numeric_exit_code(capsys):
    code, _, err = run(capsys, "verify-jump", str(CONFIGS / "zero.toml"))
    assert code == 3 and "numerical failure" in err


def test_parse_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = 1\nunknown = 3\n")
    code, _, err = run(capsys, "eval", str(bad))
    assert code == 2 and "unknown" in err
    with pytest.raises(SystemExit) as exc:
        main(["eval"])
    assert exc.value.code == 2


def test_csv_outputs(capsys, tmp_path):
    out = tmp_path / "sep.csv"
    code, _, _ = run(capsys, "export-separatrix", REF, "--points", "3", "-o", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s,p_1,q_1" and len(lines) == 4
    code, text, _ = run(capsys, "additivity", str(CONFIGS / "two_pendulum.toml"), "--format", "csv")
    assert text.splitlines()[0] == "delta_T,gap"


def test_output_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"o{k}.json"
        subprocess.run([sys.executable, "-m", "melnikovkit.cli", "critical", REF, "-o", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
