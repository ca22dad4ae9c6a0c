import csv
import json

import numpy as np
import pytest

from qkd_mismatch.attack import read_sweep_csv
from qkd_mismatch.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main
from qkd_mismatch.detector import load_curves_csv, save_curves_csv


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def test_characterize_deterministic(tmp_path):
    a = main(["characterize", "--seed", "4", "--n-pulses", "2000", "--out", str(tmp_path / "a")])
    b = main(["characterize", "--seed", "4", "--n-pulses", "2000", "--out", str(tmp_path / "b"), "--workers", "2"])
    assert a == b == EXIT_OK
    for name in ("sweep.csv", "sweep_summary.json", "curves.csv", "curves.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_sweep_csv(tmp_path / "a" / "sweep.csv")
    assert len(rows) == 223
    load_curves_csv(tmp_path / "a" / "curves.csv")


def test_seed_required(tmp_path, capsys):
    code, _ = run(tmp_path, "attack")
    assert code == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_missing_curve_file(tmp_path, capsys):
    code, _ = run(tmp_path, "keyrate", "--seed", "1", "--curves-csv", str(tmp_path / "nope.csv"))
    assert code == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_bad_config_values(tmp_path):
    assert run(tmp_path, "attack", "--seed", "1", "--set", "curves.fixture=wobbly")[0] == EXIT_CONFIG
    assert run(tmp_path, "attack", "--seed", "1", "--set", "receiver.visibility=3")[0] == EXIT_CONFIG
    assert run(tmp_path, "attack", "--seed", "1", "--set", "novalue")[0] == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert run(tmp_path, "attack", "-c", str(bad))[0] == EXIT_CONFIG


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2, "receiver": {"mode": "four-state"}}))
    code, out = run(tmp_path, "attack", "-c", str(cfg))
    assert code == EXIT_OK
    assert json.loads((out / "attack.json").read_text())["mode"] == "four-state"
    code, out = run(tmp_path, "attack", "-c", str(cfg), "--mode", "two-state")
    assert json.loads((out / "attack.json").read_text())["mode"] == "two-state"


@pytest.mark.parametrize(
    "mode, fixture, check",
    [
        ("two-state", "severe", lambda i: i > 0.1),
        ("four-state", "severe", lambda i: i < 1e-3),
        ("two-state", "matched", lambda i: i == 0.0),
    ],
)
def test_attack_report(tmp_path, mode, fixture, check):
    code, out = run(tmp_path, "attack", "--seed", "1", "--mode", mode, "--set", f"curves.fixture={fixture}")
    report = json.loads((out / "attack.json").read_text())
    assert code == EXIT_OK
    assert check(report["eve_info_bits"])
    assert {"t1_ps", "t2_ps", "p1", "qber", "bias"} <= set(report)


def test_keyrate_report(tmp_path):
    code, out = run(tmp_path, "keyrate", "--seed", "1")
    assert code == EXIT_OK
    data = json.loads((out / "keyrate.json").read_text())
    reports = data["reports"]
    assert [(r["mode"], r["dt_ps"]) for r in reports] == [
        ("two-state", 4.5),
        ("two-state", 49.5),
        ("four-state", 4.5),
        ("four-state", 49.5),
    ]
    assert abs(reports[0]["rate"] - reports[1]["rate"]) <= 0.005
    assert data["ideal_rate"] == pytest.approx(0.592, abs=1e-3)


def test_keyrate_abort(tmp_path):
    code, _ = run(tmp_path, "keyrate", "--seed", "1", "--set", "keyrate.e_bit_obs=0.2")
    assert code == EXIT_ABORT


def test_keyrate_from_csv(tmp_path, severe):
    path = tmp_path / "measured.csv"
    save_curves_csv(severe, path)
    code, out = run(tmp_path, "keyrate", "--seed", "1", "--curves-csv", str(path))
    assert code == EXIT_OK


def test_sweep_loss(tmp_path):
    code, out = run(tmp_path, "sweep-loss", "--seed", "1")
    assert code == EXIT_OK
    with (out / "loss.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["loss_db", "rate_ideal", "rate_two_state", "rate_four_state"]
    ideal = np.array([float(r["rate_ideal"]) for r in rows])
    four = np.array([float(r["rate_four_state"]) for r in rows])
    assert four[0] / ideal[0] == pytest.approx(0.971, abs=0.005)
    assert np.all(np.diff(four) <= 0)
    code, _ = run(tmp_path, "sweep-loss", "--seed", "1", "--set", "loss.source=pipeline")
    assert code == EXIT_OK


def test_oracle_command(tmp_path):
    code, out = run(tmp_path, "oracle", "--seed", "3", "--set", "oracle.lp_instances=50")
    data = json.loads((out / "oracle.json").read_text())
    assert data["checks"]["lp_vs_vertices"]["passed"]
    assert data["checks"]["click_enumeration"]["passed"]
    assert code == EXIT_OK
