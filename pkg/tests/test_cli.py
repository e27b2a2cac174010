"""End-to-end tests of the command line interface.

Everything here runs tiny configurations; the desk presets themselves are
exercised by the acceptance suite.
"""

import csv
import json
import os

import numpy as np
import pytest

from ctrlmap.cli import (SCHEMAS, load_config, main, significant_below,
                         UsageError)


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_config(tmp_path, section, body):
    path = tmp_path / "run.cfg"
    lines = [f"[{section}]"] + [f"{k} = {v}" for k, v in body.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- synth

def test_synth_scalar_preset_row(capsys):
    code, out, _ = run_cli(capsys, ["synth", "--json"])
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 1
    row = rows[0]
    assert row["status"] == "ok"
    assert row["dare_converged"] in (True, "true")
    # q=0.1 scalar standard constants: P root of p^2 + 0.65 p - 0.1 = 0.
    p = (-0.65 + np.sqrt(0.65 ** 2 + 0.4)) / 2.0
    assert float(row["k_lqr"]) == pytest.approx(-p * 0.5 / (1.0 + p), rel=1e-6)
    assert row["gamma_star"] == pytest.approx(np.sqrt(2.0 / 7.0), rel=1e-3)
    assert float(row["k_inf"]) == pytest.approx(-0.2, abs=5e-4)


def test_synth_empty_task_list_is_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path, "synth", {"q": ""})
    code, _, err = run_cli(capsys, ["synth", "--config", cfg])
    assert code == 2
    assert "empty task list" in err


def test_synth_json_mirrors_csv(tmp_path, capsys):
    cfg = write_config(tmp_path, "synth", {"q": "0.05,0.1"})
    code_c, out_c, _ = run_cli(capsys, ["synth", "--config", cfg])
    code_j, out_j, _ = run_cli(capsys, ["synth", "--config", cfg, "--json"])
    assert code_c == 0 and code_j == 0
    csv_rows = list(csv.DictReader(out_c.splitlines()))
    json_rows = json.loads(out_j)
    assert len(csv_rows) == len(json_rows) == 2
    for crow, jrow in zip(csv_rows, json_rows):
        assert set(crow) == set(jrow)
        for key, cval in crow.items():
            jval = jrow[key]
            if jval is None:
                assert cval == ""
            elif isinstance(jval, bool):
                assert cval == ("true" if jval else "false")
            elif isinstance(jval, (int, float)):
                assert float(cval) == pytest.approx(jval, rel=1e-12)
            else:
                assert cval == str(jval)


def test_synth_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path, "synth", {"quark": "3"})
    code, _, err = run_cli(capsys, ["synth", "--config", cfg])
    assert code == 2
    assert "quark" in err


# ---------------------------------------------------------------- check

def test_check_default_preset_reports_discrepancy_note(capsys):
    # The default check system has norm_a=0.4 with norm_b=0.5, norm_r_inv=1:
    # the norm-based margin condition fails there while the contraction
    # constant stays below one half, and the report should say so.
    code, out, _ = run_cli(capsys, ["check", "--json"])
    assert code == 0
    doc = json.loads(out)
    assert doc["stability_margin"] is False
    assert doc["contraction_below_half"] is True
    assert doc["note"] is not None
    assert doc["commuting"] is True
    assert doc["alpha"] >= 0.9 - 1e-8


def test_check_scalar_alpha_is_one(tmp_path, capsys):
    cfg = write_config(tmp_path, "check", {"kind": "scalar"})
    code, out, _ = run_cli(capsys, ["check", "--config", cfg, "--json"])
    assert code == 0
    doc = json.loads(out)
    assert doc["alpha"] == pytest.approx(1.0, abs=1e-12)
    assert doc["dim"] == 1


def test_check_noncommuting_regularity_not_applicable(tmp_path, capsys):
    cfg = write_config(tmp_path, "check", {"kind": "unconstrained",
                                           "norm_a": "0.3"})
    code, out, _ = run_cli(capsys, ["check", "--config", cfg, "--json"])
    assert code == 0
    doc = json.loads(out)
    assert doc["commuting"] is False
    assert doc["regular"] is None
    code, out, _ = run_cli(capsys, ["check", "--config", cfg])
    assert "regular: not-applicable" in out


# ---------------------------------------------------------------- selftest

def test_selftest_passes(capsys):
    code, out, _ = run_cli(capsys, ["selftest"])
    assert code == 0
    assert "selftest: PASS" in out


# ---------------------------------------------------------------- figure1

FIG1_TINY = {
    "mode": "met",
    "dim": "2",
    "seeds_met": "1",
    "tasks_per_batch_met": "10",
    "norm_a_met": "0.1,0.2",
    "rel_tol_met": "1e-3",
}


def test_figure1_requires_out_dir(tmp_path, capsys):
    cfg = write_config(tmp_path, "figure1", FIG1_TINY)
    code, _, err = run_cli(capsys, ["figure1", "--config", cfg])
    assert code == 2
    assert "out-dir" in err


def test_figure1_csv_schema_and_manifest_rerun(tmp_path, capsys):
    cfg = write_config(tmp_path, "figure1", FIG1_TINY)
    out1 = tmp_path / "first"
    code, _, _ = run_cli(capsys, ["figure1", "--config", cfg,
                                  "--out-dir", str(out1)])
    assert code == 0
    rows = read_csv(out1 / "figure1_met.csv")
    assert rows
    assert set(rows[0]) == {"dim", "normA", "normB", "normRinv", "alpha",
                            "seed", "L_unsafe", "L_safe", "ratio",
                            "lower_coeff", "upper_bound", "tasks_total",
                            "tasks_feasible"}
    for row in rows:
        assert float(row["ratio"]) > 1.0
    assert (out1 / "figure1_met.svg").exists()
    assert (out1 / "manifest.json").exists()

    out2 = tmp_path / "second"
    code, _, _ = run_cli(capsys, ["figure1",
                                  "--manifest", str(out1 / "manifest.json"),
                                  "--out-dir", str(out2)])
    assert code == 0
    for name in ("figure1_met.csv", "figure1_met_summary.csv"):
        assert (out2 / name).read_bytes() == (out1 / name).read_bytes()


def test_figure1_manifest_command_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path, "figure1", FIG1_TINY)
    out1 = tmp_path / "first"
    run_cli(capsys, ["figure1", "--config", cfg, "--out-dir", str(out1)])
    code, _, err = run_cli(capsys, ["table1",
                                    "--manifest", str(out1 / "manifest.json"),
                                    "--out-dir", str(tmp_path / "t")])
    assert code == 2
    assert "manifest" in err


# ---------------------------------------------------------------- table1

TABLE1_TINY = {
    "dim": "2",
    "width": "8",
    "depth": "1",
    "seeds": "2",
    "tasks_infinite": "12",
    "tasks_finite": "9",
    "states_per_task": "3",
    "eval_states_per_task": "2",
    "learning_rate": "1e-3",
    "max_epochs_infinite": "6",
    "max_epochs_finite": "6",
    "eval_every": "3",
    "testbed_gain_min": "0",
    "testbed_gain_max": "0",
}


def run_table1(tmp_path, capsys, extra, subdir):
    body = dict(TABLE1_TINY)
    body.update(extra)
    cfg = write_config(tmp_path, "table1", body)
    out = tmp_path / subdir
    code, _, err = run_cli(capsys, ["table1", "--config", cfg,
                                    "--out-dir", str(out)])
    assert code == 0, err
    return out


def test_table1_infinite_regime_leaves_theta_tr_empty(tmp_path, capsys):
    out = run_table1(tmp_path, capsys, {}, "runs")
    rows = read_csv(out / "table1_runs.csv")
    assert {r["regime"] for r in rows} == {"infinite", "finite"}
    for row in rows:
        if row["regime"] == "infinite":
            assert row["theta_tr_error"] == ""
        else:
            assert row["theta_tr_error"] != ""
        assert row["theta_te_error"] != ""
        assert row["stop_reason"] != ""


def test_table1_equal_teacher_control_not_significant(tmp_path, capsys):
    out = run_table1(tmp_path, capsys, {"equal_teacher_control": "true"},
                     "control")
    runs = read_csv(out / "table1_runs.csv")
    by_key = {(r["regime"], r["teacher"], r["seed"]): r for r in runs}
    for (regime, teacher, seed), row in by_key.items():
        if teacher == "safe":
            twin = by_key[(regime, "unsafe", seed)]
            assert row["train_error"] == twin["train_error"]
            assert row["theta_te_error"] == twin["theta_te_error"]
    summary = read_csv(out / "table1_summary.csv")
    assert summary
    for row in summary:
        assert row["significant"] == "false"


def test_table1_manifest_rerun_is_byte_identical(tmp_path, capsys):
    out1 = run_table1(tmp_path, capsys, {}, "first")
    out2 = tmp_path / "second"
    code, _, _ = run_cli(capsys, ["table1",
                                  "--manifest", str(out1 / "manifest.json"),
                                  "--out-dir", str(out2)])
    assert code == 0
    for name in ("table1_runs.csv", "table1_summary.csv"):
        assert (out2 / name).read_bytes() == (out1 / name).read_bytes()
    doc = json.loads((out1 / "manifest.json").read_text(encoding="utf-8"))
    assert doc["command"] == "table1"
    assert doc["effective_config"]["width"] == 8
    assert doc["outputs"] == ["table1_runs.csv", "table1_summary.csv"]


def test_table1_unknown_regime_is_usage_error(tmp_path, capsys):
    body = dict(TABLE1_TINY)
    body["regimes"] = "infinite,bogus"
    cfg = write_config(tmp_path, "table1", body)
    code, _, err = run_cli(capsys, ["table1", "--config", cfg,
                                    "--out-dir", str(tmp_path / "x")])
    assert code == 2
    assert "bogus" in err


# ---------------------------------------------------------------- helpers

def test_significant_below_rule():
    assert significant_below(1.0, 0.0, 10.0, 0.0)
    assert not significant_below(10.0, 0.0, 1.0, 0.0)
    # Equal means are never significant, whatever the spread.
    assert not significant_below(5.0, 0.0, 5.0, 0.0)
    # The margin is the sum of both standard deviations.
    assert significant_below(1.0, 4.0, 10.0, 4.0)
    assert not significant_below(1.0, 5.0, 10.0, 4.0)


def test_load_config_presets_differ():
    desk = load_config("table1", "desk", None)
    paper = load_config("table1", "paper", None)
    assert desk["width"] < paper["width"]
    assert desk["tasks_infinite"] < paper["tasks_infinite"]
    assert paper["testbed_gain_max"] == 0.0


def test_load_config_missing_file_is_usage_error():
    with pytest.raises(UsageError):
        load_config("synth", "desk", "/nonexistent/path.cfg")
