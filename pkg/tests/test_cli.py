"""Command-line surface: subcommand behavior, exit codes, artifact layout.

The CLI is a scripting contract: stable exit codes, one machine-parsable
``active-ht: <kind>: <message>`` line on stderr per failure, result CSVs that
open with a ``# manifest=<id>`` comment, and manifests whose id excludes
timestamps and thread counts so reruns reproduce artifacts byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import shutil
import subprocess

import numpy as np
import pytest
from numpy.testing import assert_allclose

from active_ht.cli import main
from active_ht.model import FiniteKernel, ObservationModel, save_model

from conftest import make_garbled_model, make_two_probe_model

MAXMIN_TP = 0.6506724213610958


# ---------------------------------------------------------------------------
# fixtures: model files on disk


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    save_model(make_two_probe_model(), d / "two_probe.json")
    save_model(make_garbled_model(), d / "garbled.json")
    twin = ObservationModel(
        kernel=FiniteKernel([[[0.5, 0.5]], [[0.5, 0.5]]]),
        prior=[0.5, 0.5],
        penalty=10.0,
    )
    save_model(twin, d / "twins.json")
    (d / "bad.json").write_text(
        json.dumps(
            {
                "kernel": {"type": "finite", "probs": [[[0.7, 0.2]], [[0.5, 0.5]]]},
                "prior": [0.5, 0.5],
                "penalty": 10.0,
            }
        )
    )
    return d


@pytest.fixture(scope="module")
def two_probe_path(model_dir):
    return str(model_dir / "two_probe.json")


def read_manifest(prefix):
    with open(f"{prefix}.manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def read_csv(path):
    """(manifest_id, header, rows) from a result table."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        assert first.startswith("# manifest=")
        rows = list(csv.reader(fh))
    return first.removeprefix("# manifest="), rows[0], rows[1:]


# ---------------------------------------------------------------------------
# validate


class TestValidate:
    def test_ok_model(self, two_probe_path, capsys):
        assert main(["validate", two_probe_path]) == 0
        out = capsys.readouterr().out
        assert "M=2 K=2 kernel=finite L=1000" in out
        assert "distinguishable: true" in out
        assert "likelihood_ratio_bound: 6" in out
        assert "usable_for_bounds: true" in out

    def test_indistinguishable_pair_fails(self, model_dir, capsys):
        assert main(["validate", str(model_dir / "twins.json")]) == 2
        captured = capsys.readouterr()
        assert "indistinguishable_pairs: (0, 1)" in captured.out
        assert captured.err.startswith(
            "active-ht: validation: indistinguishable hypothesis pairs: (0, 1)"
        )

    def test_missing_file(self, capsys):
        assert main(["validate", "/no/such/model.json"]) == 2
        assert capsys.readouterr().err.startswith(
            "active-ht: validation: cannot read model file:"
        )

    def test_malformed_model_file(self, model_dir, capsys):
        assert main(["validate", str(model_dir / "bad.json")]) == 2
        assert capsys.readouterr().err.startswith("active-ht: validation:")


# ---------------------------------------------------------------------------
# bounds


class TestBounds:
    def test_stdout_is_json_report(self, two_probe_path, capsys):
        assert main(["bounds", two_probe_path]) == 0
        data = json.loads(capsys.readouterr().out)
        assert_allclose(data["maxmin_r"], MAXMIN_TP, rtol=1e-9)
        assert_allclose(data["bounds"]["sn_upper"], math.log(1000.0) / MAXMIN_TP, rtol=1e-9)
        assert data["gains"]["zero_adaptivity"] is False

    def test_artifacts_and_manifest_id(self, two_probe_path, tmp_path, capsys):
        prefix = str(tmp_path / "b")
        assert main(["bounds", two_probe_path, "--out", prefix]) == 0
        capsys.readouterr()
        manifest = read_manifest(prefix)
        mid, header, rows = read_csv(f"{prefix}.csv")
        assert mid == manifest["manifest_id"]
        assert header[:2] == ["name", "value"]
        names = [r[0] for r in rows]
        assert {"d_hat", "maxmin_r", "r_bar_star", "sn_upper"} <= set(names)
        # The id commits to the run inputs but never to timestamps/threads.
        core = {
            k: v
            for k, v in manifest.items()
            if k not in ("manifest_id", "created_utc", "threads")
        }
        canon = json.dumps(core, sort_keys=True, separators=(",", ":"))
        assert manifest["manifest_id"] == hashlib.sha256(canon.encode()).hexdigest()
        assert manifest["command"] == "bounds"
        assert manifest["solver_settings"]["theta_stratification"] == "prior_quota"
        with open(two_probe_path, "rb") as fh:
            assert manifest["model_digest"] == hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------------------
# simulate


class TestSimulate:
    ARGS = ["--policy", "fixed", "--lambda", "0.5,0.5", "--n", "6",
            "--trials", "2000", "--seed", "7"]

    def test_summary_line_and_artifacts(self, two_probe_path, tmp_path, capsys):
        prefix = str(tmp_path / "s")
        assert main(["simulate", two_probe_path, *self.ARGS, "--out", prefix]) == 0
        out = capsys.readouterr().out
        assert out.startswith("trials=2000 mean_tau=6 ")
        mid, header, rows = read_csv(f"{prefix}.csv")
        assert header == [
            "n_trials", "mean_tau", "se_tau", "pe", "se_pe", "cost", "se_cost",
            "n_wrong", "n_truncated", "L", "seed",
        ]
        (row,) = rows
        assert row[0] == "2000" and row[1] == "6" and row[-1] == "7"
        # cost identity at the printed precision
        assert_allclose(float(row[5]), 6.0 + 1000.0 * float(row[3]), rtol=1e-8)
        assert mid == read_manifest(prefix)["manifest_id"]

    def test_rerun_is_byte_identical(self, two_probe_path, tmp_path, capsys):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["simulate", two_probe_path, *self.ARGS, "--threads", "1", "--out", a]) == 0
        assert main(["simulate", two_probe_path, *self.ARGS, "--threads", "3", "--out", b]) == 0
        capsys.readouterr()
        with open(f"{a}.csv", "rb") as fa, open(f"{b}.csv", "rb") as fb:
            assert fa.read() == fb.read()
        ma, mb = read_manifest(a), read_manifest(b)
        assert ma["manifest_id"] == mb["manifest_id"]
        assert ma["threads"] == 1 and mb["threads"] == 3

    def test_record_trials_table(self, two_probe_path, tmp_path, capsys):
        prefix = str(tmp_path / "t")
        args = ["simulate", two_probe_path, "--policy", "fixed", "--lambda", "1.0,0.0",
                "--n", "3", "--trials", "50", "--seed", "3", "--record-trials",
                "--out", prefix]
        assert main(args) == 0
        capsys.readouterr()
        _, header, rows = read_csv(f"{prefix}_trials.csv")
        assert header == ["index", "theta", "tau", "declared", "correct",
                          "posterior_error", "truncated"]
        assert len(rows) == 50
        assert [r[0] for r in rows] == [str(i) for i in range(50)]
        assert all(r[2] == "3" for r in rows)

    @pytest.mark.parametrize(
        "extra",
        [
            ["--policy", "fixed", "--trials", "10", "--seed", "1"],
            ["--policy", "fixed", "--lambda", "0.5,0.5", "--trials", "10", "--seed", "1"],
            ["--policy", "fixed", "--lambda", "0.5,0.5", "--n", "4",
             "--threshold", "0.9", "--trials", "10", "--seed", "1"],
            ["--policy", "fixed", "--lambda", "0.2,0.2", "--n", "4",
             "--trials", "10", "--seed", "1"],
            ["--policy", "fixed", "--lambda", "1.0", "--n", "4",
             "--trials", "10", "--seed", "1"],
            ["--policy", "fixed", "--lambda", "0.5,0.5", "--n", "-2",
             "--trials", "10", "--seed", "1"],
        ],
        ids=["no-rule", "no-stop-mode", "both-stop-modes", "rule-off-simplex",
             "rule-wrong-length", "negative-n"],
    )
    def test_usage_errors(self, two_probe_path, extra, capsys):
        assert main(["simulate", two_probe_path, *extra]) == 4
        assert capsys.readouterr().err.startswith("active-ht: usage:")

    def test_unknown_flag(self, two_probe_path, capsys):
        assert main(["simulate", two_probe_path, "--bogus", "1"]) == 4
        assert capsys.readouterr().err.startswith("active-ht: usage:")


# ---------------------------------------------------------------------------
# sweep / exponents


class TestSweep:
    def test_fixed_rule_sweep_table(self, two_probe_path, tmp_path, capsys):
        prefix = str(tmp_path / "w")
        args = ["sweep", two_probe_path, "--policy", "fixed", "--lambda", "0.5,0.5",
                "--n", "6", "--L", "100,1000", "--trials", "1500", "--seed", "5",
                "--out", prefix]
        assert main(args) == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert out_lines[0].startswith("L=100 ") and out_lines[1].startswith("L=1000 ")
        _, header, rows = read_csv(f"{prefix}.csv")
        assert header == ["L", "logL", "mean_tau", "se_tau", "pe", "se_pe",
                          "cost", "cost_over_logL"]
        assert [r[0] for r in rows] == ["100", "1000"]
        for r in rows:
            L, logL = float(r[0]), float(r[1])
            assert_allclose(logL, math.log(L), rtol=1e-8)
            assert_allclose(float(r[6]), float(r[2]) + L * float(r[4]), rtol=1e-7)
            assert_allclose(float(r[7]), float(r[6]) / logL, rtol=1e-7)

    def test_rerun_is_byte_identical(self, two_probe_path, tmp_path, capsys):
        args = ["sweep", two_probe_path, "--policy", "sn", "--L", "50,500",
                "--trials", "800", "--seed", "9"]
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main([*args, "--out", a]) == 0
        assert main([*args, "--out", b]) == 0
        capsys.readouterr()
        with open(f"{a}.csv", "rb") as fa, open(f"{b}.csv", "rb") as fb:
            assert fa.read() == fb.read()


class TestExponents:
    def test_fixed_rule_slope(self, two_probe_path, tmp_path, capsys):
        prefix = str(tmp_path / "e")
        args = ["exponents", two_probe_path, "--policy", "fixed",
                "--lambda", "0.5,0.5", "--budgets", "4,8", "--trials", "4000",
                "--seed", "13", "--out", prefix]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert out.startswith("policy=fixed slope=")
        assert "lower_bound_only: false" in out.replace("=", ": ")
        _, header, rows = read_csv(f"{prefix}.csv")
        assert header == ["budget", "L", "mean_tau", "pe", "n_errors", "clean",
                          "neg_log_pe", "tuned"]
        assert [r[0] for r in rows] == ["4", "8"]
        # fixed-rule runs have no tuned penalty column
        assert all(r[1] == "nan" for r in rows)
        slope = float(out.split("slope=")[1].split()[0])
        assert slope > 0.0


# ---------------------------------------------------------------------------
# gains / binary


class TestGainsAndBinary:
    def test_gains_reports_dominating_action(self, model_dir, capsys):
        assert main(["gains", str(model_dir / "garbled.json")]) == 0
        out = capsys.readouterr().out
        assert "zero_adaptivity: true" in out
        assert "dominating_action: 0" in out

    def test_gains_without_dominance(self, two_probe_path, capsys):
        assert main(["gains", two_probe_path]) == 0
        out = capsys.readouterr().out
        assert "zero_adaptivity: false" in out
        assert "dominating_action: none" in out

    def test_binary_closed_forms(self, two_probe_path, capsys):
        assert main(["binary", two_probe_path]) == 0
        out = capsys.readouterr().out
        assert "logarithmic adaptivity gain: true" in out
        assert "best_reliability_1:" in out and "at actions [1]" in out

    def test_binary_rejects_three_hypotheses(self, model_dir, capsys):
        assert main(["binary", str(model_dir / "garbled.json")]) == 4
        assert capsys.readouterr().err.startswith(
            "active-ht: usage: binary subcommand requires M == 2"
        )


# ---------------------------------------------------------------------------
# oracle-check


class TestOracleCheck:
    def test_agreement_suite_passes(self, two_probe_path, capsys):
        args = ["oracle-check", two_probe_path, "--horizon", "5",
                "--trials", "20000", "--seed", "11", "--threads", "2"]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "agreement: true" in out
        assert "backward_dp:" in out and "mass_residual_max:" in out

    def test_node_budget_exit_code(self, two_probe_path, capsys):
        args = ["oracle-check", two_probe_path, "--horizon", "8",
                "--trials", "10", "--nodes", "50"]
        assert main(args) == 3
        assert capsys.readouterr().err.startswith("active-ht: budget:")

    def test_gaussian_model_rejected(self, tmp_path, capsys):
        from conftest import make_gaussian_binary_model

        path = tmp_path / "gauss.json"
        save_model(make_gaussian_binary_model(), path)
        assert main(["oracle-check", str(path), "--horizon", "4"]) == 4
        assert capsys.readouterr().err.startswith("active-ht: usage:")


# ---------------------------------------------------------------------------
# console script packaging


def test_console_script_entry_point(two_probe_path):
    exe = shutil.which("active-ht")
    assert exe is not None, "console script not installed"
    proc = subprocess.run(
        [exe, "validate", two_probe_path], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    assert "usable_for_bounds: true" in proc.stdout
