import csv
import json
import xml.etree.ElementTree as ET

import pytest

from limits_sd.augment import load_preset
from limits_sd.cli import (
    EXIT_OK, EXIT_RUNTIME, EXIT_TOLERANCE, EXIT_VALIDATION, main,
)
from limits_sd.world3 import CORPUS_SHA256, corpus_path


GOOD_MODEL = """
model "demo" version "0.1.0"
const rate = 0.1
stock level init 100 inflow 0 outflow level * rate
"""


@pytest.fixture()
def model_file(tmp_path):
    path = tmp_path / "demo.sdm"
    path.write_text(GOOD_MODEL)
    return path


class TestValidate:
    def test_bundled_corpus_validates(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "validate", str(corpus_path())])
        assert rc == EXIT_OK
        assert "ok:" in capsys.readouterr().out

    def test_good_model_quiet(self, tmp_path, model_file, capsys):
        rc = main(["--out", str(tmp_path), "--quiet", "validate", str(model_file)])
        assert rc == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_syntax_error_exit_1_with_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.sdm"
        bad.write_text('model "m" version "0.1.0"\naux a = 1 +\n')
        rc = main(["--out", str(tmp_path), "validate", str(bad)])
        assert rc == EXIT_VALIDATION
        err = capsys.readouterr().err
        assert f"{bad}:2:" in err

    def test_semantic_error_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.sdm"
        bad.write_text('model "m" version "0.1.0"\naux a = ghost\n')
        rc = main(["--out", str(tmp_path), "validate", str(bad)])
        assert rc == EXIT_VALIDATION
        assert "ghost" in capsys.readouterr().err

    def test_missing_file_exit_1(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "validate", str(tmp_path / "nope.sdm")])
        assert rc == EXIT_VALIDATION


class TestRun:
    def test_bau_writes_csv_warnings_manifest(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "--quiet", "run", "bau"])
        assert rc == EXIT_OK
        with open(tmp_path / "bau.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "time"
        assert "persistent_pollution" in rows[0]
        assert len(rows) == 402  # header + 401 samples
        assert rows[1][0] == "1900.0" and rows[-1][0] == "2100.0"
        assert (tmp_path / "bau.warnings.log").exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["corpus_sha256"] == CORPUS_SHA256
        assert manifest["config"]["dt"] == 0.5
        assert manifest["samples"] == 401

    def test_custom_grid(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--quiet", "run", "bau",
                   "--from", "2000", "--to", "2050", "--dt", "0.25"])
        assert rc == EXIT_OK
        with open(tmp_path / "bau.csv") as fh:
            assert sum(1 for _ in fh) == 202

    def test_unknown_scenario_exit_2(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "run", "warp_speed"])
        assert rc == EXIT_RUNTIME
        assert "warp_speed" in capsys.readouterr().err

    def test_seed_corpus_run(self, tmp_path, model_file):
        rc = main(["--out", str(tmp_path), "--quiet",
                   "--seed-corpus", str(model_file), "run", "bau"])
        assert rc == EXIT_OK
        with open(tmp_path / "bau.csv") as fh:
            header = fh.readline().strip().split(",")
        assert header == ["time", "level", "rate"]

    def test_runs_are_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["--out", str(a), "--quiet", "run", "bau"]) == EXIT_OK
        assert main(["--out", str(b), "--quiet", "run", "bau"]) == EXIT_OK
        assert (a / "bau.csv").read_bytes() == (b / "bau.csv").read_bytes()


class TestCompare:
    def test_reflexive_compare(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--quiet", "compare", "bau", "bau",
                   "--window", "2020:2070"])
        assert rc == EXIT_OK
        with open(tmp_path / "compare_bau_vs_bau.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["year"] for r in rows] == ["2020", "2040", "2060", "2080", "2100"]
        assert all(float(r["pct_delta"]) == 0.0 for r in rows)
        summary = (tmp_path / "summary.txt").read_text()
        assert "residue delta 2100: 0.00%" in summary
        assert "cumulative overshoot 2020:2070: 0.00%" in summary

    def test_charts_are_valid_svg(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--quiet", "compare",
                   "bau", "ai_augmented"])
        assert rc == EXIT_OK
        for name in ("persistent_pollution.svg",
                     "human_ecological_footprint.svg"):
            root = ET.parse(tmp_path / name).getroot()
            assert root.tag.endswith("svg")

    def test_bad_window_exit_2(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "compare", "bau", "bau",
                   "--window", "oops"])
        assert rc == EXIT_RUNTIME
        assert "--window" in capsys.readouterr().err

    def test_unknown_variable_exit_2(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "compare", "bau", "bau",
                   "--var", "phlogiston"])
        assert rc == EXIT_RUNTIME


class TestCalibrate:
    def test_zero_budget_exit_tolerance(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "--quiet", "calibrate",
                   "--budget", "0"])
        assert rc == EXIT_TOLERANCE
        assert (tmp_path / "ai-params.preset").exists()
        assert (tmp_path / "calibration-report.txt").exists()

    def test_small_budget_writes_loadable_preset(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--quiet", "calibrate",
                   "--budget", "30", "--tol", "1000"])
        assert rc == EXIT_OK
        p = load_preset(tmp_path / "ai-params.preset")
        assert 0.0 <= p.fioai <= 1.0

    def test_custom_targets_file(self, tmp_path):
        targets = tmp_path / "targets.txt"
        targets.write_text("# two points\n2050 = 5.0\n2100 = 10.0\n")
        rc = main(["--out", str(tmp_path), "--quiet", "calibrate",
                   "--targets", str(targets), "--budget", "30",
                   "--tol", "1000"])
        assert rc == EXIT_OK
        report = (tmp_path / "calibration-report.txt").read_text()
        assert "2050" in report and "2100" in report

    def test_bad_targets_file_exit_1(self, tmp_path, capsys):
        targets = tmp_path / "targets.txt"
        targets.write_text("2050 ~ 5.0\n")
        rc = main(["--out", str(tmp_path), "calibrate",
                   "--targets", str(targets)])
        assert rc == EXIT_VALIDATION
