"""End-to-end tests of the ``fkcorr`` command line."""

from __future__ import annotations

import csv
import io
import json
from typing import TYPE_CHECKING

import pytest
from click.testing import CliRunner

from fkcorr import __version__
from fkcorr.campaign import write_estimates
from fkcorr.cli import main
from fkcorr.estimator import EstimateRecord


if TYPE_CHECKING:
    from pathlib import Path


pytestmark = pytest.mark.integration


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def ladder_estimates(temp_dir: Path) -> Path:
    records = [
        EstimateRecord(f"one_arm@{s}", s**-0.125, 1e-3 * s**-0.125, 1000, 1.0, "cfg") for s in (8, 16, 32, 64)
    ]
    records.append(EstimateRecord("largest_cluster", 30.0, 0.5, 1000, 2.0, "cfg"))
    path = temp_dir / "estimates.csv"
    write_estimates(path, records, "m" * 16)
    return path


class TestVerify:
    """Tests for ``fkcorr verify``."""

    def test_version(self, runner: CliRunner) -> None:
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_pfaffian_suite(self, runner: CliRunner, temp_dir: Path) -> None:
        out = temp_dir / "pfaffian.json"
        result = runner.invoke(main, ["verify", "pfaffian", "--json-out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert doc["suite"] == "pfaffian"
        assert doc["passed"]
        assert doc["max_residual"] < 1e-10

    @pytest.mark.slow
    def test_continuum_suite(self, runner: CliRunner, temp_dir: Path) -> None:
        out = temp_dir / "continuum.json"
        result = runner.invoke(main, ["verify", "continuum", "--json-out", str(out)])
        assert result.exit_code == 0, result.output
        doc = json.loads(out.read_text())
        assert {r["name"] for r in doc["reports"]} == {"covariance", "bpz", "closed-forms"}
        rn_two = [
            row for row in doc["tables"]["bpz_readings"] if row["family"] == "mixed_RN" and row["N"] == 2
        ]
        assert len(rn_two) == 2
        assert all("annihilated_by" in row for row in rn_two)

    def test_unknown_suite(self, runner: CliRunner) -> None:
        result = runner.invoke(main, ["verify", "nonsense"])
        assert result.exit_code == 2


class TestSampling:
    """Tests for ``fkcorr sample`` and ``fkcorr report``."""

    def test_sample_and_report(self, runner: CliRunner, small_config_file: Path, temp_dir: Path) -> None:
        run_dir = temp_dir / "run"
        result = runner.invoke(
            main, ["sample", "--config", str(small_config_file), "--out", str(run_dir), "--threads", "1"]
        )
        assert result.exit_code == 0, result.output
        assert (run_dir / "estimates.csv").exists()
        assert json.loads((run_dir / "manifest.json").read_text())["seed"] == 11

        shown = runner.invoke(main, ["report", str(run_dir)])
        assert shown.exit_code == 0, shown.output
        assert "largest" in shown.output

    def test_rerun_is_identical(self, runner: CliRunner, small_config_file: Path, temp_dir: Path) -> None:
        """Same config and seed give byte-identical measurement files."""
        for name in ("a", "b"):
            args = ["sample", "--config", str(small_config_file), "--out", str(temp_dir / name), "--seed", "21"]
            assert runner.invoke(main, args).exit_code == 0
        for name in ("chain_000.csv", "chain_001.csv", "estimates.csv"):
            assert (temp_dir / "a" / name).read_bytes() == (temp_dir / "b" / name).read_bytes()

    def test_bad_config(self, runner: CliRunner, configs_dir: Path, temp_dir: Path) -> None:
        result = runner.invoke(
            main, ["sample", "--config", str(configs_dir / "missing_domain.json"), "--out", str(temp_dir)]
        )
        assert result.exit_code == 2
        assert "missing_domain.json:1:" in result.output


class TestFit:
    """Tests for ``fkcorr fit``."""

    def test_fit_families(self, runner: CliRunner, ladder_estimates: Path) -> None:
        result = runner.invoke(main, ["fit", str(ladder_estimates)])
        assert result.exit_code == 0, result.output
        doc = json.loads(ladder_estimates.with_name("fits.json").read_text())
        assert [f["family"] for f in doc["fits"]] == ["one_arm"]
        assert doc["fits"][0]["slope"] == pytest.approx(-0.125, abs=1e-9)

    def test_fit_spec(self, runner: CliRunner, ladder_estimates: Path, temp_dir: Path) -> None:
        spec = temp_dir / "fit.json"
        spec.write_text(json.dumps({"families": ["one_arm"], "min_scale": 16}))
        out = temp_dir / "out.json"
        result = runner.invoke(main, ["fit", str(ladder_estimates), "--spec", str(spec), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["fits"][0]["window"] == [16.0, 64.0]

    def test_malformed_estimates(self, runner: CliRunner, temp_dir: Path) -> None:
        path = temp_dir / "estimates.csv"
        path.write_text("observable_id,value\none_arm@8,0.5\n")
        result = runner.invoke(main, ["fit", str(path)])
        assert result.exit_code == 2

    def test_too_few_scales(self, runner: CliRunner, ladder_estimates: Path) -> None:
        result = runner.invoke(main, ["fit", str(ladder_estimates), "--min-scale", "32"])
        assert result.exit_code == 2


class TestContinuum:
    """Tests for ``fkcorr continuum``."""

    def test_two_point(self, runner: CliRunner) -> None:
        result = runner.invoke(main, ["continuum", "--family", "boundary_R2", "--points", "0,2", "--maps", "5"])
        assert result.exit_code == 0, result.output
        row = next(csv.DictReader(io.StringIO(result.output[result.output.index("formula") :])))
        assert float(row["value"]) == pytest.approx(0.5)
        assert float(row["covariance_residual"]) < 1e-10
        assert float(row["bpz_residual"]) < 1e-6

    def test_unordered_points(self, runner: CliRunner) -> None:
        result = runner.invoke(main, ["continuum", "--family", "mixed_RN", "--points", "0,2,1"])
        assert result.exit_code == 2

    def test_unknown_family(self, runner: CliRunner) -> None:
        result = runner.invoke(main, ["continuum", "--family", "boundary_R9", "--points", "0,1"])
        assert result.exit_code == 2
