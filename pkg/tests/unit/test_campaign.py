"""Tests for campaign runs, measurement files and chain merging."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from fkcorr.campaign import (
    RunManifest,
    compute_manifest_hash,
    merge_chains,
    merge_run,
    read_chain_csv,
    read_estimates,
    read_manifest,
    run_campaign,
    write_chain_csv,
)
from fkcorr.core.exceptions import ConfigurationError, InsufficientDataError
from fkcorr.experiment import load_experiment


if TYPE_CHECKING:
    from pathlib import Path


@pytest.fixture
def series() -> list[tuple[int, dict[str, np.ndarray]]]:
    rng = np.random.default_rng(0)
    return [(c, {"a": rng.random(40), "b": rng.integers(0, 2, 40).astype(float)}) for c in range(3)]


class TestMerging:
    """Tests for pooling chains."""

    def test_permutation_invariant(self, series: list[tuple[int, dict[str, np.ndarray]]]) -> None:
        """Any order of the same chains gives identical records."""
        forward = merge_chains(series, "cfg")
        backward = merge_chains(list(reversed(series)), "cfg")
        shuffled = merge_chains([series[1], series[2], series[0]], "cfg")
        assert forward == backward == shuffled

    def test_pooled_values(self, series: list[tuple[int, dict[str, np.ndarray]]]) -> None:
        records = {r.observable_id: r for r in merge_chains(series, "cfg")}
        pooled = np.concatenate([s["a"] for _, s in series])
        assert records["a"].value == pytest.approx(pooled.mean(), abs=1e-15)
        assert records["a"].n_samples == 120
        assert list(records) == ["a", "b"]

    def test_nothing_to_merge(self) -> None:
        with pytest.raises(InsufficientDataError):
            merge_chains([], "cfg")


class TestFiles:
    """Tests for the CSV and manifest formats."""

    def test_chain_roundtrip(self, temp_dir: Path) -> None:
        data = {"x": np.array([0.1, 1 / 3, 2.0])}
        path = temp_dir / "chain_004.csv"
        write_chain_csv(path, data, "m" * 16, 4, "c" * 16)
        assert path.read_text().startswith("#schema=1 manifest=" + "m" * 16)
        chain, back = read_chain_csv(path)
        assert chain == 4
        np.testing.assert_array_equal(back["x"], data["x"])

    def test_missing_header(self, temp_dir: Path) -> None:
        path = temp_dir / "chain_000.csv"
        path.write_text("sweep_index,observable_id,value\n0,x,1\n")
        with pytest.raises(ConfigurationError, match=":1:"):
            read_chain_csv(path)

    def test_malformed_row(self, temp_dir: Path) -> None:
        path = temp_dir / "chain_000.csv"
        path.write_text("#schema=1 chain=0\nsweep_index,observable_id,value\n0,x,1\n1,x,oops\n")
        with pytest.raises(ConfigurationError, match=":4: malformed"):
            read_chain_csv(path)

    def test_manifest_hash(self) -> None:
        manifest = RunManifest(config_hash="abc", seed=3, code_version="1.0")
        assert manifest.manifest_hash == compute_manifest_hash("abc", 3, "1.0")
        assert manifest.manifest_hash != compute_manifest_hash("abc", 4, "1.0")
        assert RunManifest.from_json(manifest.to_json()) == manifest

    def test_unreadable_manifest(self, temp_dir: Path) -> None:
        with pytest.raises(ConfigurationError, match="manifest"):
            read_manifest(temp_dir)

    def test_missing_estimates(self, temp_dir: Path) -> None:
        with pytest.raises(ConfigurationError, match="cannot read"):
            read_estimates(temp_dir / "estimates.csv")


class TestCampaign:
    """Tests for complete runs."""

    def test_run_directory(self, small_config_file: Path, temp_dir: Path) -> None:
        result = run_campaign(load_experiment(small_config_file), temp_dir / "run", threads=1)
        names = sorted(p.name for p in (temp_dir / "run").iterdir())
        assert names == ["chain_000.csv", "chain_001.csv", "estimates.csv", "manifest.json"]
        assert read_manifest(temp_dir / "run").outputs == sorted(result.manifest.outputs)
        assert read_estimates(temp_dir / "run" / "estimates.csv") == list(result.records)

    def test_trivial_observable(self, small_config_file: Path, temp_dir: Path) -> None:
        """A point is always connected to itself."""
        result = run_campaign(load_experiment(small_config_file), temp_dir / "run", threads=1)
        same = next(r for r in result.records if r.observable_id == "same")
        assert same.value == 1.0
        assert same.stderr == 0.0

    def test_one_arm_ladder(self, small_config_file: Path, temp_dir: Path) -> None:
        """Reaching the larger circle implies reaching the smaller one."""
        result = run_campaign(load_experiment(small_config_file), temp_dir / "run", threads=1)
        records = {r.observable_id: r for r in result.records}
        small, large = records["one_arm@1.5"], records["one_arm@2"]
        assert 0.0 < large.value <= small.value <= 1.0
        assert small.scale == 1.5

    def test_deterministic_across_threads(self, small_config_file: Path, temp_dir: Path) -> None:
        """Chain files depend on config and seed only."""
        config = load_experiment(small_config_file)
        run_campaign(config, temp_dir / "one", threads=1)
        run_campaign(config, temp_dir / "two", threads=2)
        for name in ("chain_000.csv", "chain_001.csv", "estimates.csv"):
            assert (temp_dir / "one" / name).read_bytes() == (temp_dir / "two" / name).read_bytes()

    def test_seed_override(self, small_config_file: Path, temp_dir: Path) -> None:
        config = load_experiment(small_config_file)
        result = run_campaign(config, temp_dir / "run", threads=1, seed=99)
        assert result.manifest.seed == 99
        assert (temp_dir / "run" / "chain_000.csv").read_text() != ""

    def test_merge_run_matches(self, small_config_file: Path, temp_dir: Path) -> None:
        result = run_campaign(load_experiment(small_config_file), temp_dir / "run", threads=2)
        assert merge_run(temp_dir / "run") == list(result.records)
