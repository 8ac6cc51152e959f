"""Tests for experiment configs and their error messages."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING, Any

import pytest

from fkcorr.connectivity import ArmEvent, LinkEvent, OneArmEvent, TwoPointEvent
from fkcorr.core.exceptions import ConfigurationError
from fkcorr.experiment import load_experiment, parse_experiment
from fkcorr.lattice import BoundaryKind
from fkcorr.sampler import P_CRITICAL


if TYPE_CHECKING:
    from pathlib import Path


def dumps(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2)


class TestLoading:
    """Tests for valid configs."""

    def test_minimal(self, configs_dir: Path) -> None:
        config = load_experiment(configs_dir / "minimal.json")
        domain, bc, observables = config.build()
        assert domain.n_vertices == 49
        assert bc.kind is BoundaryKind.FREE
        assert list(observables) == ["center_pair"]
        assert config.model_params().p == pytest.approx(P_CRITICAL)

    def test_ladder_ids(self, configs_dir: Path) -> None:
        """Ladder members are keyed ``<name>@<scale>``."""
        _, _, observables = load_experiment(configs_dir / "ladder.json").build()
        assert {"one_arm@2", "one_arm@4", "one_arm@8", "arm@8", "bulk_pair@4", "links", "magnetization"} <= set(
            observables
        )
        assert isinstance(observables["one_arm@4"], OneArmEvent)
        assert isinstance(observables["arm@2"], ArmEvent)
        assert observables["bulk_pair@2"] == TwoPointEvent((-4, 0), (-2, 0))
        assert isinstance(observables["links"], LinkEvent)
        assert observables["links"].permissive

    def test_boundary_ladder(self, configs_dir: Path) -> None:
        domain, bc, observables = load_experiment(configs_dir / "strip_boundary.json").build()
        assert bc.kind is BoundaryKind.WIRED
        assert (0, 0) in domain.boundary
        assert set(observables) == {"boundary_arm@1.5", "boundary_arm@3", "boundary_arm@6", "boundary_pair@1", "boundary_pair@2"}

    def test_config_hash(self, small_experiment: dict[str, Any]) -> None:
        first = parse_experiment(dumps(small_experiment)).config_hash()
        assert first == parse_experiment(dumps(small_experiment)).config_hash()
        small_experiment["seed"] = 12
        assert first != parse_experiment(dumps(small_experiment)).config_hash()

    def test_explicit_p(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["p"] = 0.5
        assert parse_experiment(dumps(small_experiment)).model_params().p == 0.5


class TestErrors:
    """Tests for rejected configs; messages carry ``path:line:``."""

    def test_missing_domain(self, configs_dir: Path) -> None:
        path = configs_dir / "missing_domain.json"
        with pytest.raises(ConfigurationError) as info:
            load_experiment(path)
        assert str(info.value).startswith(f"{path}:1: domain")

    def test_bad_corners_line(self, configs_dir: Path) -> None:
        path = configs_dir / "bad_corners.json"
        with pytest.raises(ConfigurationError) as info:
            load_experiment(path)
        assert f"{path}:5: domain.corners" in str(info.value)

    def test_invalid_json(self) -> None:
        with pytest.raises(ConfigurationError, match=r"cfg.json:2: invalid JSON"):
            parse_experiment('{\n  "domain": ,\n}', "cfg.json")

    def test_unreadable(self, temp_dir: Path) -> None:
        with pytest.raises(ConfigurationError, match="cannot read config"):
            load_experiment(temp_dir / "absent.json")

    def test_unknown_field(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["temperature"] = 1.0
        with pytest.raises(ConfigurationError, match="temperature"):
            parse_experiment(dumps(small_experiment))

    def test_radii_not_geometric(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"][0]["radii"] = [1, 2, 3]
        with pytest.raises(ConfigurationError, match="geometric"):
            parse_experiment(dumps(small_experiment))

    def test_ladder_margin(self, small_experiment: dict[str, Any]) -> None:
        """Ladders need twice their largest radius around the anchor."""
        small_experiment["observables"][0]["radii"] = [2, 4]
        with pytest.raises(ConfigurationError, match="margin"):
            parse_experiment(dumps(small_experiment))

    def test_empty_discrete_circle(self, small_experiment: dict[str, Any]) -> None:
        """A radius at the mesh leaves no circle and is rejected before sampling."""
        small_experiment["observables"][0]["radii"] = [1, 2]
        with pytest.raises(ConfigurationError, match=r"observables: .*radius 1 is empty at mesh 1"):
            parse_experiment(dumps(small_experiment))

    def test_empty_inner_circle(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"].append(
            {"name": "arm", "kind": "arm", "center": [0, 0], "inner_radius": 1, "radii": [2]}
        )
        with pytest.raises(ConfigurationError, match="radius 1 is empty"):
            parse_experiment(dumps(small_experiment))

    def test_circle_check_follows_mesh(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["domain"]["mesh"] = 0.5
        small_experiment["observables"][0]["radii"] = [1, 2]
        assert parse_experiment(dumps(small_experiment)).domain.mesh == 0.5

    def test_duplicate_names(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"][1]["name"] = "same"
        with pytest.raises(ConfigurationError, match="unique"):
            parse_experiment(dumps(small_experiment))

    def test_too_few_retained_sweeps(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["thinning"] = 4
        with pytest.raises(ConfigurationError, match="n_batches"):
            parse_experiment(dumps(small_experiment))

    def test_arm_inner_radius(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"].append(
            {"name": "arm", "kind": "arm", "center": [0, 0], "inner_radius": 2, "radii": [1, 2]}
        )
        with pytest.raises(ConfigurationError, match="inner_radius"):
            parse_experiment(dumps(small_experiment))

    def test_link_pattern_size(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"].append(
            {"name": "links", "kind": "link", "points": [[0, 0], [1, 0]], "pattern": [[1, 2, 3]]}
        )
        with pytest.raises(ConfigurationError, match="does not cover"):
            parse_experiment(dumps(small_experiment))

    def test_link_pattern_not_a_partition(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"].append(
            {"name": "links", "kind": "link", "points": [[0, 0], [1, 0]], "pattern": [[1], [1]]}
        )
        with pytest.raises(ConfigurationError, match="do not partition"):
            parse_experiment(dumps(small_experiment))

    def test_dobrushin_marks(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["boundary"] = {"kind": "dobrushin", "marked_points": [[-4, -4]]}
        with pytest.raises(ConfigurationError, match="two marked_points"):
            parse_experiment(dumps(small_experiment))

    def test_boundary_observable_inside(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["observables"] = [
            {"name": "edge_arm", "kind": "boundary_one_arm", "points": [[0, 0]], "radii": [1.5]}
        ]
        config = parse_experiment(dumps(small_experiment))
        with pytest.raises(ConfigurationError, match="not a boundary vertex"):
            config.build()

    def test_separation_leaves_domain(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["domain"] = {"shape": "custom", "points": [[0, 0], [1, 0], [2, 0]]}
        small_experiment["boundary"] = {"kind": "free"}
        small_experiment["observables"] = [{"name": "pair", "kind": "two_point", "points": [[0, 0]], "radii": [2, 4]}]
        config = parse_experiment(dumps(small_experiment))
        with pytest.raises(ConfigurationError, match="leaves the domain"):
            config.build()

    def test_custom_needs_points(self, small_experiment: dict[str, Any]) -> None:
        small_experiment["domain"] = {"shape": "custom"}
        with pytest.raises(ConfigurationError, match="points"):
            parse_experiment(dumps(small_experiment))
