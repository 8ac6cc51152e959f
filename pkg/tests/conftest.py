"""Pytest configuration and shared fixtures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from fkcorr.lattice import LatticeDomain, build_box, build_domain


@pytest.fixture
def temp_dir(tmp_path: Path) -> Path:
    """Provide a temporary directory for test output."""
    return tmp_path


@pytest.fixture
def fixtures_dir() -> Path:
    """Provide the path to the fixtures directory."""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def configs_dir(fixtures_dir: Path) -> Path:
    """Provide the path to the experiment configuration fixtures."""
    return fixtures_dir / "configs"


@pytest.fixture
def path_domain() -> LatticeDomain:
    """Four vertices in a row."""
    return build_domain([(0, 0), (1, 0), (2, 0), (3, 0)])


@pytest.fixture
def box_2x2() -> LatticeDomain:
    """A single plaquette."""
    return build_box(1.0, ((0, 0), (1, 1)))


@pytest.fixture
def box_2x3() -> LatticeDomain:
    """Two plaquettes side by side (3 x 2 vertices)."""
    return build_box(1.0, ((0, 0), (2, 1)))


@pytest.fixture
def box_3x3() -> LatticeDomain:
    return build_box(1.0, ((0, 0), (2, 2)))


@pytest.fixture
def l_shape() -> LatticeDomain:
    """Three plaquettes forming an L, ten edges."""
    return build_domain([(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2)])


@pytest.fixture
def small_experiment() -> dict[str, Any]:
    """Minimal valid experiment on an 8 x 8 box."""
    return {
        "name": "small",
        "domain": {"shape": "box", "mesh": 1.0, "corners": [[-4, -4], [4, 4]]},
        "boundary": {"kind": "wired"},
        "observables": [
            {"name": "one_arm", "kind": "one_arm", "points": [[0, 0]], "radii": [1.5, 2]},
            {"name": "pair", "kind": "two_point", "points": [[-1, 0], [1, 0]]},
            {"name": "same", "kind": "two_point", "points": [[0, 0], [0, 0]]},
            {"name": "largest", "kind": "largest_cluster"},
        ],
        "sweeps": 40,
        "burn_in": 5,
        "seed": 11,
        "chains": 2,
    }


@pytest.fixture
def small_config_file(temp_dir: Path, small_experiment: dict[str, Any]) -> Path:
    path = temp_dir / "small.json"
    path.write_text(json.dumps(small_experiment, indent=2))
    return path
