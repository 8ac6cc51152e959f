"""Tests for interface tracing and the Dobrushin observable."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from fkcorr.exact.enumeration import AuditReport
from fkcorr.exact.interfaces import (
    ONE_ARM_FACTOR,
    boundary_one_arm_identity,
    dobrushin_bc,
    fermionic_observable_dobrushin,
    free_arc_vertices,
    nu,
    trace_interfaces,
)
from fkcorr.lattice import BoundaryKind, build_dobrushin


if TYPE_CHECKING:
    from fkcorr.lattice import DobrushinDomain, LatticeDomain


@pytest.fixture
def dob_2x2(box_2x2: LatticeDomain) -> DobrushinDomain:
    return build_dobrushin(box_2x2, (1, 0), (1, 1))


@pytest.fixture
def dob_3x3(box_3x3: LatticeDomain) -> DobrushinDomain:
    return build_dobrushin(box_3x3, (2, 0), (2, 2))


class TestTracing:
    """Tests for the interface and loop decomposition."""

    @pytest.mark.parametrize("fill", [False, True])
    def test_partition(self, dob_3x3: DobrushinDomain, fill: bool) -> None:
        """Interface and loops cover every traced medial edge once."""
        bonds = np.full(dob_3x3.base.n_edges, fill, dtype=np.bool_)
        trace = trace_interfaces(bonds, dob_3x3)
        assert trace.gamma[0] == dob_3x3.e1
        assert trace.gamma[-1] == dob_3x3.e2
        pieces = list(trace.gamma) + [e for loop in trace.loops for e in loop]
        assert len(pieces) == len(set(pieces)) == len(dob_3x3.traced_edges)

    def test_winding_steps(self, dob_2x2: DobrushinDomain) -> None:
        """Every medial step turns by one quarter."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            trace = trace_interfaces(rng.random(dob_2x2.base.n_edges) < 0.5, dob_2x2)
            assert trace.winding[0] == 0
            steps = np.diff(trace.winding)
            assert set(np.abs(steps).tolist()) <= {1}
            assert trace.winding_map()[dob_2x2.e1] == 0
            assert dob_2x2.e2 in trace

    def test_boundary_spec(self, dob_3x3: DobrushinDomain) -> None:
        bc = dobrushin_bc(dob_3x3)
        assert bc.kind is BoundaryKind.DOBRUSHIN
        assert bc.marked_points == ((2, 0), (2, 2))


class TestObservable:
    """Tests for the fermionic observable under Dobrushin conditions."""

    def test_nu_branch(self) -> None:
        assert nu(1.0) == pytest.approx(1.0)
        assert nu(1j) ** 2 == pytest.approx(-1j)
        assert abs(nu(-2.0 - 2.0j)) == pytest.approx(1.0)

    def test_anchor_has_nonnegative_real_part(self, dob_2x2: DobrushinDomain) -> None:
        field = fermionic_observable_dobrushin(dob_2x2)
        assert field.sign_anchor is not None
        assert field.vertex_values[field.sign_anchor].real >= 0.0
        assert field.partition_function > 0

    @pytest.mark.parametrize("name", ["dob_2x2", "dob_3x3"])
    def test_one_arm_identity(self, name: str, request: pytest.FixtureRequest) -> None:
        """The modulus on the free arc tracks the connection probability."""
        dob = request.getfixturevalue(name)
        report = boundary_one_arm_identity(dob, tolerance=1e-10)
        assert report.passed, report.to_json()
        assert len(report.rows) == len(free_arc_vertices(dob))
        for row in report.rows:
            assert row["event_violations"] == 0
            assert row["distinct_windings"] == 1
            assert 0.0 < row["probability"] <= 1.0

    def test_factor(self) -> None:
        assert pytest.approx(2.6131259, abs=1e-7) == ONE_ARM_FACTOR

    @pytest.mark.parametrize("name", ["dob_2x2", "dob_3x3"])
    def test_corner_counted_once(self, name: str, request: pytest.FixtureRequest) -> None:
        """A corner vertex with two free-arc midpoints gets one probability."""
        dob = request.getfixturevalue(name)
        report = boundary_one_arm_identity(dob)
        by_vertex: dict[str, set[float]] = {}
        for row in report.rows:
            assert 0.0 <= row["probability"] <= 1.0
            owner = row["case"].split(" at ")[0]
            by_vertex.setdefault(owner, set()).add(round(row["probability"], 12))
        assert all(len(values) == 1 for values in by_vertex.values())
        assert len(by_vertex) < len(report.rows)


class TestAuditReport:
    """Tests for the pass rule of exact audits."""

    def test_event_violation_fails(self) -> None:
        report = AuditReport("observable", 1e-10)
        report.add("u", 1.0, 1.0, event_violations=0)
        assert report.passed
        report.add("v", 0.5, 0.5, event_violations=3)
        assert report.max_residual == 0.0
        assert report.violations == 3
        assert not report.passed
        assert report.to_json()["violations"] == 3
