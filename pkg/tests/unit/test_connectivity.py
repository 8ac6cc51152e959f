"""Tests for cluster labelling and connection events."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from fkcorr.connectivity import (
    ArmEvent,
    BoundaryConnectionEvent,
    EdgeOpenEvent,
    EvenClusterEvent,
    InnerCrossingEvent,
    LargestClusterObservable,
    LinkEvent,
    OneArmEvent,
    SpinProductObservable,
    TwoPointEvent,
    arm_event,
    boundary_connection,
    check_link_event,
    descriptor_hash,
    label_bonds,
    largest_cluster_size,
    one_arm_event,
)
from fkcorr.core.exceptions import ConfigurationError, InvalidPointError, UndefinedEventError
from fkcorr.lattice import BoundarySpec, build_box, build_model_graph
from fkcorr.patterns import LinkPattern


if TYPE_CHECKING:
    from fkcorr.lattice import LatticeDomain, ModelGraph


def open_edges(graph: ModelGraph, pairs: list[tuple[tuple[int, int], tuple[int, int]]]) -> np.ndarray:
    bonds = np.zeros(graph.n_edges, dtype=np.bool_)
    for u, v in pairs:
        bonds[graph.domain.edge_id(u, v)] = True
    return bonds


@pytest.fixture
def box_7x7() -> LatticeDomain:
    return build_box(1.0, ((-3, -3), (3, 3)))


class TestLabelling:
    """Tests for union-find labels."""

    def test_all_closed_free(self, box_2x3: LatticeDomain) -> None:
        """Every vertex is its own cluster."""
        graph = build_model_graph(box_2x3)
        labeling = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        assert labeling.cluster_count == 6
        assert largest_cluster_size(labeling) == 1

    def test_labels_are_least_index(self, box_2x3: LatticeDomain) -> None:
        graph = build_model_graph(box_2x3)
        labeling = label_bonds(graph, open_edges(graph, [((0, 0), (1, 0)), ((1, 0), (2, 0))]))
        assert labeling.label_of((2, 0)) == labeling.label_of((0, 0)) == 0
        assert labeling.cluster_count == 4
        assert largest_cluster_size(labeling) == 3

    def test_wired_boundary_is_one_cluster(self, box_3x3: LatticeDomain) -> None:
        """Fused arcs connect without open edges."""
        graph = build_model_graph(box_3x3, BoundarySpec.wired(box_3x3))
        labeling = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        assert len(set(labeling.labels_at(sorted(box_3x3.boundary)))) == 1
        assert labeling.cluster_count == 2
        assert largest_cluster_size(labeling) == 8

    def test_wrong_shape(self, box_2x2: LatticeDomain) -> None:
        graph = build_model_graph(box_2x2)
        with pytest.raises(ConfigurationError):
            label_bonds(graph, np.zeros(3, dtype=np.bool_))

    def test_unknown_point(self, box_2x2: LatticeDomain) -> None:
        graph = build_model_graph(box_2x2)
        labeling = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        with pytest.raises(InvalidPointError):
            labeling.label_of((4, 4))


class TestLinkEvents:
    """Tests for connection-pattern events."""

    def test_exact_pattern(self, box_2x3: LatticeDomain) -> None:
        graph = build_model_graph(box_2x3)
        labeling = label_bonds(graph, open_edges(graph, [((0, 0), (1, 0))]))
        points = [(0, 0), (1, 0), (2, 1)]
        assert check_link_event(labeling, points, LinkPattern.from_blocks([[1, 2], [3]]))
        assert not check_link_event(labeling, points, LinkPattern.from_blocks([[1], [2], [3]]))

    def test_permissive_pattern(self, box_2x3: LatticeDomain) -> None:
        """Permissive events ignore extra connections."""
        graph = build_model_graph(box_2x3)
        bonds = open_edges(graph, [((0, 0), (1, 0)), ((1, 0), (2, 0))])
        labeling = label_bonds(graph, bonds)
        pattern = LinkPattern.from_blocks([[1, 2], [3]])
        points = ((0, 0), (1, 0), (2, 0))
        strict = LinkEvent(points, pattern)
        loose = LinkEvent(points, pattern, permissive=True)
        assert not strict.evaluate(graph, labeling.labels, bonds)
        assert loose.evaluate(graph, labeling.labels, bonds)

    def test_point_count_mismatch(self) -> None:
        with pytest.raises(ConfigurationError):
            LinkEvent(((0, 0),), LinkPattern.single_block(2))

    def test_two_point_vectorized(self, box_2x2: LatticeDomain) -> None:
        """Events accept stacked label rows."""
        graph = build_model_graph(box_2x2)
        rows = [
            label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_)).labels,
            label_bonds(graph, open_edges(graph, [((0, 0), (1, 0))])).labels,
        ]
        event = TwoPointEvent((0, 0), (1, 0))
        result = event.evaluate(graph, np.stack(rows), np.zeros((2, graph.n_edges), dtype=np.bool_))
        assert result.tolist() == [False, True]

    def test_descriptor_hash(self) -> None:
        first = descriptor_hash(TwoPointEvent((0, 0), (1, 0)))
        assert len(first) == 12
        assert first == descriptor_hash(TwoPointEvent((0, 0), (1, 0)))
        assert first != descriptor_hash(TwoPointEvent((0, 0), (2, 0)))


class TestArmEvents:
    """Tests for arm and boundary-connection events."""

    def test_arm_needs_increasing_radii(self) -> None:
        with pytest.raises(ConfigurationError):
            ArmEvent((0.0, 0.0), 2.0, 1.5)

    def test_arm_closed_and_open(self, box_7x7: LatticeDomain) -> None:
        graph = build_model_graph(box_7x7)
        closed = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        full = label_bonds(graph, np.ones(graph.n_edges, dtype=np.bool_))
        assert not arm_event(closed, (0.0, 0.0), 1.5, 2.5)
        assert arm_event(full, (0.0, 0.0), 1.5, 2.5)

    def test_one_arm_single_edge(self, box_7x7: LatticeDomain) -> None:
        """One open edge reaches the radius-1.5 circle."""
        graph = build_model_graph(box_7x7)
        labeling = label_bonds(graph, open_edges(graph, [((0, 0), (1, 0))]))
        assert one_arm_event(labeling, (0, 0), 1.5)
        assert not one_arm_event(labeling, (0, 0), 2.5)

    def test_empty_circle(self, box_7x7: LatticeDomain) -> None:
        graph = build_model_graph(box_7x7)
        labeling = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        with pytest.raises(UndefinedEventError):
            OneArmEvent((0, 0), 1.0).evaluate(graph, labeling.labels, np.zeros(graph.n_edges, dtype=np.bool_))

    def test_boundary_connection(self, box_3x3: LatticeDomain) -> None:
        graph = build_model_graph(box_3x3)
        closed = label_bonds(graph, np.zeros(graph.n_edges, dtype=np.bool_))
        linked = label_bonds(graph, open_edges(graph, [((1, 1), (2, 1))]))
        assert not boundary_connection(closed, (1, 1))
        assert boundary_connection(linked, (1, 1))

    def test_boundary_vertex_is_connected(self, box_3x3: LatticeDomain) -> None:
        """A boundary vertex touches the boundary trivially."""
        graph = build_model_graph(box_3x3)
        bonds = np.zeros(graph.n_edges, dtype=np.bool_)
        labeling = label_bonds(graph, bonds)
        assert BoundaryConnectionEvent((0, 0)).evaluate(graph, labeling.labels, bonds)


class TestEdgeEvents:
    """Tests for events read off the bond states."""

    def test_edge_open(self, box_2x2: LatticeDomain) -> None:
        graph = build_model_graph(box_2x2)
        bonds = open_edges(graph, [((0, 0), (0, 1))])
        labels = label_bonds(graph, bonds).labels
        assert EdgeOpenEvent((0, 0), (0, 1)).evaluate(graph, labels, bonds)
        assert not EdgeOpenEvent((0, 0), (1, 0)).evaluate(graph, labels, bonds)

    def test_inner_crossing(self, box_3x3: LatticeDomain) -> None:
        """The bottom row crosses the box; a single edge does not."""
        graph = build_model_graph(box_3x3)
        event = InnerCrossingEvent((0, 0), (2, 2))
        row = open_edges(graph, [((0, 0), (1, 0)), ((1, 0), (2, 0))])
        half = open_edges(graph, [((0, 0), (1, 0))])
        labels = label_bonds(graph, row).labels
        assert bool(event.evaluate(graph, labels, row))
        assert not bool(event.evaluate(graph, labels, half))

    def test_inner_crossing_ignores_outside_edges(self) -> None:
        """Paths leaving the inner box do not count."""
        domain = build_box(1.0, ((0, 0), (2, 1)))
        graph = build_model_graph(domain)
        event = InnerCrossingEvent((0, 0), (2, 0))
        detour = open_edges(
            graph, [((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (2, 1)), ((2, 1), (2, 0))]
        )
        labels = label_bonds(graph, detour).labels
        assert not bool(event.evaluate(graph, labels, detour))
        assert len(event.edge_subset(graph)) == 2

    def test_even_cluster(self, box_2x2: LatticeDomain) -> None:
        graph = build_model_graph(box_2x2)
        event = EvenClusterEvent(((0, 0), (1, 0)))
        closed = np.zeros(graph.n_edges, dtype=np.bool_)
        joined = open_edges(graph, [((0, 0), (1, 0))])
        assert not event.evaluate(graph, label_bonds(graph, closed).labels, closed)
        assert event.evaluate(graph, label_bonds(graph, joined).labels, joined)

    def test_even_cluster_with_ghost(self, box_2x2: LatticeDomain) -> None:
        """Clusters holding a ghost may contain an odd number of points."""
        graph = build_model_graph(box_2x2, BoundarySpec.wired(box_2x2))
        closed = np.zeros(graph.n_edges, dtype=np.bool_)
        event = EvenClusterEvent(((0, 0),))
        assert event.evaluate(graph, label_bonds(graph, closed).labels, closed)


class TestObservables:
    """Tests for spin and cluster-size observables."""

    def test_spin_product(self, box_2x2: LatticeDomain) -> None:
        graph = build_model_graph(box_2x2)
        spins = np.array([1, -1, -1, 1], dtype=np.int8)
        observable = SpinProductObservable(((0, 0), (0, 1)))
        assert int(observable.evaluate_spins(graph, spins)) == -1

    def test_largest_cluster(self, box_2x3: LatticeDomain) -> None:
        graph = build_model_graph(box_2x3)
        labeling = label_bonds(graph, open_edges(graph, [((0, 0), (0, 1)), ((0, 1), (1, 1))]))
        assert LargestClusterObservable().measure(labeling) == 3
        assert LargestClusterObservable().descriptor_id == "largest_cluster"
