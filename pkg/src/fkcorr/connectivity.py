"""Cluster labeling and connection events on bond configurations.

Events are frozen descriptors. ``evaluate`` works on label and bond arrays
with any number of leading batch axes, so the same descriptor serves a single
Monte Carlo snapshot and a chunk of an exact enumeration.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Protocol

import numpy as np
from numpy.typing import NDArray

from fkcorr import _kernels
from fkcorr.core.exceptions import ConfigurationError, UndefinedEventError
from fkcorr.lattice import Vertex, ball_boundary
from fkcorr.patterns import LinkPattern, connection_partition


if TYPE_CHECKING:
    from fkcorr.lattice import ModelGraph
    from fkcorr.sampler import BondConfiguration


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Cluster id per node of a model graph after wiring identification.

    Labels are the least node index of each cluster, so two nodes share a
    label iff they are joined by open edges or fused by the boundary.
    """

    labels: NDArray[np.int32]
    cluster_count: int
    graph: ModelGraph

    def label_of(self, v: Sequence[int]) -> int:
        return int(self.labels[self.graph.domain.vertex_id(v)])

    def labels_at(self, points: Sequence[Sequence[int]]) -> list[int]:
        return [self.label_of(p) for p in points]

    @property
    def domain_labels(self) -> NDArray[np.int32]:
        return self.labels[: self.graph.n_vertices]


def label_bonds(graph: ModelGraph, open_edges: NDArray[np.bool_]) -> ClusterLabeling:
    """Union-find over the open edges of ``graph`` plus its fused arcs."""
    bonds = np.ascontiguousarray(open_edges, dtype=np.bool_)
    if bonds.shape != (graph.n_edges,):
        msg = f"expected {graph.n_edges} edge states, got shape {bonds.shape}"
        raise ConfigurationError(msg)
    labels, count = _kernels.label_components(graph.n_nodes, graph.edges, bonds, graph.node_of)
    return ClusterLabeling(labels=labels, cluster_count=int(count), graph=graph)


def label_clusters(bonds: BondConfiguration) -> ClusterLabeling:
    """Labels of a sampled or enumerated bond configuration."""
    return label_bonds(bonds.graph, bonds.open)


def largest_cluster_size(labeling: ClusterLabeling) -> int:
    """Number of domain vertices in the biggest cluster."""
    return int(np.bincount(labeling.domain_labels).max())


class Event(Protocol):
    """Anything that turns labels and bonds into a 0/1 indicator."""

    kind: str

    @property
    def descriptor_id(self) -> str: ...

    def evaluate(
        self,
        graph: ModelGraph,
        labels: NDArray[np.int32],
        bonds: NDArray[np.bool_],
    ) -> NDArray[np.bool_]: ...


def descriptor_hash(event: Event) -> str:
    return hashlib.sha256(event.descriptor_id.encode()).hexdigest()[:12]


def _fmt(v: Sequence[float]) -> str:
    return "(" + ",".join(f"{x:g}" for x in v) + ")"


def _ids(graph: ModelGraph, points: Sequence[Sequence[int]]) -> NDArray[np.intp]:
    return np.asarray([graph.domain.vertex_id(p) for p in points], dtype=np.intp)


def _meet(labels: NDArray[np.int32], a: NDArray[np.intp], b: NDArray[np.intp]) -> NDArray[np.bool_]:
    """Does some node of ``a`` share a cluster with some node of ``b``?"""
    la = labels[..., a][..., :, None]
    lb = labels[..., b][..., None, :]
    result: NDArray[np.bool_] = (la == lb).any(axis=(-1, -2))
    return result


@lru_cache(maxsize=256)
def _circle(graph: ModelGraph, center: tuple[float, float], radius: float) -> NDArray[np.intp]:
    ring = ball_boundary(graph.domain, center, radius)
    if not ring:
        msg = f"discrete circle of radius {radius} around {center} is empty"
        raise UndefinedEventError(msg)
    return _ids(graph, sorted(ring))


@dataclass(frozen=True)
class LinkEvent:
    """``G(Q; points)``: the points are connected exactly according to ``pattern``.

    With ``permissive`` only the connections of ``pattern`` are required.
    """

    points: tuple[Vertex, ...]
    pattern: LinkPattern
    permissive: bool = False
    kind: str = field(default="link", init=False)

    def __post_init__(self) -> None:
        if len(self.points) != self.pattern.n:
            msg = f"{len(self.points)} points for a pattern on {self.pattern.n}"
            raise ConfigurationError(msg)

    @property
    def descriptor_id(self) -> str:
        mode = "+" if self.permissive else ""
        return f"link{mode}{str(self.pattern)}:" + "".join(_fmt(p) for p in self.points)

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        at = labels[..., _ids(graph, self.points)]
        owner = self.pattern.block_of()
        result = np.ones(at.shape[:-1], dtype=np.bool_)
        for i in range(self.pattern.n):
            for j in range(i + 1, self.pattern.n):
                same = at[..., i] == at[..., j]
                if owner[i] == owner[j]:
                    result &= same
                elif not self.permissive:
                    result &= ~same
        return result


@dataclass(frozen=True)
class ArmEvent:
    """``A_{r,R}(z)``: the discrete circles of radii ``r`` and ``R`` are connected."""

    center: tuple[float, float]
    r: float
    R: float
    kind: str = field(default="arm", init=False)

    def __post_init__(self) -> None:
        if not self.r < self.R:
            msg = f"arm event needs r < R, got r={self.r}, R={self.R}"
            raise ConfigurationError(msg)

    @property
    def descriptor_id(self) -> str:
        return f"arm{_fmt(self.center)}r{self.r:g}R{self.R:g}"

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        inner = _circle(graph, self.center, self.r)
        outer = _circle(graph, self.center, self.R)
        return _meet(labels, inner, outer)


@dataclass(frozen=True)
class OneArmEvent:
    """The vertex ``z`` is connected to the discrete circle of radius ``R`` around it.

    At a boundary vertex this is the boundary one-arm event.
    """

    z: Vertex
    R: float
    kind: str = field(default="one_arm", init=False)

    @property
    def descriptor_id(self) -> str:
        return f"one_arm{_fmt(self.z)}R{self.R:g}"

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        mesh = graph.domain.mesh
        outer = _circle(graph, (self.z[0] * mesh, self.z[1] * mesh), self.R)
        return _meet(labels, _ids(graph, [self.z]), outer)


@dataclass(frozen=True)
class TwoPointEvent:
    y1: Vertex
    y2: Vertex
    kind: str = field(default="two_point", init=False)

    @property
    def descriptor_id(self) -> str:
        return f"two_point{_fmt(self.y1)}{_fmt(self.y2)}"

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        ids = _ids(graph, [self.y1, self.y2])
        result: NDArray[np.bool_] = labels[..., ids[0]] == labels[..., ids[1]]
        return result


@dataclass(frozen=True)
class BoundaryConnectionEvent:
    """``z`` is connected to the boundary (to a ghost under wired arcs)."""

    z: Vertex
    kind: str = field(default="boundary_connection", init=False)

    @property
    def descriptor_id(self) -> str:
        return f"boundary_connection{_fmt(self.z)}"

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        targets = np.concatenate(
            [_ids(graph, sorted(graph.domain.boundary)), np.asarray(graph.ghost_nodes, dtype=np.intp)]
        )
        return _meet(labels, _ids(graph, [self.z]), targets)


@dataclass(frozen=True)
class EdgeOpenEvent:
    u: Vertex
    v: Vertex
    kind: str = field(default="edge_open", init=False)

    @property
    def descriptor_id(self) -> str:
        return f"edge_open{_fmt(self.u)}{_fmt(self.v)}"

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        result: NDArray[np.bool_] = bonds[..., graph.domain.edge_id(self.u, self.v)]
        return result


@dataclass(frozen=True)
class InnerCrossingEvent:
    """Left-right open crossing of the box ``[lower, upper]`` using its own edges only.

    The event depends on edges inside the box and nothing else.
    """

    lower: Vertex
    upper: Vertex
    kind: str = field(default="inner_crossing", init=False)

    @property
    def descriptor_id(self) -> str:
        return f"inner_crossing{_fmt(self.lower)}{_fmt(self.upper)}"

    def _inside(self, v: Vertex) -> bool:
        return self.lower[0] <= v[0] <= self.upper[0] and self.lower[1] <= v[1] <= self.upper[1]

    def edge_subset(self, graph: ModelGraph) -> NDArray[np.int64]:
        domain = graph.domain
        return np.asarray(
            [
                k
                for k, (i, j) in enumerate(domain.edges)
                if self._inside(domain.vertices[i]) and self._inside(domain.vertices[j])
            ],
            dtype=np.int64,
        )

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        domain = graph.domain
        left = [v for v in domain.vertices if v[0] == self.lower[0] and self._inside(v)]
        right = [v for v in domain.vertices if v[0] == self.upper[0] and self._inside(v)]
        if not left or not right:
            msg = f"inner box {self.lower}-{self.upper} has no vertices on a side"
            raise UndefinedEventError(msg)
        flat = np.ascontiguousarray(bonds.reshape(-1, bonds.shape[-1]), dtype=np.bool_)
        result = _kernels.crossing_batch(
            graph.n_nodes,
            graph.edges,
            self.edge_subset(graph),
            _ids(graph, left).astype(np.int32),
            _ids(graph, right).astype(np.int32),
            flat,
        )
        reshaped: NDArray[np.bool_] = result.reshape(bonds.shape[:-1])
        return reshaped


@dataclass(frozen=True)
class EvenClusterEvent:
    """Every cluster missing the ghosts holds an even number of ``points``.

    Under the Edwards-Sokal coupling with ``+1`` ghosts its probability is the
    spin correlation of ``points``.
    """

    points: tuple[Vertex, ...]
    kind: str = field(default="even_cluster", init=False)

    @property
    def descriptor_id(self) -> str:
        return "even_cluster:" + "".join(_fmt(p) for p in self.points)

    def evaluate(self, graph: ModelGraph, labels: NDArray[np.int32], bonds: NDArray[np.bool_]) -> NDArray[np.bool_]:
        at = labels[..., _ids(graph, self.points)]
        counts = (at[..., :, None] == at[..., None, :]).sum(axis=-1)
        pinned = np.zeros(at.shape, dtype=np.bool_)
        for ghost in graph.ghost_nodes:
            pinned |= at == labels[..., ghost][..., None]
        result: NDArray[np.bool_] = ((counts % 2 == 0) | pinned).all(axis=-1)
        return result


@dataclass(frozen=True)
class SpinProductObservable:
    """``sigma_A``, the product of spins at ``points``; measured on spins."""

    points: tuple[Vertex, ...]
    kind: str = field(default="spin_product", init=False)

    @property
    def descriptor_id(self) -> str:
        return "spin_product:" + "".join(_fmt(p) for p in self.points)

    def evaluate_spins(self, graph: ModelGraph, spins: NDArray[np.int8]) -> NDArray[np.int64]:
        result: NDArray[np.int64] = spins[..., _ids(graph, self.points)].astype(np.int64).prod(axis=-1)
        return result


@dataclass(frozen=True)
class LargestClusterObservable:
    """Number of domain vertices in the biggest cluster; the burn-in proxy."""

    kind: str = field(default="largest_cluster", init=False)

    @property
    def descriptor_id(self) -> str:
        return "largest_cluster"

    def measure(self, labeling: ClusterLabeling) -> int:
        return largest_cluster_size(labeling)


def check_link_event(
    labeling: ClusterLabeling,
    points: Sequence[Sequence[int]],
    pattern: LinkPattern,
) -> bool:
    """True iff the connection partition of ``points`` equals ``pattern``.

    Raises:
        InvalidPointError: A point is not a domain vertex.
    """
    if len(points) != pattern.n:
        msg = f"{len(points)} points for a pattern on {pattern.n}"
        raise ConfigurationError(msg)
    return connection_partition(labeling.labels_at(points)) == pattern


def arm_event(labeling: ClusterLabeling, z: Sequence[float], r: float, R: float) -> bool:
    """Whether ``A_{r,R}(z)`` occurs.

    Raises:
        UndefinedEventError: One of the discrete circles is empty.
    """
    event = ArmEvent((float(z[0]), float(z[1])), r, R)
    empty = np.zeros(labeling.graph.n_edges, dtype=np.bool_)
    return bool(event.evaluate(labeling.graph, labeling.labels, empty))


def one_arm_event(labeling: ClusterLabeling, z: Sequence[int], R: float) -> bool:
    event = OneArmEvent((int(z[0]), int(z[1])), R)
    empty = np.zeros(labeling.graph.n_edges, dtype=np.bool_)
    return bool(event.evaluate(labeling.graph, labeling.labels, empty))


def boundary_connection(labeling: ClusterLabeling, z: Sequence[int]) -> bool:
    """Whether ``z`` shares a cluster with a boundary vertex or a ghost."""
    event = BoundaryConnectionEvent((int(z[0]), int(z[1])))
    empty = np.zeros(labeling.graph.n_edges, dtype=np.bool_)
    return bool(event.evaluate(labeling.graph, labeling.labels, empty))
