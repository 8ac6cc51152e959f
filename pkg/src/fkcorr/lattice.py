"""Square-lattice domains, boundaries, medial graphs and Dobrushin markings.

Vertices are integer points of Z^2; the mesh ``a`` only enters geometric
queries (balls, physical coordinates). Medial vertices are stored in doubled
coordinates: the midpoint of the edge ``(u, u + d)`` is ``2u + d``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from fkcorr.core.exceptions import (
    ConfigurationError,
    InvalidGeometryError,
    InvalidMarkingError,
    InvalidPointError,
)
from fkcorr.utils.logging import get_logger


logger = get_logger(__name__)

Vertex = tuple[int, int]
MedialPoint = tuple[int, int]
MedialEdge = tuple[MedialPoint, MedialPoint]

# Clockwise order around a primal vertex: N, E, S, W.
CLOCKWISE: tuple[Vertex, ...] = ((0, 1), (1, 0), (0, -1), (-1, 0))
_DIRECTION_INDEX = {d: k for k, d in enumerate(CLOCKWISE)}

_EPS = 1e-9


def _add(u: Vertex, d: Vertex) -> Vertex:
    return (u[0] + d[0], u[1] + d[1])


def _sub(u: Vertex, v: Vertex) -> Vertex:
    return (u[0] - v[0], u[1] - v[1])


def _right(d: Vertex) -> Vertex:
    return (d[1], -d[0])


def _left(d: Vertex) -> Vertex:
    return (-d[1], d[0])


def _midpoint(u: Vertex, d: Vertex) -> MedialPoint:
    return (2 * u[0] + d[0], 2 * u[1] + d[1])


class ShapeTag(str, Enum):
    """How a domain was discretized."""

    BOX = "box"
    HALF_PLANE_STRIP = "half_plane_strip"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LatticeDomain:
    """A finite, connected, simply connected subgraph of Z^2 at mesh ``a``.

    Attributes:
        mesh: Lattice spacing ``a``.
        vertices: Sorted integer lattice points.
        edges: Index pairs ``(i, j)`` with ``i < j`` of vertices at unit distance.
        boundary: Vertices having a lattice neighbour outside the domain.
        shape_tag: Discretization kind.
        corners: Physical corners for box-like shapes.
    """

    mesh: float
    vertices: tuple[Vertex, ...]
    edges: tuple[tuple[int, int], ...]
    boundary: frozenset[Vertex]
    shape_tag: ShapeTag = ShapeTag.CUSTOM
    corners: tuple[tuple[float, float], tuple[float, float]] | None = None

    @cached_property
    def index(self) -> dict[Vertex, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def edge_index(self) -> dict[frozenset[Vertex], int]:
        return {
            frozenset((self.vertices[i], self.vertices[j])): k
            for k, (i, j) in enumerate(self.edges)
        }

    @cached_property
    def vertex_set(self) -> frozenset[Vertex]:
        return frozenset(self.vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __contains__(self, v: object) -> bool:
        return v in self.vertex_set

    def vertex_id(self, v: Sequence[int]) -> int:
        """Index of lattice point ``v``; raises InvalidPointError when absent."""
        key = (int(v[0]), int(v[1]))
        try:
            return self.index[key]
        except KeyError:
            msg = f"point {key} is not a vertex of the domain"
            raise InvalidPointError(msg) from None

    def edge_id(self, u: Vertex, v: Vertex) -> int:
        try:
            return self.edge_index[frozenset((u, v))]
        except KeyError:
            msg = f"{u}-{v} is not an edge of the domain"
            raise InvalidPointError(msg) from None

    def physical(self, v: Vertex) -> complex:
        return complex(self.mesh * v[0], self.mesh * v[1])

    def neighbors(self, v: Vertex) -> list[Vertex]:
        return [w for d in CLOCKWISE if (w := _add(v, d)) in self.vertex_set]

    def outside_neighbors(self, v: Vertex) -> list[Vertex]:
        return [w for d in CLOCKWISE if (w := _add(v, d)) not in self.vertex_set]

    def edge_array(self) -> NDArray[np.int32]:
        return np.asarray(self.edges, dtype=np.int32).reshape(-1, 2)

    def to_json(self) -> dict[str, Any]:
        """Serializable description: shape tag, mesh and corners or points."""
        doc: dict[str, Any] = {"shape": self.shape_tag.value, "mesh": self.mesh}
        if self.corners is not None and self.shape_tag is not ShapeTag.CUSTOM:
            doc["corners"] = [list(c) for c in self.corners]
        else:
            doc["points"] = [list(v) for v in self.vertices]
        return doc

    @cached_property
    def domain_hash(self) -> str:
        payload = {
            "mesh": self.mesh,
            "vertices": [list(v) for v in self.vertices],
            "shape": self.shape_tag.value,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def build_domain(
    points: Iterable[Sequence[int]],
    mesh: float = 1.0,
    shape_tag: ShapeTag = ShapeTag.CUSTOM,
    corners: tuple[tuple[float, float], tuple[float, float]] | None = None,
) -> LatticeDomain:
    """Build the induced subgraph of Z^2 on ``points`` and validate it.

    Raises:
        InvalidGeometryError: Empty, disconnected or not simply connected.
    """
    if mesh <= 0:
        msg = f"mesh must be positive, got {mesh}"
        raise InvalidGeometryError(msg)
    vertices = tuple(sorted({(int(p[0]), int(p[1])) for p in points}))
    if not vertices:
        msg = "domain has no vertices"
        raise InvalidGeometryError(msg)

    index = {v: i for i, v in enumerate(vertices)}
    edges: list[tuple[int, int]] = []
    for i, v in enumerate(vertices):
        for d in ((1, 0), (0, 1)):
            j = index.get(_add(v, d))
            if j is not None:
                edges.append((i, j) if i < j else (j, i))
    edges.sort(key=lambda e: (vertices[e[0]], vertices[e[1]]))

    n = len(vertices)
    if n > 1:
        rows = [e[0] for e in edges]
        cols = [e[1] for e in edges]
        adjacency = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
        n_components, _ = connected_components(adjacency, directed=False)
        if n_components != 1:
            msg = f"domain is disconnected ({n_components} components)"
            raise InvalidGeometryError(msg)

    vertex_set = set(vertices)
    squares = sum(
        1
        for v in vertices
        if {_add(v, (1, 0)), _add(v, (0, 1)), _add(v, (1, 1))} <= vertex_set
    )
    # Faces of the induced planar graph: unit squares plus the outer face.
    if n - len(edges) + squares + 1 != 2:
        msg = "domain is not simply connected (Euler relation V - E + F = 2 fails)"
        raise InvalidGeometryError(msg)

    boundary = frozenset(
        v for v in vertices if any(_add(v, d) not in vertex_set for d in CLOCKWISE)
    )
    return LatticeDomain(
        mesh=float(mesh),
        vertices=vertices,
        edges=tuple(edges),
        boundary=boundary,
        shape_tag=shape_tag,
        corners=corners,
    )


def build_box(
    mesh: float,
    corners: Sequence[Sequence[float]],
    shape_tag: ShapeTag = ShapeTag.BOX,
) -> LatticeDomain:
    """All lattice points ``a*Z^2`` inside the closed axis-aligned rectangle.

    Raises:
        InvalidGeometryError: Zero-area rectangle or fewer than two lattice
            points along an axis.
    """
    (xa, ya), (xb, yb) = corners
    x0, x1 = sorted((float(xa), float(xb)))
    y0, y1 = sorted((float(ya), float(yb)))
    if mesh <= 0:
        msg = f"mesh must be positive, got {mesh}"
        raise InvalidGeometryError(msg)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        msg = f"degenerate rectangle {tuple(corners)}"
        raise InvalidGeometryError(msg)

    ix = range(math.ceil(x0 / mesh - _EPS), math.floor(x1 / mesh + _EPS) + 1)
    iy = range(math.ceil(y0 / mesh - _EPS), math.floor(y1 / mesh + _EPS) + 1)
    if len(ix) < 2 or len(iy) < 2:
        msg = f"rectangle {tuple(corners)} holds no lattice square at mesh {mesh}"
        raise InvalidGeometryError(msg)
    return build_domain(
        ((i, j) for i in ix for j in iy),
        mesh=mesh,
        shape_tag=shape_tag,
        corners=((x0, y0), (x1, y1)),
    )


def build_strip(mesh: float, width: float, height: float) -> LatticeDomain:
    """Half-plane realization: ``[-width/2, width/2] x [0, height]``."""
    return build_box(
        mesh,
        ((-width / 2, 0.0), (width / 2, height)),
        shape_tag=ShapeTag.HALF_PLANE_STRIP,
    )


def domain_from_json(doc: dict[str, Any]) -> LatticeDomain:
    """Inverse of :meth:`LatticeDomain.to_json`."""
    shape = ShapeTag(doc.get("shape", "custom"))
    mesh = float(doc.get("mesh", 1.0))
    if shape is ShapeTag.CUSTOM:
        if "points" not in doc:
            msg = "custom domain needs 'points'"
            raise ConfigurationError(msg)
        return build_domain(doc["points"], mesh=mesh)
    if "corners" not in doc:
        msg = f"{shape.value} domain needs 'corners'"
        raise ConfigurationError(msg)
    return build_box(mesh, doc["corners"], shape_tag=shape)


def boundary_cycle(domain: LatticeDomain) -> tuple[Vertex, ...]:
    """Counterclockwise walk around the outer face.

    The walk keeps the exterior on its right, starts at the lowest-then-leftmost
    vertex and stops when its first directed edge repeats. Vertices on dangling
    paths appear more than once.
    """
    start = min(domain.vertices, key=lambda v: (v[1], v[0]))
    if domain.n_vertices == 1:
        return (start,)

    def step(v: Vertex, heading: Vertex) -> Vertex:
        for d in (_right(heading), heading, _left(heading), (-heading[0], -heading[1])):
            if _add(v, d) in domain.vertex_set:
                return d
        msg = f"isolated vertex {v} in boundary walk"
        raise InvalidGeometryError(msg)

    heading = step(start, (0, -1))
    first = (start, heading)
    walk = [start]
    v = start
    while True:
        v = _add(v, heading)
        heading = step(v, heading)
        if (v, heading) == first:
            break
        walk.append(v)
    return tuple(walk)


def boundary_arc(domain: LatticeDomain, start: Vertex, end: Vertex) -> tuple[Vertex, ...]:
    """Boundary vertices met counterclockwise from ``start`` to ``end`` inclusive."""
    walk = boundary_cycle(domain)
    for v in (start, end):
        if v not in domain.boundary:
            msg = f"{v} is not a boundary vertex"
            raise InvalidMarkingError(msg)
    i = walk.index(start)
    arc: list[Vertex] = []
    n = len(walk)
    for k in range(n):
        v = walk[(i + k) % n]
        if v not in arc:
            arc.append(v)
        if v == end:
            return tuple(arc)
    msg = f"{end} not reached from {start}"
    raise InvalidMarkingError(msg)


def ball_boundary(
    domain: LatticeDomain,
    center: Sequence[float] | complex,
    radius: float,
) -> frozenset[Vertex]:
    """Discrete circle: vertices strictly inside ``B_r(center)`` with a domain
    neighbour at distance at least ``r``.

    ``center`` and ``radius`` are physical; a radius not exceeding the mesh
    gives the empty set.
    """
    c = complex(center) if isinstance(center, complex) else complex(center[0], center[1])
    if radius <= domain.mesh:
        return frozenset()
    result = set()
    for v in domain.vertices:
        if abs(domain.physical(v) - c) >= radius:
            continue
        if any(abs(domain.physical(w) - c) >= radius for w in domain.neighbors(v)):
            result.add(v)
    return frozenset(result)


@dataclass(frozen=True, eq=False)
class MedialGraph:
    """Oriented medial graph of a domain in doubled coordinates.

    Every medial edge winds clockwise around the primal vertex on its right.
    ``owner`` maps each edge to that vertex; ``edge_of`` maps a medial vertex to
    the primal edge index it bisects, or ``-1`` for outward midpoints.
    """

    domain: LatticeDomain
    vertices: tuple[MedialPoint, ...]
    oriented_edges: tuple[MedialEdge, ...]
    owner: dict[MedialEdge, Vertex]
    edge_of: dict[MedialPoint, int]

    @cached_property
    def outward(self) -> frozenset[MedialPoint]:
        return frozenset(m for m, k in self.edge_of.items() if k < 0)

    def right_successor(self, edge: MedialEdge) -> MedialEdge:
        """Next edge continuing around the owner vertex."""
        u = self.owner[edge]
        head = edge[1]
        k = _DIRECTION_INDEX[_sub(head, (2 * u[0], 2 * u[1]))]
        return (head, _midpoint(u, CLOCKWISE[(k + 1) % 4]))

    def left_successor(self, edge: MedialEdge) -> MedialEdge:
        """Next edge turning around the vertex across the bisected primal edge."""
        u = self.owner[edge]
        head = edge[1]
        d = _sub(head, (2 * u[0], 2 * u[1]))
        v = _add(u, d)
        k = _DIRECTION_INDEX[(-d[0], -d[1])]
        return (head, _midpoint(v, CLOCKWISE[(k + 1) % 4]))

    def successor(self, edge: MedialEdge, is_open: Callable[[MedialPoint], bool]) -> MedialEdge:
        """Left turn across an open primal edge, right turn otherwise."""
        if is_open(edge[1]):
            return self.left_successor(edge)
        return self.right_successor(edge)

    @staticmethod
    def direction(edge: MedialEdge) -> complex:
        return complex(edge[1][0] - edge[0][0], edge[1][1] - edge[0][1])


def build_medial(domain: LatticeDomain) -> MedialGraph:
    """Medial graph with every edge bordering a domain vertex."""
    edges: list[MedialEdge] = []
    owner: dict[MedialEdge, Vertex] = {}
    edge_of: dict[MedialPoint, int] = {}
    for u in domain.vertices:
        for k, d in enumerate(CLOCKWISE):
            m = _midpoint(u, d)
            w = _add(u, d)
            edge_of[m] = domain.edge_index[frozenset((u, w))] if w in domain.vertex_set else -1
            e = (m, _midpoint(u, CLOCKWISE[(k + 1) % 4]))
            edges.append(e)
            owner[e] = u
    return MedialGraph(
        domain=domain,
        vertices=tuple(sorted(edge_of)),
        oriented_edges=tuple(edges),
        owner=owner,
        edge_of=edge_of,
    )


@dataclass(frozen=True, eq=False)
class DobrushinDomain:
    """Domain with a wired arc ``(x1 x2)`` and a free arc ``(x2 x1)``.

    ``wired_path`` and ``free_path`` are the medial arcs between ``x1_medial``
    and ``x2_medial``, both oriented from ``x1_medial``; the first followed by
    the reversal of the second is a closed circuit. The interface runs from
    ``w1`` through the outer corner edge ``e1`` to ``e2`` and ``w2``.
    """

    base: LatticeDomain
    x1: Vertex
    x2: Vertex
    medial: MedialGraph
    wired_vertices: tuple[Vertex, ...]
    wired_edges: frozenset[int]
    x1_medial: MedialPoint
    x2_medial: MedialPoint
    w1: MedialPoint
    w2: MedialPoint
    e1: MedialEdge
    e2: MedialEdge
    exterior: tuple[MedialEdge, ...]
    medial_edges: frozenset[MedialEdge]
    wired_path: tuple[MedialEdge, ...]
    free_path: tuple[MedialEdge, ...]

    @property
    def medial_arcs(self) -> tuple[tuple[MedialEdge, ...], tuple[MedialEdge, ...]]:
        return self.wired_path, self.free_path

    @property
    def outer_corners(self) -> tuple[tuple[MedialPoint, MedialEdge], tuple[MedialPoint, MedialEdge]]:
        return (self.w1, self.e1), (self.w2, self.e2)

    @cached_property
    def traced_edges(self) -> frozenset[MedialEdge]:
        """Edges every configuration distributes among loops and the interface."""
        return self.medial_edges | {self.e1, self.e2}

    def forget_marks(self) -> LatticeDomain:
        return self.base

    def is_open_factory(self, bonds: NDArray[np.bool_]) -> Callable[[MedialPoint], bool]:
        """Primal-edge state at a medial vertex; wired-arc edges count as open."""
        edge_of = self.medial.edge_of
        wired = self.wired_edges

        def is_open(m: MedialPoint) -> bool:
            k = edge_of[m]
            return k >= 0 and (k in wired or bool(bonds[k]))

        return is_open


def _trace_until(
    medial: MedialGraph,
    start: MedialEdge,
    stop_head: MedialPoint,
    is_open: Callable[[MedialPoint], bool],
    limit: int,
) -> list[MedialEdge]:
    path = [start]
    edge = start
    while edge[1] != stop_head:
        edge = medial.successor(edge, is_open)
        path.append(edge)
        if len(path) > limit:
            msg = "medial trace does not close"
            raise InvalidMarkingError(msg)
    return path


def build_dobrushin(domain: LatticeDomain, x1: Sequence[int], x2: Sequence[int]) -> DobrushinDomain:
    """Mark ``x1``, ``x2`` and build the medial Dobrushin domain.

    Raises:
        InvalidMarkingError: Points equal, off the boundary, or without an
            outward corner next to them.
    """
    p1: Vertex = (int(x1[0]), int(x1[1]))
    p2: Vertex = (int(x2[0]), int(x2[1]))
    if p1 == p2:
        msg = f"marked points must be distinct, got {p1} twice"
        raise InvalidMarkingError(msg)
    for p in (p1, p2):
        if p not in domain.boundary:
            msg = f"marked point {p} is not a boundary vertex"
            raise InvalidMarkingError(msg)
    if domain.n_vertices < 2:
        msg = "Dobrushin marking needs at least one edge"
        raise InvalidMarkingError(msg)

    walk = boundary_cycle(domain)
    n = len(walk)
    i1 = walk.index(p1)
    i2 = walk.index(p2)
    prev1 = walk[(i1 - 1) % n]
    next2 = walk[(i2 + 1) % n]

    wired_vertices: list[Vertex] = []
    wired_edges: set[int] = set()
    i = i1
    while True:
        if walk[i] not in wired_vertices:
            wired_vertices.append(walk[i])
        if i == i2:
            break
        j = (i + 1) % n
        wired_edges.add(domain.edge_id(walk[i], walk[j]))
        i = j

    medial = build_medial(domain)
    d1 = _sub(prev1, p1)
    w1 = _midpoint(p1, CLOCKWISE[(_DIRECTION_INDEX[d1] - 1) % 4])
    w2 = _midpoint(p2, _right(_sub(next2, p2)))
    for w in (w1, w2):
        if medial.edge_of.get(w, 0) >= 0:
            msg = f"no outward corner next to the marked points ({w} lies inside)"
            raise InvalidMarkingError(msg)
    x1_medial = (prev1[0] + p1[0], prev1[1] + p1[1])
    x2_medial = (p2[0] + next2[0], p2[1] + next2[1])
    e1: MedialEdge = (w1, x1_medial)
    e2: MedialEdge = (x2_medial, w2)
    if medial.owner.get(e1) != p1 or medial.owner.get(e2) != p2:
        msg = "outer corner edges are not medial edges around the marked points"
        raise InvalidMarkingError(msg)

    limit = len(medial.oriented_edges) + 2

    def wired_only(m: MedialPoint) -> bool:
        k = medial.edge_of[m]
        return k >= 0 and k in wired_edges

    def all_open(m: MedialPoint) -> bool:
        return medial.edge_of[m] >= 0

    exterior = _trace_until(medial, e2, w1, wired_only, limit)[1:]
    for edge in exterior:
        if medial.edge_of[edge[1]] >= 0 and medial.edge_of[edge[1]] not in wired_edges:
            msg = f"exterior of the wired arc crosses a free edge at {edge[1]}"
            raise InvalidMarkingError(msg)
    closed_trace = _trace_until(medial, e1, w2, wired_only, limit)
    open_trace = _trace_until(medial, e1, w2, all_open, limit)

    medial_edges = frozenset(medial.oriented_edges) - set(exterior) - {e1, e2}
    dob = DobrushinDomain(
        base=domain,
        x1=p1,
        x2=p2,
        medial=medial,
        wired_vertices=tuple(wired_vertices),
        wired_edges=frozenset(wired_edges),
        x1_medial=x1_medial,
        x2_medial=x2_medial,
        w1=w1,
        w2=w2,
        e1=e1,
        e2=e2,
        exterior=tuple(exterior),
        medial_edges=medial_edges,
        wired_path=tuple(closed_trace[1:-1]),
        free_path=tuple(open_trace[1:-1]),
    )
    wired_points = {e[0] for e in dob.wired_path} | {x2_medial}
    free_points = {e[0] for e in dob.free_path} | {x2_medial}
    if wired_points & free_points != {x1_medial, x2_medial}:
        msg = "medial arcs meet away from the marked points"
        raise InvalidMarkingError(msg)
    logger.debug(
        "dobrushin_built",
        x1=p1,
        x2=p2,
        wired_len=len(dob.wired_path),
        free_len=len(dob.free_path),
    )
    return dob


class BoundaryKind(str, Enum):
    FREE = "free"
    WIRED = "wired"
    DOBRUSHIN = "dobrushin"
    MIXED_FREE_PLUS = "mixed_free_plus"


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary condition as a partition of boundary vertices.

    ``wired_arcs`` are identified into single blocks. ``plus_arc`` carries the
    fixed ``+1`` ghost row of the mixed free/plus condition; its end points are
    the last two ``marked_points``.
    """

    kind: BoundaryKind = BoundaryKind.FREE
    marked_points: tuple[Vertex, ...] = ()
    wired_arcs: tuple[tuple[Vertex, ...], ...] = ()
    plus_arc: tuple[Vertex, ...] = ()

    def __post_init__(self) -> None:
        seen: set[Vertex] = set()
        for arc in self.wired_arcs:
            if seen & set(arc):
                msg = "wired arcs must be disjoint"
                raise InvalidMarkingError(msg)
            seen |= set(arc)
        if self.kind is BoundaryKind.DOBRUSHIN and len(self.marked_points) != 2:
            msg = "dobrushin boundary needs exactly two marked points"
            raise InvalidMarkingError(msg)
        if self.kind is BoundaryKind.MIXED_FREE_PLUS and not self.plus_arc:
            msg = "mixed_free_plus boundary needs a plus arc"
            raise InvalidMarkingError(msg)

    @classmethod
    def free(cls) -> BoundarySpec:
        return cls(BoundaryKind.FREE)

    @classmethod
    def wired(cls, domain: LatticeDomain, arcs: Sequence[Sequence[Vertex]] | None = None) -> BoundarySpec:
        """Whole boundary wired, or the given boundary arcs as separate blocks."""
        if arcs is None:
            blocks: tuple[tuple[Vertex, ...], ...] = (tuple(sorted(domain.boundary)),)
        else:
            blocks = tuple(tuple((int(v[0]), int(v[1])) for v in arc) for arc in arcs)
            for arc in blocks:
                for v in arc:
                    if v not in domain.boundary:
                        msg = f"wired arc vertex {v} is not on the boundary"
                        raise InvalidMarkingError(msg)
        return cls(BoundaryKind.WIRED, wired_arcs=blocks)

    @classmethod
    def dobrushin(cls, domain: LatticeDomain, x1: Sequence[int], x2: Sequence[int]) -> BoundarySpec:
        dob = build_dobrushin(domain, x1, x2)
        return cls(
            BoundaryKind.DOBRUSHIN,
            marked_points=(dob.x1, dob.x2),
            wired_arcs=(dob.wired_vertices,),
        )

    @classmethod
    def mixed_free_plus(
        cls,
        domain: LatticeDomain,
        points: Sequence[Sequence[int]],
        arc_start: Sequence[int],
        arc_end: Sequence[int],
    ) -> BoundarySpec:
        """Free boundary with a plus ghost row attached along ``[arc_start, arc_end]``."""
        start: Vertex = (int(arc_start[0]), int(arc_start[1]))
        end: Vertex = (int(arc_end[0]), int(arc_end[1]))
        arc = boundary_arc(domain, start, end)
        marked = tuple((int(p[0]), int(p[1])) for p in points)
        for p in marked:
            if p not in domain.boundary:
                msg = f"marked point {p} is not a boundary vertex"
                raise InvalidMarkingError(msg)
            if p in arc:
                msg = f"marked point {p} lies on the plus arc"
                raise InvalidMarkingError(msg)
        return cls(
            BoundaryKind.MIXED_FREE_PLUS,
            marked_points=(*marked, start, end),
            plus_arc=arc,
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "marked_points": [list(v) for v in self.marked_points],
            "wired_arcs": [[list(v) for v in arc] for arc in self.wired_arcs],
            "plus_arc": [list(v) for v in self.plus_arc],
        }


def plus_ghost_row(domain: LatticeDomain, arc: Sequence[Vertex]) -> tuple[Vertex, ...]:
    """Exterior sites carrying the ``+1`` spins of a plus arc.

    Every outside neighbour of an arc vertex is a site. Where the arc turns a
    convex corner the two sideways sites are diagonal to each other, and the
    exterior square between them is added so the row stays lattice-connected.

    Raises:
        InvalidMarkingError: The row is still disconnected.
    """
    sites: list[Vertex] = []
    for v in arc:
        for w in domain.outside_neighbors(v):
            if w not in sites:
                sites.append(w)
    present = set(sites)
    for a, b in itertools.combinations(list(sites), 2):
        if abs(a[0] - b[0]) == 1 and abs(a[1] - b[1]) == 1:
            elbows = [(a[0], b[1]), (b[0], a[1])]
            if any(e in present for e in elbows):
                continue
            for e in elbows:
                if e not in domain.vertex_set and e not in present:
                    sites.append(e)
                    present.add(e)

    if len(sites) > 1:
        site_index = {w: i for i, w in enumerate(sites)}
        rows, cols = [], []
        for w, i in site_index.items():
            for d in ((1, 0), (0, 1)):
                j = site_index.get(_add(w, d))
                if j is not None:
                    rows.append(i)
                    cols.append(j)
        row_graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(sites), len(sites)))
        if connected_components(row_graph, directed=False)[0] != 1:
            msg = "plus arc must have a lattice-connected ghost row"
            raise InvalidMarkingError(msg)
    return tuple(sorted(sites))


@dataclass(frozen=True, eq=False)
class ModelGraph:
    """The graph the samplers and oracles run on.

    Nodes ``0..V-1`` are domain vertices; ghost nodes follow. Each wired arc is
    fused into one ghost node; the plus arc gets one ghost node joined by one
    edge per (arc vertex, outside neighbour) pair. Ghost spins are ``+1``.
    ``node_of`` maps every node to the node that carries its state.
    """

    domain: LatticeDomain
    bc: BoundarySpec
    n_nodes: int
    edges: NDArray[np.int32]
    n_domain_edges: int
    node_of: NDArray[np.int32]
    ghost_nodes: tuple[int, ...]
    plus_ghost: int | None
    ghost_sites: tuple[Vertex, ...] = field(default=())

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_vertices(self) -> int:
        return self.domain.n_vertices

    @cached_property
    def is_ghost(self) -> NDArray[np.bool_]:
        mask = np.zeros(self.n_nodes, dtype=np.bool_)
        mask[list(self.ghost_nodes)] = True
        return mask

    @cached_property
    def free_vertices(self) -> tuple[int, ...]:
        """Domain vertices whose spin is not pinned by a wired arc."""
        return tuple(int(v) for v in np.flatnonzero(self.node_of[: self.n_vertices] == np.arange(self.n_vertices)))

    @cached_property
    def graph_hash(self) -> str:
        payload = {"domain": self.domain.domain_hash, "bc": self.bc.to_json()}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def build_model_graph(domain: LatticeDomain, bc: BoundarySpec | None = None) -> ModelGraph:
    """Attach ghost nodes for the boundary condition ``bc`` to ``domain``."""
    bc = bc or BoundarySpec.free()
    n = domain.n_vertices
    node_of = list(range(n))
    ghosts: list[int] = []
    for arc in bc.wired_arcs:
        ghost = n + len(ghosts)
        ghosts.append(ghost)
        node_of.append(ghost)
        for v in arc:
            node_of[domain.vertex_id(v)] = ghost

    edges = [list(e) for e in domain.edges]
    n_domain_edges = len(edges)
    plus_ghost: int | None = None
    ghost_sites: list[Vertex] = []
    if bc.plus_arc:
        plus_ghost = n + len(ghosts)
        ghosts.append(plus_ghost)
        node_of.append(plus_ghost)
        ghost_sites = list(plus_ghost_row(domain, bc.plus_arc))
        arc = set(bc.plus_arc)
        for w in ghost_sites:
            for d in CLOCKWISE:
                v = _add(w, d)
                if v in arc:
                    edges.append([domain.index[v], plus_ghost])

    graph = ModelGraph(
        domain=domain,
        bc=bc,
        n_nodes=len(node_of),
        edges=np.asarray(edges, dtype=np.int32).reshape(-1, 2),
        n_domain_edges=n_domain_edges,
        node_of=np.asarray(node_of, dtype=np.int32),
        ghost_nodes=tuple(ghosts),
        plus_ghost=plus_ghost,
        ghost_sites=tuple(sorted(ghost_sites)),
    )
    logger.debug(
        "model_graph_built",
        vertices=n,
        edges=graph.n_edges,
        ghosts=len(ghosts),
        bc=bc.kind.value,
    )
    return graph


def check_compatible(domain: LatticeDomain, bc: BoundarySpec) -> None:
    """Raise ConfigurationError when ``bc`` refers to points outside ``domain``."""
    if bc.kind is BoundaryKind.DOBRUSHIN and len(bc.marked_points) != 2:
        msg = "dobrushin boundary condition is missing its marked points"
        raise ConfigurationError(msg)
    for v in (*bc.marked_points, *bc.plus_arc, *(w for arc in bc.wired_arcs for w in arc)):
        if v not in domain.boundary:
            msg = f"boundary condition point {v} is not on the domain boundary"
            raise ConfigurationError(msg)
