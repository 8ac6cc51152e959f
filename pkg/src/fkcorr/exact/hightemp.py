"""High-temperature expansion graphs and the free-boundary fermionic observable.

Generalized vertices live in quadrupled coordinates: a lattice vertex ``v`` is
``4v``, the midpoint of ``(v, v + d)`` is ``4v + 2d`` and the corner of ``v``
towards the diagonal ``s`` is ``4v + s``. Every full edge is split into two
half-edges at its midpoint. ``Conf(A)`` is the set of edge subsets whose
odd-degree vertices are exactly ``A``; it is enumerated as one particular
solution plus the cycle space over GF(2).
"""

from __future__ import annotations

import cmath
import math
import time
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from fkcorr.core.exceptions import (
    CapacityError,
    InternalInvariantError,
    InvalidMarkingError,
    InvalidPointError,
)
from fkcorr.exact.enumeration import AuditReport, IsingEnumeration
from fkcorr.lattice import CLOCKWISE, BoundarySpec, LatticeDomain, Vertex, build_model_graph, plus_ghost_row
from fkcorr.sampler import BETA_CRITICAL
from fkcorr.utils.logging import get_logger, log_performance


logger = get_logger(__name__)

Point = tuple[int, int]

MAX_CYCLE_RANK = 24
CHUNK_BITS = 14

EDGE_WEIGHT = math.sqrt(2.0) - 1.0
HALF_WEIGHT = math.sqrt(EDGE_WEIGHT)
CORNER_WEIGHT = HALF_WEIGHT * math.cos(math.pi / 8)
DIAGONALS: tuple[Point, ...] = ((1, 1), (1, -1), (-1, -1), (-1, 1))


class EdgeClass(str, Enum):
    HALF = "half"
    NORMAL = "normal"
    CORNER = "corner"
    GHOST_ROW = "ghost_row"


_WEIGHTS = {
    EdgeClass.HALF: HALF_WEIGHT,
    EdgeClass.NORMAL: HALF_WEIGHT,
    EdgeClass.CORNER: CORNER_WEIGHT,
    EdgeClass.GHOST_ROW: 1.0,
}


def vertex_point(v: Vertex) -> Point:
    return (4 * v[0], 4 * v[1])


def midpoint_point(v: Vertex, d: Vertex) -> Point:
    return (4 * v[0] + 2 * d[0], 4 * v[1] + 2 * d[1])


def corner_point(v: Vertex, s: Point) -> Point:
    return (4 * v[0] + s[0], 4 * v[1] + s[1])


@dataclass(frozen=True, eq=False)
class HighTempGraph:
    """Generalized graph of ``domain`` plus its ghost row.

    ``edges`` excludes corner edges; they join the graph only when a corner is
    a source (see :meth:`edges_for`). Ghost-row half-edges weigh 1.
    """

    domain: LatticeDomain
    ghost_sites: tuple[Vertex, ...]
    points: tuple[Point, ...]
    edges: tuple[tuple[Point, Point], ...]
    classes: tuple[EdgeClass, ...]
    corner_edges: dict[Point, tuple[tuple[Point, Point], ...]] = field(repr=False)

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        return np.asarray([_WEIGHTS[c] for c in self.classes], dtype=np.float64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def ghost_below(self, v: Vertex) -> Point:
        """Ghost site adjacent to the plus-arc vertex ``v``."""
        for d in CLOCKWISE:
            w = (v[0] + d[0], v[1] + d[1])
            if w in self.ghost_sites:
                return vertex_point(w)
        msg = f"{v} has no adjacent ghost site"
        raise InvalidMarkingError(msg)

    def outward_normal(self, v: Vertex) -> Point:
        """Midpoint of the outer normal at boundary vertex ``v``, preferring the one below."""
        for d in ((0, -1), (-1, 0), (1, 0), (0, 1)):
            m = midpoint_point(v, d)
            if (vertex_point(v), m) in self._edge_set and m not in self._full_midpoints:
                return m
        msg = f"{v} has no outer normal"
        raise InvalidPointError(msg)

    @cached_property
    def _edge_set(self) -> frozenset[tuple[Point, Point]]:
        return frozenset(self.edges)

    @cached_property
    def _full_midpoints(self) -> frozenset[Point]:
        return frozenset(b for (a, b), c in zip(self.edges, self.classes) if c is not EdgeClass.NORMAL)

    def edges_for(self, sources: Sequence[Point]) -> tuple[list[tuple[Point, Point]], NDArray[np.float64]]:
        """Edge list and weights with the corner edges of corner sources added."""
        edges = list(self.edges)
        weights = list(self.weights)
        for s in sources:
            for e in self.corner_edges.get(s, ()):
                edges.append(e)
                weights.append(CORNER_WEIGHT)
        return edges, np.asarray(weights, dtype=np.float64)


def build_high_temp_graph(domain: LatticeDomain, bc: BoundarySpec | None = None) -> HighTempGraph:
    """Generalized graph for free or mixed free/plus boundary conditions."""
    bc = bc or BoundarySpec.free()
    ghosts = list(plus_ghost_row(domain, bc.plus_arc)) if bc.plus_arc else []
    ghost_set = set(ghosts)
    sites = set(domain.vertices) | ghost_set

    points: set[Point] = set()
    edges: list[tuple[Point, Point]] = []
    classes: list[EdgeClass] = []
    for u in sorted(sites):
        points.add(vertex_point(u))
        for d in ((1, 0), (0, 1)):
            w = (u[0] + d[0], u[1] + d[1])
            if w not in sites:
                continue
            if u in ghost_set and w in ghost_set:
                kind = EdgeClass.GHOST_ROW
            elif u in ghost_set or w in ghost_set:
                # Only plus-arc vertices touch the ghost row.
                inside = w if u in ghost_set else u
                if inside not in bc.plus_arc:
                    continue
                kind = EdgeClass.HALF
            else:
                kind = EdgeClass.HALF
            m = midpoint_point(u, d)
            points.add(m)
            edges.extend([(vertex_point(u), m), (vertex_point(w), m)])
            classes.extend([kind, kind])

    corner_edges: dict[Point, tuple[tuple[Point, Point], ...]] = {}
    for v in domain.vertices:
        for d in CLOCKWISE:
            w = (v[0] + d[0], v[1] + d[1])
            if w in sites and (w not in ghost_set or v in bc.plus_arc):
                continue
            m = midpoint_point(v, d)
            points.add(m)
            edges.append((vertex_point(v), m))
            classes.append(EdgeClass.NORMAL)
        for s in DIAGONALS:
            c = corner_point(v, s)
            corner_edges[c] = (
                (midpoint_point(v, (s[0], 0)), c),
                (midpoint_point(v, (0, s[1])), c),
            )

    graph = HighTempGraph(
        domain=domain,
        ghost_sites=tuple(sorted(ghosts)),
        points=tuple(sorted(points)),
        edges=tuple(edges),
        classes=tuple(classes),
        corner_edges=corner_edges,
    )
    logger.debug("high_temp_graph_built", points=len(graph.points), edges=graph.n_edges, ghosts=len(ghosts))
    return graph


@dataclass(frozen=True, eq=False)
class ConfSpace:
    """``Conf(A)`` as ``particular XOR span(cycles)``."""

    nodes: tuple[Point, ...]
    edges: tuple[tuple[Point, Point], ...]
    weights: NDArray[np.float64]
    particular: NDArray[np.bool_] | None
    cycles: NDArray[np.bool_]

    @property
    def rank(self) -> int:
        return int(self.cycles.shape[0])

    def chunks(self) -> Iterator[NDArray[np.bool_]]:
        """Edge subsets of ``Conf(A)``, ``2**CHUNK_BITS`` rows at a time."""
        if self.particular is None:
            return
        total = 1 << self.rank
        size = min(total, 1 << CHUNK_BITS)
        basis = self.cycles.astype(np.uint8)
        for start in range(0, total, size):
            index = np.arange(start, min(total, start + size), dtype=np.int64)
            coeff = ((index[:, None] >> np.arange(self.rank)) & 1).astype(np.uint8)
            span = (coeff @ basis) & 1 if self.rank else np.zeros((index.size, len(self.edges)), dtype=np.uint8)
            yield np.logical_xor(span.astype(np.bool_), self.particular)

    def subset_weights(self, subsets: NDArray[np.bool_]) -> NDArray[np.longdouble]:
        log_w = np.log(self.weights)
        result: NDArray[np.longdouble] = np.exp((subsets.astype(np.float64) @ log_w).astype(np.longdouble))
        return result


def conf_space(graph: HighTempGraph, sources: Sequence[Point]) -> ConfSpace:
    """Set up the GF(2) enumeration of ``Conf(sources)``.

    Raises:
        InvalidPointError: A source is not a generalized vertex.
        CapacityError: Cycle rank above 24.
    """
    edges, weights = graph.edges_for(sources)
    nodes = sorted({p for e in edges for p in e} | set(graph.points))
    index = {p: i for i, p in enumerate(nodes)}
    for s in sources:
        if s not in index:
            msg = f"{s} is not a generalized vertex"
            raise InvalidPointError(msg)
    n, m = len(nodes), len(edges)
    rows = [index[a] for a, _ in edges]
    cols = [index[b] for _, b in edges]
    adjacency = coo_matrix((np.ones(m), (rows, cols)), shape=(n, n)).tocsr()
    n_components, component = connected_components(adjacency, directed=False)
    rank = m - n + n_components
    if rank > MAX_CYCLE_RANK:
        msg = f"cycle rank {rank} exceeds {MAX_CYCLE_RANK}"
        raise CapacityError(msg)

    edge_of: dict[frozenset[int], int] = {frozenset((rows[k], cols[k])): k for k in range(m)}
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    orders: list[NDArray[np.int32]] = []
    seen = np.zeros(n, dtype=np.bool_)
    for root in range(n):
        if seen[root]:
            continue
        order, pred = breadth_first_order(adjacency, root, directed=False, return_predecessors=True)
        seen[order] = True
        for node in order[1:]:
            parent[node] = pred[node]
            depth[node] = depth[pred[node]] + 1
        orders.append(order)
    tree = {edge_of[frozenset((int(v), int(parent[v])))] for v in range(n) if parent[v] >= 0}

    demand = np.zeros(n, dtype=np.bool_)
    for s in sources:
        demand[index[s]] ^= True
    solution = np.zeros(m, dtype=np.bool_)
    feasible = True
    for order in orders:
        for node in order[::-1]:
            if not demand[node]:
                continue
            if parent[node] < 0:
                feasible = False
                break
            solution[edge_of[frozenset((int(node), int(parent[node])))]] = True
            demand[parent[node]] ^= True
        if not feasible:
            break

    cycles = np.zeros((rank, m), dtype=np.bool_)
    row = 0
    for k in range(m):
        if k in tree:
            continue
        cycles[row, k] = True
        a, b = rows[k], cols[k]
        while a != b:
            if depth[a] < depth[b]:
                a, b = b, a
            cycles[row, edge_of[frozenset((a, int(parent[a])))]] ^= True
            a = int(parent[a])
        row += 1
    if component.size and row != rank:
        msg = f"cycle basis has {row} elements, expected {rank}"
        raise InternalInvariantError(msg)
    return ConfSpace(tuple(nodes), tuple(edges), weights, solution if feasible else None, cycles)


def high_temp_Z(graph: HighTempGraph, sources: Sequence[Point]) -> np.longdouble:
    """``Z(A)``: weighted count of ``Conf(A)``, ghost-row edges weighing 1.

    Zero when no subset has odd degree exactly on ``A``.
    """
    start = time.perf_counter()
    space = conf_space(graph, sources)
    total = np.longdouble(0)
    for subsets in space.chunks():
        total += space.subset_weights(subsets).sum()
    log_performance(logger, "high_temp_Z", (time.perf_counter() - start) * 1000, rank=space.rank, sources=len(sources))
    return total


def high_temp_check(
    domain: LatticeDomain,
    bc: BoundarySpec,
    subsets: Sequence[Sequence[Vertex]],
    tolerance: float = 1e-10,
) -> AuditReport:
    """Compare ``E[sigma_A]`` at the critical point with ratios of ``Z`` sums.

    Even ``A``: ``Z(A)/Z``. Odd ``A``: ``Z(A + ghost next to the plus arc start)/Z``.
    """
    graph = build_high_temp_graph(domain, bc)
    ising = IsingEnumeration(build_model_graph(domain, bc), BETA_CRITICAL)
    z = high_temp_Z(graph, [])
    report = AuditReport("high-temp", tolerance)
    for subset in subsets:
        points = [(int(v[0]), int(v[1])) for v in subset]
        sources = [vertex_point(v) for v in points]
        if len(points) % 2:
            if not bc.plus_arc:
                msg = "odd correlations need a plus arc"
                raise InvalidMarkingError(msg)
            sources.append(graph.ghost_below(bc.plus_arc[0]))
        ratio = high_temp_Z(graph, sources) / z
        report.add(" ".join(f"({x},{y})" for x, y in points), ising.correlation(points), ratio, size=len(points))
    logger.info("high_temp_check_finished", cases=len(report.rows), max_residual=report.max_residual)
    return report


def kappa(direction: complex) -> complex:
    """``(i e/|e|)^(-1/2)`` on the principal branch."""
    unit = direction / abs(direction)
    return complex((1j * unit) ** -0.5)


def _angle(d: Point) -> float:
    return math.atan2(d[1], d[0])


def _turn(d_in: Point, d_out: Point) -> int:
    """Signed turn in eighth-turns, in ``(-4, 4]``."""
    diff = _angle(d_out) - _angle(d_in)
    diff = (diff + math.pi) % (2 * math.pi) - math.pi
    if diff <= -math.pi + 1e-12:
        diff = math.pi
    return round(diff / (math.pi / 4))


def path_winding(edges: Sequence[tuple[Point, Point]], start: Point, end: Point) -> int:
    """Winding in eighth-turns of the path from ``start`` to ``end`` inside ``edges``.

    At every branching the rightmost continuation is taken, which splits the
    subset into one simple path and loops.
    """
    incident: dict[Point, list[int]] = {}
    for k, (a, b) in enumerate(edges):
        incident.setdefault(a, []).append(k)
        incident.setdefault(b, []).append(k)
    used: set[int] = set()
    here = start
    heading: Point | None = None
    winding = 0
    while here != end:
        best: tuple[int, int, Point, Point] | None = None
        for k in incident.get(here, []):
            if k in used:
                continue
            a, b = edges[k]
            there = b if a == here else a
            d = (there[0] - here[0], there[1] - here[1])
            turn = 0 if heading is None else _turn(heading, d)
            if best is None or turn < best[0]:
                best = (turn, k, there, d)
        if best is None:
            msg = f"path from {start} stops at {here} before reaching {end}"
            raise InvalidPointError(msg)
        turn, k, there, d = best
        used.add(k)
        winding += turn
        heading = d
        here = there
    return winding


@dataclass(frozen=True)
class FreeObservableResult:
    value: complex
    ratio_target: float
    residual: float
    sources: tuple[Point, Point]


def fermionic_observable_free(
    graph: HighTempGraph,
    y1: Vertex,
    z: Point,
) -> complex:
    """``F(z)`` for the free-boundary observable sourced at the normal below ``y1``.

    Normalized by ``(sqrt2 - 1)^(3/2) cos(pi/8) Z({y1, ghost})``; defined up to sign.

    Raises:
        InvalidPointError: ``z`` is not a midpoint or corner.
    """
    if z[0] % 4 == 0 and z[1] % 4 == 0:
        msg = f"observable is evaluated at midpoints and corners, got vertex {z}"
        raise InvalidPointError(msg)
    if not graph.ghost_sites:
        msg = "free-boundary observable needs a plus arc for its normalization"
        raise InvalidMarkingError(msg)
    b1 = graph.outward_normal(y1)
    y1p = vertex_point(y1)
    first = complex(y1p[0] - b1[0], y1p[1] - b1[1])
    space = conf_space(graph, [b1, z])
    total = complex(0.0)
    for subsets in space.chunks():
        weights = space.subset_weights(subsets)
        for row, w in zip(subsets, weights):
            chosen = [space.edges[k] for k in np.flatnonzero(row)]
            winding = path_winding(chosen, b1, z)
            total += complex(float(w)) * cmath.exp(-0.5j * winding * math.pi / 4)
    ghost = vertex_point(graph.ghost_sites[0])
    norm = EDGE_WEIGHT**1.5 * math.cos(math.pi / 8) * float(high_temp_Z(graph, [y1p, ghost]))
    return 1j * kappa(-first) * total / norm


def free_observable_check(
    domain: LatticeDomain,
    bc: BoundarySpec,
    y1: Vertex,
    y2: Vertex,
) -> FreeObservableResult:
    """``|F(b2)|`` against ``Z({y1,y2}) / ((sqrt2-1)^(1/2) cos(pi/8) Z({y1, ghost}))``."""
    graph = build_high_temp_graph(domain, bc)
    b1 = graph.outward_normal(y1)
    b2 = graph.outward_normal(y2)
    value = fermionic_observable_free(graph, y1, b2)
    ghost = graph.ghost_below(bc.plus_arc[0])
    target = float(high_temp_Z(graph, [vertex_point(y1), vertex_point(y2)])) / (
        HALF_WEIGHT * math.cos(math.pi / 8) * float(high_temp_Z(graph, [vertex_point(y1), ghost]))
    )
    residual = abs(abs(value) - target)
    logger.info("free_observable_checked", value=abs(value), target=target, residual=residual)
    return FreeObservableResult(value=value, ratio_target=target, residual=residual, sources=(b1, b2))
