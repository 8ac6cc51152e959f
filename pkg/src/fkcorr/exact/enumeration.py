"""Exact Gibbs sums for the Ising model and the random-cluster model.

Both engines enumerate every configuration of a small model graph. FK sums are
split into fixed-size chunks of configuration indices that a thread pool
evaluates with the compiled kernel; chunk results are merged in index order,
so totals do not depend on scheduling.
"""

from __future__ import annotations

import itertools
import math
import time
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import NDArray

from fkcorr import _kernels
from fkcorr.connectivity import EvenClusterEvent, LinkEvent
from fkcorr.core.config import settings
from fkcorr.core.exceptions import CapacityError, ConfigurationError, InvalidMarkingError
from fkcorr.exact.cache import OracleCache
from fkcorr.lattice import (
    BoundaryKind,
    BoundarySpec,
    LatticeDomain,
    ModelGraph,
    Vertex,
    boundary_cycle,
    build_model_graph,
)
from fkcorr.patterns import even_block_partitions, pfaffian
from fkcorr.sampler import BETA_CRITICAL
from fkcorr.utils.logging import get_logger, log_performance


if TYPE_CHECKING:
    from fkcorr.connectivity import Event


logger = get_logger(__name__)

MAX_FK_EDGES = 22
MAX_ISING_VERTICES = 20
CHUNK_BITS = 16


@dataclass(frozen=True, eq=False)
class FKChunk:
    """Configurations ``start .. start + len(weights) - 1`` of an FK enumeration."""

    start: int
    labels: NDArray[np.int32]
    clusters: NDArray[np.int32]
    weights: NDArray[np.float64]
    n_edges: int

    @cached_property
    def bonds(self) -> NDArray[np.bool_]:
        index = np.arange(self.start, self.start + self.weights.size, dtype=np.int64)
        bits = np.arange(self.n_edges, dtype=np.int64)
        result: NDArray[np.bool_] = ((index[:, None] >> bits) & 1).astype(np.bool_)
        return result


@dataclass(eq=False)
class FKEnumeration:
    """All ``2**m`` bond configurations of ``graph`` with weight
    ``p**o (1-p)**c q**k``, ``k`` counted after wiring identification."""

    graph: ModelGraph
    p: float
    q: float = 2.0
    threads: int = field(default_factory=lambda: settings.threads)

    def __post_init__(self) -> None:
        if self.graph.n_edges > MAX_FK_EDGES:
            msg = f"FK enumeration capped at {MAX_FK_EDGES} edges, graph has {self.graph.n_edges}"
            raise CapacityError(msg)
        if not 0.0 <= self.p <= 1.0 or self.q <= 0:
            msg = f"invalid FK parameters p={self.p}, q={self.q}"
            raise ConfigurationError(msg)

    @property
    def n_configurations(self) -> int:
        return 1 << self.graph.n_edges

    def _chunk(self, start: int, count: int) -> FKChunk:
        labels, clusters, weights = _kernels.fk_chunk(
            self.graph.n_nodes,
            self.graph.edges,
            self.graph.node_of,
            float(self.p),
            float(self.q),
            start,
            count,
        )
        return FKChunk(start, labels, clusters, weights, self.graph.n_edges)

    def chunks(self) -> Iterator[FKChunk]:
        """Chunks in index order; each group of ``threads`` chunks runs in parallel."""
        total = self.n_configurations
        size = min(1 << CHUNK_BITS, total)
        starts = list(range(0, total, size))
        workers = max(1, min(self.threads, len(starts)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for g in range(0, len(starts), workers):
                group = starts[g : g + workers]
                yield from pool.map(lambda s: self._chunk(s, min(size, total - s)), group)

    def sums(self, events: Sequence[Event]) -> tuple[np.longdouble, list[np.longdouble]]:
        """Partition function and the weight of each event, in extended precision."""
        start = time.perf_counter()
        z = np.longdouble(0)
        numerators = [np.longdouble(0) for _ in events]
        for chunk in self.chunks():
            weights = chunk.weights.astype(np.longdouble)
            z += weights.sum()
            for k, event in enumerate(events):
                mask = event.evaluate(self.graph, chunk.labels, chunk.bonds)
                numerators[k] += weights[mask].sum()
        log_performance(
            logger,
            "enumerate_fk",
            (time.perf_counter() - start) * 1000,
            edges=self.graph.n_edges,
            events=len(events),
        )
        return z, numerators

    @cached_property
    def partition_function(self) -> np.longdouble:
        z, _ = self.sums([])
        return z

    def probabilities(self, events: Sequence[Event]) -> dict[str, np.longdouble]:
        z, numerators = self.sums(events)
        return {event.descriptor_id: num / z for event, num in zip(events, numerators)}

    def probability(self, event: Event) -> np.longdouble:
        return self.probabilities([event])[event.descriptor_id]


def enumerate_fk(
    domain: LatticeDomain,
    bc: BoundarySpec | None,
    p: float,
    q: float,
    events: Sequence[Event],
    threads: int | None = None,
    cache: OracleCache | None = None,
) -> dict[str, np.longdouble]:
    """Exact probabilities of ``events`` under the random-cluster measure.

    Results go through ``cache`` (default: ``settings.cache_dir``, disabled
    when unset) keyed by the model graph hash.

    Raises:
        CapacityError: More than 22 edges.
    """
    graph = build_model_graph(domain, bc)
    cache = cache or OracleCache(settings.cache_dir)
    query = {"engine": "fk", "p": float(p), "q": float(q), "events": sorted(e.descriptor_id for e in events)}

    def compute() -> dict[str, float]:
        engine = FKEnumeration(graph, p, q, threads=threads or settings.threads)
        return {k: float(v) for k, v in engine.probabilities(events).items()}

    values = cache.get_or_compute(graph.graph_hash, query, compute)
    return {k: np.longdouble(v) for k, v in values.items()}


@dataclass(eq=False)
class IsingEnumeration:
    """Ising Gibbs measure at inverse temperature ``beta`` on a model graph.

    Ghost nodes and vertices fused to them are fixed to ``+1``; ghost edges
    act as boundary field terms.
    """

    graph: ModelGraph
    beta: float

    def __post_init__(self) -> None:
        free = self.free_nodes
        if free.size > MAX_ISING_VERTICES:
            msg = f"Ising enumeration capped at {MAX_ISING_VERTICES} free spins, graph has {free.size}"
            raise CapacityError(msg)
        if not math.isfinite(self.beta) or self.beta < 0:
            msg = f"beta must be finite and nonnegative, got {self.beta}"
            raise ConfigurationError(msg)

    @cached_property
    def free_nodes(self) -> NDArray[np.intp]:
        g = self.graph
        pinned = g.is_ghost.copy()
        pinned[: g.n_vertices] |= g.node_of[: g.n_vertices] != np.arange(g.n_vertices)
        return np.flatnonzero(~pinned)

    @cached_property
    def spins(self) -> NDArray[np.int8]:
        """Every spin assignment, one row per state."""
        n_free = self.free_nodes.size
        states = np.arange(1 << n_free, dtype=np.int64)
        bits = ((states[:, None] >> np.arange(n_free)) & 1).astype(np.int8)
        table = np.ones((states.size, self.graph.n_nodes), dtype=np.int8)
        table[:, self.free_nodes] = 1 - 2 * bits
        return table

    @cached_property
    def weights(self) -> NDArray[np.longdouble]:
        start = time.perf_counter()
        edges = self.graph.edges
        energy = (
            (self.spins[:, edges[:, 0]].astype(np.int32) * self.spins[:, edges[:, 1]]).sum(axis=1)
            if edges.size
            else np.zeros(self.spins.shape[0], dtype=np.int32)
        )
        shifted = (energy - energy.max()).astype(np.longdouble)
        result: NDArray[np.longdouble] = np.exp(np.longdouble(self.beta) * shifted)
        log_performance(
            logger,
            "enumerate_ising",
            (time.perf_counter() - start) * 1000,
            free_spins=int(self.free_nodes.size),
        )
        return result

    @cached_property
    def partition_function(self) -> np.longdouble:
        return self.weights.sum()

    def correlation(self, points: Sequence[Sequence[int]]) -> np.longdouble:
        """``E[sigma_A]`` for the vertices ``A = points``."""
        ids = [self.graph.domain.vertex_id(p) for p in points]
        product = self.spins[:, ids].astype(np.int64).prod(axis=1) if ids else np.ones(self.spins.shape[0])
        result: np.longdouble = (self.weights * product).sum() / self.partition_function
        return result


def enumerate_ising(
    domain: LatticeDomain,
    bc: BoundarySpec | None,
    beta: float,
    subsets: Sequence[Sequence[Sequence[int]]],
    cache: OracleCache | None = None,
) -> dict[tuple[Vertex, ...], np.longdouble]:
    """Exact ``E[sigma_A]`` for each ``A`` in ``subsets``.

    Raises:
        CapacityError: More than 20 unpinned spins.
    """
    graph = build_model_graph(domain, bc)
    cache = cache or OracleCache(settings.cache_dir)
    keys = [tuple((int(v[0]), int(v[1])) for v in subset) for subset in subsets]
    query = {"engine": "ising", "beta": float(beta), "subsets": [[list(v) for v in key] for key in keys]}

    def compute() -> list[float]:
        engine = IsingEnumeration(graph, beta)
        return [float(engine.correlation(key)) for key in keys]

    values = cache.get_or_compute(graph.graph_hash, query, compute)
    return {key: np.longdouble(v) for key, v in zip(keys, values)}


@dataclass
class AuditReport:
    """Residuals of one exact identity over a family of test cases."""

    name: str
    tolerance: float
    rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((float(r["residual"]) for r in self.rows), default=0.0)

    @property
    def violations(self) -> int:
        """Configurations breaking an event identity, summed over rows."""
        return sum(int(r.get("event_violations", 0)) for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance and self.violations == 0

    def add(self, case: str, lhs: float, rhs: float, **extra: Any) -> None:
        self.rows.append(
            {"case": case, "lhs": float(lhs), "rhs": float(rhs), "residual": abs(float(lhs) - float(rhs)), **extra}
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "violations": self.violations,
            "passed": self.passed,
            "rows": self.rows,
        }


def _label(points: Sequence[Vertex]) -> str:
    return " ".join(f"({x},{y})" for x, y in points)


def es_coupling_audit(
    domain: LatticeDomain,
    bc: BoundarySpec | None = None,
    subsets: Sequence[Sequence[Vertex]] | None = None,
    beta: float = BETA_CRITICAL,
    tolerance: float = 1e-12,
) -> AuditReport:
    """Compare ``E[sigma_A]`` with FK connection probabilities.

    Under free boundary conditions the right side is the sum of ``P[G(Q;A)]``
    over partitions ``Q`` with even blocks. With ghosts, clusters touching a
    ghost may hold any number of points and odd ``A`` is allowed.
    """
    bc = bc or BoundarySpec.free()
    graph = build_model_graph(domain, bc)
    ising = IsingEnumeration(graph, beta)
    fk = FKEnumeration(graph, -math.expm1(-2.0 * beta), 2.0)
    if subsets is None:
        subsets = [tuple(c) for c in itertools.combinations(domain.vertices, 2)]
        subsets += [tuple(c) for c in itertools.combinations(domain.vertices, 4)]

    report = AuditReport("es-coupling", tolerance)
    ghosts = bool(graph.ghost_nodes)
    groups: list[tuple[tuple[Vertex, ...], list[Event]]] = []
    for subset in subsets:
        points = tuple((int(v[0]), int(v[1])) for v in subset)
        if ghosts:
            groups.append((points, [EvenClusterEvent(points)]))
        else:
            if len(points) % 2:
                msg = f"odd set {points} has zero correlation under free boundary conditions"
                raise ConfigurationError(msg)
            groups.append((points, [LinkEvent(points, q) for q in even_block_partitions(len(points))]))

    flat = [event for _, events in groups for event in events]
    z, numerators = fk.sums(flat)
    offset = 0
    for points, events in groups:
        rhs = sum(numerators[offset : offset + len(events)], np.longdouble(0)) / z
        offset += len(events)
        report.add(_label(points), ising.correlation(points), rhs, size=len(points))
    logger.info("es_audit_finished", bc=bc.kind.value, cases=len(report.rows), max_residual=report.max_residual)
    return report


def walk_order(domain: LatticeDomain, points: Sequence[Vertex], after: Vertex | None = None) -> list[Vertex]:
    """Sort boundary points counterclockwise by first visit of the boundary walk,
    starting just past ``after`` when given."""
    walk = boundary_cycle(domain)
    first = {}
    for i, v in enumerate(walk):
        first.setdefault(v, i)
    for v in points:
        if v not in first:
            msg = f"{v} is not a boundary vertex"
            raise InvalidMarkingError(msg)
    shift = first[after] + 1 if after is not None else 0
    n = len(walk)
    return sorted(points, key=lambda v: (first[v] - shift) % n)


def boundary_pfaffian_residual(
    domain: LatticeDomain,
    points: Sequence[Vertex],
    beta: float = BETA_CRITICAL,
) -> tuple[float, float]:
    """Free boundary: ``E[sigma_A]`` and the Pfaffian of the two-point matrix,
    points taken in boundary order."""
    ordered = walk_order(domain, [(int(v[0]), int(v[1])) for v in points])
    ising = IsingEnumeration(build_model_graph(domain, BoundarySpec.free()), beta)
    n = len(ordered)
    matrix = np.zeros((n, n))
    for j, k in itertools.combinations(range(n), 2):
        matrix[j, k] = float(ising.correlation([ordered[j], ordered[k]]))
        matrix[k, j] = -matrix[j, k]
    return float(ising.correlation(ordered)), pfaffian(matrix)


def mixed_pfaffian_residual(
    domain: LatticeDomain,
    points: Sequence[Vertex],
    plus_start: Vertex,
    plus_end: Vertex,
    beta: float = BETA_CRITICAL,
) -> tuple[float, float]:
    """Mixed free/plus boundary: ``E[sigma_A]`` against its Pfaffian form.

    Points are ordered counterclockwise starting after the plus arc. For odd
    ``N`` the ghost row joins as an extra last point whose two-point entries
    are the one-point functions.
    """
    bc = BoundarySpec.mixed_free_plus(domain, points, plus_start, plus_end)
    ordered = walk_order(domain, list(bc.marked_points[:-2]), after=bc.plus_arc[-1])
    ising = IsingEnumeration(build_model_graph(domain, bc), beta)
    n = len(ordered)
    size = n + (n % 2)
    matrix = np.zeros((size, size))
    for j, k in itertools.combinations(range(n), 2):
        matrix[j, k] = float(ising.correlation([ordered[j], ordered[k]]))
    if n % 2:
        for j in range(n):
            matrix[j, n] = float(ising.correlation([ordered[j]]))
    matrix -= matrix.T
    return float(ising.correlation(ordered)), pfaffian(matrix)


def pfaffian_audit(
    cases: Sequence[tuple[str, LatticeDomain, Sequence[Vertex], tuple[Vertex, Vertex] | None]],
    beta: float = BETA_CRITICAL,
    tolerance: float = 1e-10,
) -> AuditReport:
    """Run free and mixed Pfaffian identities; ``None`` as plus arc means free."""
    report = AuditReport("pfaffian", tolerance)
    for name, domain, points, plus in cases:
        if plus is None:
            lhs, rhs = boundary_pfaffian_residual(domain, points, beta)
            kind = BoundaryKind.FREE.value
        else:
            lhs, rhs = mixed_pfaffian_residual(domain, points, plus[0], plus[1], beta)
            kind = BoundaryKind.MIXED_FREE_PLUS.value
        report.add(name, lhs, rhs, bc=kind, points=len(points))
    return report
