"""Swendsen-Wang sampling of critical FK-Ising and Ising configurations.

Every sweep draws its uniforms from a counter-based Philox stream keyed by
``(seed, chain)`` with the sweep index in the counter, so chains are
independent, reproducible and can be split across threads freely.
"""

from __future__ import annotations

import math
import time
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from fkcorr import _kernels
from fkcorr.connectivity import ClusterLabeling, label_bonds
from fkcorr.core.exceptions import ConfigurationError
from fkcorr.lattice import (
    BoundarySpec,
    LatticeDomain,
    ModelGraph,
    build_model_graph,
    check_compatible,
)
from fkcorr.utils.logging import get_logger, log_performance


logger = get_logger(__name__)

P_CRITICAL = 2.0 - math.sqrt(2.0)
BETA_CRITICAL = 0.5 * math.log(1.0 + math.sqrt(2.0))
_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Random-cluster parameters with the matching Ising inverse temperature.

    ``p = 1 - exp(-2 beta)`` always holds; ``critical`` pins both to the
    self-dual point of ``q = 2``.
    """

    p: float
    beta: float
    q: float = 2.0
    critical: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            msg = f"edge weight p must lie in [0, 1], got {self.p}"
            raise ConfigurationError(msg)
        if self.beta < 0:
            msg = f"inverse temperature must be nonnegative, got {self.beta}"
            raise ConfigurationError(msg)
        if self.q != 2.0:
            msg = f"only q = 2 is supported by the spin engine, got {self.q}"
            raise ConfigurationError(msg)
        expected = 1.0 if math.isinf(self.beta) else -math.expm1(-2.0 * self.beta)
        if abs(self.p - expected) > _CONSISTENCY_TOL:
            msg = f"p={self.p} does not match 1 - exp(-2 beta) = {expected} for beta={self.beta}"
            raise ConfigurationError(msg)
        if self.critical and (
            abs(self.p - P_CRITICAL) > _CONSISTENCY_TOL or abs(self.beta - BETA_CRITICAL) > _CONSISTENCY_TOL
        ):
            msg = "critical flag set on non-critical parameters"
            raise ConfigurationError(msg)

    @classmethod
    def critical_point(cls) -> ModelParams:
        """``p_c = sqrt(2)/(1 + sqrt(2)) = 2 - sqrt(2)``, ``beta_c = ln(1 + sqrt(2))/2``."""
        return cls(p=P_CRITICAL, beta=BETA_CRITICAL, critical=True)

    @classmethod
    def from_beta(cls, beta: float) -> ModelParams:
        return cls(p=-math.expm1(-2.0 * beta), beta=beta)

    @classmethod
    def from_p(cls, p: float) -> ModelParams:
        beta = math.inf if p >= 1.0 else -0.5 * math.log1p(-p)
        return cls(p=p, beta=beta)


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    """``+-1`` per node of the model graph; ghost nodes and fused arcs hold ``+1``."""

    spins: NDArray[np.int8]
    graph: ModelGraph

    @property
    def bc(self) -> BoundarySpec:
        return self.graph.bc

    @property
    def domain_spins(self) -> NDArray[np.int8]:
        return self.spins[: self.graph.n_vertices]

    def spin_at(self, v: tuple[int, int]) -> int:
        return int(self.spins[self.graph.domain.vertex_id(v)])


@dataclass(frozen=True, eq=False)
class BondConfiguration:
    """Open/closed state per edge of the model graph (domain edges first).

    Sampled configurations also carry the coupled spins and the cluster
    labeling computed during the update.
    """

    open: NDArray[np.bool_]
    graph: ModelGraph
    spins: NDArray[np.int8] | None = None
    labeling: ClusterLabeling | None = None
    sweep: int = -1
    _labels: list[ClusterLabeling] = field(default_factory=list, repr=False)

    @property
    def bc(self) -> BoundarySpec:
        return self.graph.bc

    @property
    def n_open(self) -> int:
        return int(self.open.sum())

    @property
    def n_closed(self) -> int:
        return self.graph.n_edges - self.n_open

    def clusters(self) -> ClusterLabeling:
        """Labeling of this configuration, computed on first use."""
        if self.labeling is not None:
            return self.labeling
        if not self._labels:
            self._labels.append(label_bonds(self.graph, self.open))
        return self._labels[0]

    @property
    def cluster_count(self) -> int:
        return self.clusters().cluster_count


def sweep_rng(seed: int, chain: int, sweep: int) -> np.random.Generator:
    """Generator for one sweep of one chain.

    Philox key is ``(seed, chain)``; the sweep index occupies the top word of
    the 256-bit counter, leaving 2**192 draws per sweep.
    """
    if not 0 <= seed < 2**64 or not 0 <= chain < 2**64 or sweep < 0:
        msg = f"seed and chain must be unsigned 64-bit, sweep nonnegative (got {seed}, {chain}, {sweep})"
        raise ConfigurationError(msg)
    return np.random.Generator(np.random.Philox(key=(seed << 64) | chain, counter=sweep << 192))


def _pinned_nodes(graph: ModelGraph) -> NDArray[np.bool_]:
    pinned = graph.is_ghost.copy()
    pinned[: graph.n_vertices] |= graph.node_of[: graph.n_vertices] != np.arange(graph.n_vertices)
    return pinned


def _check_spin_graph(graph: ModelGraph) -> None:
    if len(graph.bc.wired_arcs) > 1:
        msg = "spin sampling supports at most one wired arc"
        raise ConfigurationError(msg)


def initial_spins(graph: ModelGraph, rng: np.random.Generator) -> SpinConfiguration:
    """Independent fair spins, ``+1`` on ghosts and wired arcs."""
    _check_spin_graph(graph)
    spins = np.where(rng.random(graph.n_nodes) < 0.5, 1, -1).astype(np.int8)
    spins[_pinned_nodes(graph)] = 1
    return SpinConfiguration(spins=spins, graph=graph)


def _sw_step(
    graph: ModelGraph,
    spins: NDArray[np.int8],
    p: float,
    rng: np.random.Generator,
) -> tuple[NDArray[np.int8], NDArray[np.bool_], NDArray[np.int32]]:
    u_edges = rng.random(graph.n_edges)
    u_flip = rng.random(graph.n_nodes)
    new_spins, bonds, labels = _kernels.sw_update(
        graph.n_nodes, graph.edges, spins, graph.node_of, graph.is_ghost, p, u_edges, u_flip
    )
    return new_spins, bonds, labels


def cluster_sweep(
    state: SpinConfiguration,
    params: ModelParams,
    rng: np.random.Generator,
) -> SpinConfiguration:
    """One Swendsen-Wang update of the whole lattice.

    Aligned edges open with probability ``p``; each resulting cluster is
    recoloured by a fair coin unless it touches a ghost, which keeps it ``+1``.
    """
    _check_spin_graph(state.graph)
    new_spins, _, _ = _sw_step(state.graph, state.spins, params.p, rng)
    return SpinConfiguration(spins=new_spins, graph=state.graph)


def es_bonds_from_spins(
    state: SpinConfiguration,
    params: ModelParams,
    rng: np.random.Generator,
) -> BondConfiguration:
    """Open each edge with aligned endpoints independently with probability ``p``."""
    graph = state.graph
    a = state.spins[graph.edges[:, 0]]
    b = state.spins[graph.edges[:, 1]]
    open_edges = (a == b) & (rng.random(graph.n_edges) < params.p)
    return BondConfiguration(open=open_edges, graph=graph, spins=state.spins)


def run_chain(
    graph: ModelGraph,
    params: ModelParams,
    n_sweeps: int,
    burn_in: int,
    seed: int,
    chain: int = 0,
    thin: int = 1,
) -> Iterator[BondConfiguration]:
    """Sweep a chain on ``graph``; see :func:`sample_fk`."""
    if n_sweeps < 1 or burn_in < 0 or thin < 1:
        msg = f"need n_sweeps >= 1, burn_in >= 0, thin >= 1 (got {n_sweeps}, {burn_in}, {thin})"
        raise ConfigurationError(msg)
    state = initial_spins(graph, sweep_rng(seed, chain, 0))
    spins = state.spins
    start = time.perf_counter()
    total = burn_in + n_sweeps
    for sweep in range(total):
        spins, bonds, labels = _sw_step(graph, spins, params.p, sweep_rng(seed, chain, sweep + 1))
        retained = sweep - burn_in
        if retained >= 0 and retained % thin == 0:
            labeling = ClusterLabeling(
                labels=labels,
                cluster_count=int(np.unique(labels).size),
                graph=graph,
            )
            yield BondConfiguration(open=bonds, graph=graph, spins=spins, labeling=labeling, sweep=retained)
    log_performance(
        logger,
        "run_chain",
        (time.perf_counter() - start) * 1000,
        chain=chain,
        sweeps=total,
        vertices=graph.n_vertices,
    )


def sample_fk(
    domain: LatticeDomain,
    bc: BoundarySpec,
    params: ModelParams,
    n_sweeps: int,
    burn_in: int,
    seed: int,
    chain: int = 0,
    thin: int = 1,
) -> Iterator[BondConfiguration]:
    """Stream FK configurations coupled to Ising spins.

    Each retained sweep is one Swendsen-Wang update; the bonds it opened and
    the spins it produced form an Edwards-Sokal pair. Identical arguments give
    identical streams.

    Raises:
        ConfigurationError: ``bc`` does not fit ``domain`` or the counts are invalid.
    """
    check_compatible(domain, bc)
    graph = build_model_graph(domain, bc)
    logger.info(
        "chain_started",
        chain=chain,
        seed=seed,
        bc=bc.kind.value,
        vertices=domain.n_vertices,
        sweeps=n_sweeps,
        burn_in=burn_in,
    )
    return run_chain(graph, params, n_sweeps, burn_in, seed, chain=chain, thin=thin)
