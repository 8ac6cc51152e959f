"""Monte Carlo estimates: batch means, autocorrelation, exponent fits,
ratio constancy and the spatial-mixing probe."""

from __future__ import annotations

import math
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from fkcorr.connectivity import (
    EdgeOpenEvent,
    InnerCrossingEvent,
    LargestClusterObservable,
    SpinProductObservable,
)
from fkcorr.core.exceptions import ConfigurationError, InsufficientDataError, LogDomainError
from fkcorr.exact.enumeration import MAX_FK_EDGES, FKEnumeration, IsingEnumeration
from fkcorr.lattice import BoundarySpec, LatticeDomain, ModelGraph, build_box, build_model_graph, check_compatible
from fkcorr.sampler import P_CRITICAL, BondConfiguration, ModelParams, run_chain
from fkcorr.utils.logging import get_logger, log_performance


if TYPE_CHECKING:
    from fkcorr.connectivity import Event
    from fkcorr.experiment import ExperimentConfig, Observable


logger = get_logger(__name__)

MIN_BATCHES = 20
DEFAULT_MIN_SCALE = 8.0
CHI2_THRESHOLD = 0.01


@dataclass(frozen=True)
class EstimateRecord:
    observable_id: str
    value: float
    stderr: float
    n_samples: int
    tau_int: float
    config_hash: str

    def to_row(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def scale(self) -> float | None:
        """The ladder scale of ids shaped ``<family>@<scale>``."""
        _, _, tail = self.observable_id.rpartition("@")
        try:
            return float(tail) if "@" in self.observable_id else None
        except ValueError:
            return None

    @property
    def family(self) -> str:
        return self.observable_id.rpartition("@")[0] or self.observable_id


def batch_means(series: ArrayLike, n_batches: int = MIN_BATCHES) -> tuple[float, float, NDArray[np.float64]]:
    """Mean, batch-mean standard error and the batch means themselves.

    Trailing samples that do not fill a batch are dropped from the batches
    but kept in the mean.

    Raises:
        InsufficientDataError: Fewer than 20 batches or fewer samples than batches.
    """
    x = np.asarray(series, dtype=np.float64)
    if n_batches < MIN_BATCHES:
        msg = f"need at least {MIN_BATCHES} batches, got {n_batches}"
        raise InsufficientDataError(msg)
    if x.size < n_batches:
        msg = f"{x.size} samples cannot fill {n_batches} batches"
        raise InsufficientDataError(msg)
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    stderr = float(means.std(ddof=1) / math.sqrt(n_batches))
    return float(x.mean()), stderr, means


def naive_stderr(series: ArrayLike) -> float:
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        msg = "need at least two samples"
        raise InsufficientDataError(msg)
    return float(x.std(ddof=1) / math.sqrt(x.size))


def autocorrelation(series: ArrayLike) -> NDArray[np.float64]:
    """Normalized autocorrelation function by FFT; ``rho[0] == 1``."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, n=size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=size)[:n]
    if acov[0] <= 0:
        return np.zeros(n)
    rho: NDArray[np.float64] = acov / acov[0]
    return rho


def integrated_autocorrelation(series: ArrayLike, window_factor: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window.

    ``tau = 1/2 + sum_{t=1}^{M} rho(t)`` for the smallest ``M >= c tau(M)``.
    A constant series has ``tau = 1/2``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        msg = "need at least two samples for an autocorrelation time"
        raise InsufficientDataError(msg)
    rho = autocorrelation(x)
    if not rho.any():
        return 0.5
    taus = 0.5 + np.cumsum(rho[1:])
    window = np.arange(1, x.size)
    ok = window >= window_factor * taus
    m = int(np.argmax(ok)) if ok.any() else x.size - 2
    return float(max(taus[m], 0.5))


def summarize(
    observable_id: str,
    series: ArrayLike,
    config_hash: str = "",
    n_batches: int = MIN_BATCHES,
) -> EstimateRecord:
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        msg = f"no retained samples for {observable_id}"
        raise InsufficientDataError(msg)
    mean, stderr, _ = batch_means(x, n_batches)
    return EstimateRecord(
        observable_id=observable_id,
        value=mean,
        stderr=stderr,
        n_samples=int(x.size),
        tau_int=integrated_autocorrelation(x),
        config_hash=config_hash,
    )


def measure(observable: Observable, bonds: BondConfiguration) -> float:
    """Value of one observable on one sampled configuration."""
    if isinstance(observable, SpinProductObservable):
        if bonds.spins is None:
            msg = "spin observables need sampled spins"
            raise ConfigurationError(msg)
        return float(observable.evaluate_spins(bonds.graph, bonds.spins))
    labeling = bonds.clusters()
    if isinstance(observable, LargestClusterObservable):
        return float(observable.measure(labeling))
    return float(observable.evaluate(bonds.graph, labeling.labels, bonds.open))


def measure_chain(
    graph: ModelGraph,
    params: ModelParams,
    observables: Mapping[str, Observable],
    n_sweeps: int,
    burn_in: int,
    seed: int,
    chain: int = 0,
    thin: int = 1,
) -> dict[str, NDArray[np.float64]]:
    """Time series of every observable over the retained sweeps of one chain."""
    ids = sorted(observables)
    rows: list[list[float]] = []
    for bonds in run_chain(graph, params, n_sweeps, burn_in, seed, chain=chain, thin=thin):
        rows.append([measure(observables[k], bonds) for k in ids])
    table = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(ids))
    return {k: table[:, j] for j, k in enumerate(ids)}


def estimate_burn_in(
    graph: ModelGraph,
    params: ModelParams,
    seed: int,
    pilot_sweeps: int = 500,
    chain: int = 0,
) -> int:
    """Ten integrated autocorrelation times of the largest-cluster size on a pilot chain."""
    series = measure_chain(graph, params, {"largest_cluster": LargestClusterObservable()}, pilot_sweeps, 0, seed, chain)
    tau = integrated_autocorrelation(series["largest_cluster"])
    burn_in = max(1, math.ceil(10 * tau))
    logger.info("burn_in_estimated", tau_int=round(tau, 3), burn_in=burn_in, pilot_sweeps=pilot_sweeps)
    return burn_in


def estimate_event_probability(config: ExperimentConfig, event: Event, chain: int = 0) -> EstimateRecord:
    """Fraction of retained sweeps on which ``event`` occurs, with batch-mean error.

    Raises:
        InsufficientDataError: Fewer retained sweeps than batches.
    """
    domain, bc, _ = config.build()
    graph = build_model_graph(domain, bc)
    params = config.model_params()
    burn_in = config.burn_in
    if burn_in is None:
        burn_in = estimate_burn_in(graph, params, config.seed, config.pilot_sweeps, chain)
    series = measure_chain(
        graph, params, {event.descriptor_id: event}, config.sweeps, burn_in, config.seed, chain, config.thinning
    )
    return summarize(event.descriptor_id, series[event.descriptor_id], config.config_hash(), config.n_batches)


@dataclass(frozen=True)
class FitResult:
    """Log-log slope with its propagated error."""

    slope: float
    slope_error: float
    intercept: float
    chi2: float
    dof: int
    p_value: float
    scales: tuple[float, ...]
    family: str = ""
    dropped: tuple[float, ...] = ()

    @property
    def window(self) -> tuple[float, float]:
        return (min(self.scales), max(self.scales))

    def to_json(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "slope": self.slope,
            "slope_error": self.slope_error,
            "intercept": self.intercept,
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
            "window": list(self.window),
            "scales": list(self.scales),
            "dropped": list(self.dropped),
        }


def fit_exponent(points: Sequence[tuple[float, float, float]], family: str = "") -> FitResult:
    """Weighted least squares of ``log estimate`` on ``log scale``.

    Weights are ``estimate / error``. When every error is zero the fit is
    ordinary least squares and the slope error comes from the residuals.

    Raises:
        InsufficientDataError: Fewer than two scales.
        LogDomainError: A scale or estimate is not positive.
    """
    if len(points) < 2:
        msg = f"need at least two scales to fit a slope, got {len(points)}"
        raise InsufficientDataError(msg)
    arr = np.asarray(points, dtype=np.float64)
    scales, values, errors = arr[:, 0], arr[:, 1], arr[:, 2]
    if (scales <= 0).any() or (values <= 0).any():
        msg = f"log-log fit needs positive scales and estimates, got {arr[:, :2].tolist()}"
        raise LogDomainError(msg)
    if (errors < 0).any():
        msg = "errors must be nonnegative"
        raise LogDomainError(msg)
    x, y = np.log(scales), np.log(values)
    n = x.size
    dof = n - 2
    if (errors == 0).any():
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        sxx = float(((x - x.mean()) ** 2).sum())
        slope_error = math.sqrt(float((resid**2).sum()) / dof / sxx) if dof > 0 else 0.0
        chi2 = 0.0
    else:
        sigma = errors / values
        coeffs, cov = np.polyfit(x, y, 1, w=1.0 / sigma, cov="unscaled")
        slope, intercept = coeffs
        slope_error = math.sqrt(float(cov[0, 0]))
        chi2 = float((((y - (slope * x + intercept)) / sigma) ** 2).sum())
    p_value = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    return FitResult(
        slope=float(slope),
        slope_error=slope_error,
        intercept=float(intercept),
        chi2=chi2,
        dof=dof,
        p_value=p_value,
        scales=tuple(float(s) for s in scales),
        family=family,
    )


def fit_family(
    records: Iterable[EstimateRecord],
    family: str,
    min_scale: float = DEFAULT_MIN_SCALE,
    p_threshold: float = CHI2_THRESHOLD,
) -> FitResult:
    """Fit the ``<family>@<scale>`` records at scales ``>= min_scale``.

    If the chi-square p-value falls below ``p_threshold`` and more than three
    scales remain, the smallest scale is dropped and the fit repeated.

    Raises:
        InsufficientDataError: Fewer than three scales in the window.
    """
    rows = sorted(
        (r.scale, r.value, r.stderr)
        for r in records
        if r.family == family and r.scale is not None and r.scale >= min_scale
    )
    if len(rows) < 3:
        msg = f"family {family!r} has {len(rows)} scales >= {min_scale:g}, need 3"
        raise InsufficientDataError(msg)
    dropped: list[float] = []
    fit = fit_exponent(rows, family)  # type: ignore[arg-type]
    while fit.p_value < p_threshold and len(rows) > 3:
        dropped.append(float(rows[0][0]))  # type: ignore[arg-type]
        rows = rows[1:]
        fit = fit_exponent(rows, family)  # type: ignore[arg-type]
    if dropped:
        fit = replace(fit, dropped=tuple(dropped))
    logger.info(
        "family_fitted",
        family=family,
        slope=round(fit.slope, 5),
        slope_error=round(fit.slope_error, 5),
        p_value=round(fit.p_value, 4),
        dropped=dropped,
    )
    return fit


@dataclass(frozen=True)
class RatioDefinition:
    """``numerator / (prod denominators)^power`` for one geometry.

    The factorization ratio of a triangle is ``P(z1,z2,z3) / sqrt(P12 P13 P23)``.
    """

    name: str
    numerator: str
    denominators: tuple[str, ...]
    power: float = 0.5


@dataclass(frozen=True)
class ConstancyResult:
    ratios: tuple[tuple[str, float, float], ...]
    common: float
    common_error: float
    chi2: float
    dof: int
    p_value: float

    def to_json(self) -> dict[str, Any]:
        return {
            "ratios": [{"geometry": n, "value": v, "error": e} for n, v, e in self.ratios],
            "common": self.common,
            "common_error": self.common_error,
            "chi2": self.chi2,
            "dof": self.dof,
            "p_value": self.p_value,
        }


def ratio_value(records: Mapping[str, EstimateRecord], definition: RatioDefinition) -> tuple[float, float]:
    """Ratio and its first-order propagated error."""
    try:
        num = records[definition.numerator]
        dens = [records[d] for d in definition.denominators]
    except KeyError as exc:
        msg = f"ratio {definition.name}: no estimate for {exc.args[0]}"
        raise InsufficientDataError(msg) from exc
    if num.value <= 0 or any(d.value <= 0 for d in dens):
        msg = f"ratio {definition.name}: estimates must be positive"
        raise LogDomainError(msg)
    value = num.value / math.prod(d.value for d in dens) ** definition.power
    rel2 = (num.stderr / num.value) ** 2 + definition.power**2 * sum((d.stderr / d.value) ** 2 for d in dens)
    return value, value * math.sqrt(rel2)


def ratio_constancy(
    records: Mapping[str, EstimateRecord] | Iterable[EstimateRecord],
    definitions: Sequence[RatioDefinition],
) -> ConstancyResult:
    """Per-geometry ratios and the chi-square of a common weighted mean.

    Raises:
        InsufficientDataError: Fewer than three geometries, a missing estimate
            or a zero ratio error.
    """
    if not isinstance(records, Mapping):
        records = {r.observable_id: r for r in records}
    if len(definitions) < 3:
        msg = f"constancy needs at least three geometries, got {len(definitions)}"
        raise InsufficientDataError(msg)
    rows = [(d.name, *ratio_value(records, d)) for d in definitions]
    values = np.asarray([r[1] for r in rows])
    errors = np.asarray([r[2] for r in rows])
    if (errors <= 0).any():
        msg = "every ratio needs a positive error for a constancy test"
        raise InsufficientDataError(msg)
    w = 1.0 / errors**2
    common = float((w * values).sum() / w.sum())
    chi2 = float((((values - common) / errors) ** 2).sum())
    dof = len(rows) - 1
    return ConstancyResult(
        ratios=tuple((n, float(v), float(e)) for n, v, e in rows),
        common=common,
        common_error=float(1.0 / math.sqrt(w.sum())),
        chi2=chi2,
        dof=dof,
        p_value=float(stats.chi2.sf(chi2, dof)),
    )


@dataclass(frozen=True)
class MixingResult:
    """``|mu_pi(A) - mu_tau(A)| / mu_pi(A)`` with its error; exact results have error 0."""

    discrepancy: float
    error: float
    prob_pi: float
    prob_tau: float
    inner: int
    outer: int
    exact: bool = False
    details: dict[str, Any] = field(default_factory=dict)


def _discrepancy(a: float, sa: float, b: float, sb: float) -> tuple[float, float]:
    if a <= 0:
        msg = "event has zero probability under the reference boundary condition"
        raise InsufficientDataError(msg)
    d = abs(a - b) / a
    err = math.sqrt((sa**2 + sb**2) / a**2 + ((a - b) * sa / a**2) ** 2)
    return d, err


def _named_bc(domain: LatticeDomain, name: str | BoundarySpec) -> BoundarySpec:
    if isinstance(name, BoundarySpec):
        return name
    if name == "free":
        return BoundarySpec.free()
    if name == "wired":
        return BoundarySpec.wired(domain)
    msg = f"mixing probe supports 'free' and 'wired' outer conditions, got {name!r}"
    raise ConfigurationError(msg)


def mixing_probe(
    N: int,
    M: int,
    params: ModelParams | None = None,
    event: Event | None = None,
    bc_pi: str = "free",
    bc_tau: str = "wired",
    n_sweeps: int = 2000,
    burn_in: int = 100,
    seed: int = 0,
    n_batches: int = MIN_BATCHES,
    require_separation: bool = True,
) -> MixingResult:
    """Monte Carlo discrepancy of an inner-box event between two outer conditions.

    The outer box is ``[-M, M]^2`` at mesh 1; the default event is the
    left-right crossing of ``[-N, N]^2`` by its own edges.

    Raises:
        ConfigurationError: ``10 N >= M`` while ``require_separation`` is set.
    """
    if N < 1 or M <= N:
        msg = f"need 1 <= N < M, got N={N}, M={M}"
        raise ConfigurationError(msg)
    if require_separation and not 10 * N < M:
        msg = f"spatial mixing needs 10 N < M, got N={N}, M={M}"
        raise ConfigurationError(msg)
    params = params or ModelParams.critical_point()
    event = event or InnerCrossingEvent((-N, -N), (N, N))
    domain = build_box(1.0, ((-M, -M), (M, M)))
    start = time.perf_counter()
    estimates = []
    for k, name in enumerate((bc_pi, bc_tau)):
        bc = _named_bc(domain, name)
        check_compatible(domain, bc)
        graph = build_model_graph(domain, bc)
        series = measure_chain(graph, params, {"event": event}, n_sweeps, burn_in, seed, chain=k)
        estimates.append(summarize(event.descriptor_id, series["event"], n_batches=n_batches))
    a, b = estimates
    d, err = _discrepancy(a.value, a.stderr, b.value, b.stderr)
    log_performance(logger, "mixing_probe", (time.perf_counter() - start) * 1000, N=N, M=M, discrepancy=d)
    return MixingResult(d, err, a.value, b.value, N, M, details={"stderr_pi": a.stderr, "stderr_tau": b.stderr})


def exact_mixing_setup() -> tuple[LatticeDomain, InnerCrossingEvent]:
    """The 5x3 box ``[-2,2] x [-1,1]`` (22 edges) with the crossing of ``[-1,1]^2``."""
    return build_box(1.0, ((-2, -1), (2, 1))), InnerCrossingEvent((-1, -1), (1, 1))


def exact_edge_mixing_setup() -> tuple[LatticeDomain, EdgeOpenEvent]:
    """The 4x4 box ``[-1,2]^2`` with the bottom edge of the inner box ``[0,1]^2``."""
    return build_box(1.0, ((-1, -1), (2, 2))), EdgeOpenEvent((0, 0), (1, 0))


def edge_open_probability(graph: ModelGraph, p: float, event: EdgeOpenEvent) -> float:
    """``phi(omega_e = 1) = p (1 + <sigma_u sigma_v>) / 2`` through the Edwards-Sokal coupling.

    Enumerates spins instead of edges, so boxes beyond the FK cap stay exact
    while they have at most 20 unpinned vertices.
    """
    beta = -0.5 * math.log1p(-p)
    corr = float(IsingEnumeration(graph, beta).correlation([event.u, event.v]))
    return p * (1.0 + corr) / 2.0


def mixing_probe_exact(
    domain: LatticeDomain | None = None,
    event: Event | None = None,
    bc_pi: str | BoundarySpec = "free",
    bc_tau: str | BoundarySpec = "wired",
    p: float = P_CRITICAL,
) -> MixingResult:
    """Discrepancy computed by full enumeration on both sides.

    Edge events on graphs past the FK cap go through the spin enumeration.

    Raises:
        CapacityError: The outer domain has more than 22 edges and the event
            is not a single edge, or more than 20 unpinned vertices.
    """
    default_domain, default_event = exact_mixing_setup()
    if domain is None:
        domain = default_domain
    if event is None:
        event = default_event
    probs = []
    for name in (bc_pi, bc_tau):
        graph = build_model_graph(domain, _named_bc(domain, name))
        if isinstance(event, EdgeOpenEvent) and graph.n_edges > MAX_FK_EDGES:
            probs.append(edge_open_probability(graph, p, event))
        else:
            probs.append(float(FKEnumeration(graph, p, 2.0).probability(event)))
    a, b = probs
    d, _ = _discrepancy(a, 0.0, b, 0.0)
    outer = max(abs(v[0]) for v in domain.vertices)
    if isinstance(event, InnerCrossingEvent):
        inner = event.upper[0]
    elif isinstance(event, EdgeOpenEvent):
        inner = max(abs(c) for c in (*event.u, *event.v))
    else:
        inner = 0
    logger.info("exact_mixing_probe", prob_pi=a, prob_tau=b, discrepancy=d)
    return MixingResult(d, 0.0, a, b, inner, outer, exact=True)

