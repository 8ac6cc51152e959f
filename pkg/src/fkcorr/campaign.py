"""Sampling campaigns: run chains, write measurement files, merge estimates.

Layout of a run directory::

    manifest.json
    chain_000.csv  chain_001.csv ...
    estimates.csv

Every CSV starts with a ``#schema=1`` comment naming the manifest hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from fkcorr import __version__
from fkcorr.core.config import settings
from fkcorr.core.exceptions import ConfigurationError, InsufficientDataError
from fkcorr.estimator import (
    EstimateRecord,
    batch_means,
    estimate_burn_in,
    integrated_autocorrelation,
    measure_chain,
)
from fkcorr.experiment import ExperimentConfig
from fkcorr.lattice import build_model_graph
from fkcorr.utils.logging import get_logger, log_performance


logger = get_logger(__name__)

SCHEMA = 1
MEASUREMENT_COLUMNS = ("sweep_index", "observable_id", "value")
ESTIMATE_COLUMNS = ("observable_id", "value", "stderr", "n", "tau_int", "config_hash")


def compute_manifest_hash(config_hash: str, seed: int, code_version: str) -> str:
    payload = f"{config_hash}:{seed}:{code_version}"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    burn_in: int = 0

    @property
    def manifest_hash(self) -> str:
        return compute_manifest_hash(self.config_hash, self.seed, self.code_version)

    def to_json(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "manifest_hash": self.manifest_hash,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "code_version": self.code_version,
            "started": self.started,
            "finished": self.finished,
            "burn_in": self.burn_in,
            "outputs": sorted(self.outputs),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> RunManifest:
        return cls(
            config_hash=doc["config_hash"],
            seed=int(doc["seed"]),
            code_version=doc["code_version"],
            started=doc.get("started", ""),
            finished=doc.get("finished", ""),
            outputs=list(doc.get("outputs", [])),
            burn_in=int(doc.get("burn_in", 0)),
        )

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path


def read_manifest(run_dir: Path) -> RunManifest:
    path = run_dir / "manifest.json"
    try:
        return RunManifest.from_json(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        msg = f"{path}: unreadable manifest ({exc})"
        raise ConfigurationError(msg) from exc


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _header(**tags: Any) -> str:
    return f"#schema={SCHEMA} " + " ".join(f"{k}={v}" for k, v in tags.items()) + "\n"


def _parse_header(line: str, path: Path) -> dict[str, str]:
    if not line.startswith(f"#schema={SCHEMA}"):
        msg = f"{path}:1: expected '#schema={SCHEMA}' header"
        raise ConfigurationError(msg)
    return dict(part.split("=", 1) for part in line[1:].split() if "=" in part)


def write_chain_csv(
    path: Path,
    series: dict[str, NDArray[np.float64]],
    manifest_hash: str,
    chain: int,
    config_hash: str,
) -> None:
    """Long-format measurements: one row per (sweep, observable)."""
    ids = sorted(series)
    n = len(series[ids[0]]) if ids else 0
    with path.open("w", newline="") as handle:
        handle.write(_header(manifest=manifest_hash, chain=chain, config=config_hash))
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MEASUREMENT_COLUMNS)
        for t in range(n):
            for k in ids:
                writer.writerow((t, k, _fmt(series[k][t])))


def read_chain_csv(path: Path) -> tuple[int, dict[str, NDArray[np.float64]]]:
    """Chain index and per-observable series of a measurement file.

    Raises:
        ConfigurationError: Missing header or malformed rows.
    """
    with path.open(newline="") as handle:
        tags = _parse_header(handle.readline(), path)
        reader = csv.reader(handle)
        if tuple(next(reader, ())) != MEASUREMENT_COLUMNS:
            msg = f"{path}:2: expected columns {','.join(MEASUREMENT_COLUMNS)}"
            raise ConfigurationError(msg)
        values: dict[str, list[float]] = {}
        for lineno, row in enumerate(reader, start=3):
            try:
                _, observable_id, value = row
                values.setdefault(observable_id, []).append(float(value))
            except ValueError as exc:
                msg = f"{path}:{lineno}: malformed measurement row {row}"
                raise ConfigurationError(msg) from exc
    return int(tags.get("chain", 0)), {k: np.asarray(v) for k, v in values.items()}


def merge_chains(
    chains: Iterable[tuple[int, dict[str, NDArray[np.float64]]]],
    config_hash: str,
    n_batches: int = 20,
) -> list[EstimateRecord]:
    """Pool chains into one record per observable, sorted by id.

    Chains are ordered by index first, so any permutation of the inputs gives
    identical records. Each chain contributes ``n_batches`` batch means.
    """
    ordered = sorted(chains, key=lambda c: c[0])
    if not ordered:
        msg = "no chains to merge"
        raise InsufficientDataError(msg)
    ids = sorted({k for _, series in ordered for k in series})
    records = []
    for observable_id in ids:
        parts = [series[observable_id] for _, series in ordered if observable_id in series]
        batches = np.concatenate([batch_means(s, n_batches)[2] for s in parts])
        n = sum(s.size for s in parts)
        mean = math.fsum(math.fsum(s) for s in parts) / n
        stderr = float(batches.std(ddof=1) / math.sqrt(batches.size))
        tau = math.fsum(integrated_autocorrelation(s) for s in parts) / len(parts)
        records.append(EstimateRecord(observable_id, mean, stderr, n, tau, config_hash))
    return records


def write_estimates(path: Path, records: Sequence[EstimateRecord], manifest_hash: str) -> None:
    with path.open("w", newline="") as handle:
        handle.write(_header(manifest=manifest_hash))
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ESTIMATE_COLUMNS)
        for r in sorted(records, key=lambda r: r.observable_id):
            writer.writerow(
                (r.observable_id, _fmt(r.value), _fmt(r.stderr), r.n_samples, _fmt(r.tau_int), r.config_hash)
            )


def read_estimates(path: Path) -> list[EstimateRecord]:
    """Parse an ``estimates.csv``.

    Raises:
        ConfigurationError: Missing file, header or columns, or unparsable values.
    """
    try:
        handle = path.open(newline="")
    except OSError as exc:
        msg = f"{path}: cannot read estimates ({exc.strerror})"
        raise ConfigurationError(msg) from exc
    with handle:
        _parse_header(handle.readline(), path)
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != ESTIMATE_COLUMNS:
            msg = f"{path}:2: expected columns {','.join(ESTIMATE_COLUMNS)}"
            raise ConfigurationError(msg)
        records = []
        for lineno, row in enumerate(reader, start=3):
            try:
                records.append(
                    EstimateRecord(
                        observable_id=row["observable_id"],
                        value=float(row["value"]),
                        stderr=float(row["stderr"]),
                        n_samples=int(row["n"]),
                        tau_int=float(row["tau_int"]),
                        config_hash=row["config_hash"],
                    )
                )
            except (TypeError, ValueError) as exc:
                msg = f"{path}:{lineno}: malformed estimate row"
                raise ConfigurationError(msg) from exc
    return records


@dataclass(frozen=True)
class CampaignResult:
    run_dir: Path
    manifest: RunManifest
    records: tuple[EstimateRecord, ...]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_campaign(
    config: ExperimentConfig,
    out_dir: Path,
    threads: int | None = None,
    seed: int | None = None,
) -> CampaignResult:
    """Run every chain of ``config`` and write the run directory.

    ``seed`` overrides the config seed. Measurement files depend only on the
    config, the seed and the code version.

    Raises:
        ConfigurationError: The config does not describe a runnable model.
    """
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    domain, bc, observables = config.build()
    graph = build_model_graph(domain, bc)
    params = config.model_params()
    config_hash = config.config_hash()
    manifest = RunManifest(config_hash=config_hash, seed=config.seed, started=_now())
    out_dir.mkdir(parents=True, exist_ok=True)

    burn_in = config.burn_in
    if burn_in is None:
        burn_in = estimate_burn_in(graph, params, config.seed, config.pilot_sweeps)
    manifest.burn_in = burn_in

    workers = max(1, min(threads or settings.threads, config.chains))
    logger.info(
        "campaign_started",
        config=config_hash,
        chains=config.chains,
        threads=workers,
        observables=len(observables),
        burn_in=burn_in,
    )
    start = time.perf_counter()

    def one_chain(chain: int) -> tuple[int, dict[str, NDArray[np.float64]]]:
        series = measure_chain(
            graph, params, observables, config.sweeps, burn_in, config.seed, chain=chain, thin=config.thinning
        )
        path = out_dir / f"chain_{chain:03d}.csv"
        write_chain_csv(path, series, manifest.manifest_hash, chain, config_hash)
        logger.info("chain_finished", chain=chain, samples=len(next(iter(series.values()))), path=path.name)
        return chain, series

    with ThreadPoolExecutor(max_workers=workers) as pool:
        chains = list(pool.map(one_chain, range(config.chains)))

    records = merge_chains(chains, config_hash, config.n_batches)
    write_estimates(out_dir / "estimates.csv", records, manifest.manifest_hash)
    manifest.outputs = [f"chain_{c:03d}.csv" for c, _ in chains] + ["estimates.csv"]
    manifest.finished = _now()
    manifest.write(out_dir)
    log_performance(logger, "run_campaign", (time.perf_counter() - start) * 1000, chains=config.chains)
    return CampaignResult(out_dir, manifest, tuple(records))


def merge_run(run_dir: Path, n_batches: int = 20) -> list[EstimateRecord]:
    """Re-merge the chain files of an existing run directory."""
    manifest = read_manifest(run_dir)
    files = sorted(run_dir.glob("chain_*.csv"))
    if not files:
        msg = f"{run_dir}: no chain files"
        raise InsufficientDataError(msg)
    return merge_chains((read_chain_csv(f) for f in files), manifest.config_hash, n_batches)
