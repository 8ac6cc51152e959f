"""Command-line interface.

Exit codes: 0 success, 1 residual or tolerance failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import csv
import json
import sys
from collections.abc import Callable
from functools import wraps
from pathlib import Path
from typing import Any, TypeVar

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from fkcorr import __version__
from fkcorr.campaign import read_estimates, read_manifest, run_campaign
from fkcorr.continuum import FAMILIES, CorrelationFormula, bpz_residual, covariance_sweep
from fkcorr.core.config import get_settings
from fkcorr.core.exceptions import ConfigurationError, FkcorrError, ToleranceError
from fkcorr.estimator import DEFAULT_MIN_SCALE, fit_family
from fkcorr.experiment import load_experiment
from fkcorr.utils.logging import get_logger, setup_logging
from fkcorr.verify import SUITES, run_suite


logger = get_logger(__name__)
console = Console()
err_console = Console(stderr=True)

F = TypeVar("F", bound=Callable[..., Any])


def handle_errors(func: F) -> F:
    """Turn FkcorrError into a one-line diagnostic and its exit code."""

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except FkcorrError as exc:
            err_console.print(f"[red]error:[/red] {exc}", markup=True, highlight=False)
            logger.debug("command_failed", error=type(exc).__name__)
            sys.exit(exc.exit_code)

    return wrapper  # type: ignore[return-value]


@click.group()
@click.version_option(__version__, prog_name="fkcorr")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
    default=None,
    help="Log level (default from FKCORR_LOG_LEVEL or INFO).",
)
@click.option("--json-logs/--no-json-logs", default=None, help="Emit JSON log lines.")
@click.pass_context
def main(ctx: click.Context, log_level: str | None, json_logs: bool | None) -> None:
    """FK-Ising correlation toolkit: exact checks, sampling, fits and continuum formulas."""
    settings = get_settings(log_level=log_level, json_logs=json_logs)
    setup_logging(settings.log_level, settings.json_logs, settings.include_timestamp)
    ctx.obj = settings


def _suite_table(result: Any) -> Table:
    table = Table(title=f"verify {result.name}")
    table.add_column("report")
    table.add_column("cases", justify="right")
    table.add_column("max residual", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("status")
    for report in result.reports:
        status = "[green]ok[/green]" if report.passed else "[red]FAIL[/red]"
        table.add_row(
            report.name, str(len(report.rows)), f"{report.max_residual:.3e}", f"{report.tolerance:.0e}", status
        )
    return table


@main.command()
@click.argument("suite", type=click.Choice(list(SUITES)))
@click.option("--json-out", type=click.Path(dir_okay=False, path_type=Path), help="Write the JSON report here.")
@handle_errors
def verify(suite: str, json_out: Path | None) -> None:
    """Run an exact or numerical verification SUITE."""
    result = run_suite(suite)
    console.print(_suite_table(result))
    for name, rows in result.tables.items():
        if rows:
            table = Table(title=name)
            for column in rows[0]:
                table.add_column(str(column))
            for row in rows:
                table.add_row(*(f"{v:.3e}" if isinstance(v, float) else str(v) for v in row.values()))
            console.print(table)
    doc = json.dumps(result.to_json(), indent=2, default=str)
    if json_out is not None:
        json_out.write_text(doc + "\n")
    else:
        click.echo(doc)
    if not result.passed:
        failed = ", ".join(r.name for r in result.reports if not r.passed)
        msg = f"verify {suite}: residual above tolerance in {failed}"
        raise ToleranceError(msg)


@main.command()
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Experiment config (JSON).",
)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the config seed.")
@click.option("--threads", type=click.IntRange(min=1), envvar="FKCORR_THREADS", default=None, help="Worker threads.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Run directory.")
@click.pass_obj
@handle_errors
def sample(settings: Any, config_path: Path, seed: int | None, threads: int | None, out_dir: Path | None) -> None:
    """Run the sampling campaign described by --config."""
    config = load_experiment(config_path)
    target = out_dir or settings.out_dir / config.name
    result = run_campaign(config, target, threads=threads or settings.threads, seed=seed)
    console.print(
        f"wrote {len(result.manifest.outputs)} files to {result.run_dir} "
        f"(manifest {result.manifest.manifest_hash})"
    )


@main.command()
@click.argument("estimates", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--family", "families", multiple=True, help="Observable family to fit (repeatable; default all).")
@click.option("--min-scale", type=float, default=DEFAULT_MIN_SCALE, show_default=True)
@click.option(
    "--spec",
    "fit_spec",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help='JSON fit spec: {"families": [...], "min_scale": 8}.',
)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@handle_errors
def fit(
    estimates: Path,
    families: tuple[str, ...],
    min_scale: float,
    fit_spec: Path | None,
    out_path: Path | None,
) -> None:
    """Fit log-log slopes to the ladder families of an ESTIMATES file."""
    records = read_estimates(estimates)
    wanted = list(families)
    if fit_spec is not None:
        try:
            spec = json.loads(fit_spec.read_text())
        except json.JSONDecodeError as exc:
            msg = f"{fit_spec}:{exc.lineno}: invalid JSON: {exc.msg}"
            raise ConfigurationError(msg) from exc
        wanted = wanted or list(spec.get("families", []))
        min_scale = float(spec.get("min_scale", min_scale))
    if not wanted:
        wanted = sorted({r.family for r in records if r.scale is not None})
    fits = [fit_family(records, family, min_scale).to_json() for family in wanted]
    target = out_path or estimates.with_name("fits.json")
    target.write_text(json.dumps({"source": str(estimates), "min_scale": min_scale, "fits": fits}, indent=2) + "\n")

    table = Table(title="fits")
    for column in ("family", "slope", "error", "window", "p"):
        table.add_column(column)
    for f in fits:
        table.add_row(
            f["family"],
            f"{f['slope']:.4f}",
            f"{f['slope_error']:.4f}",
            f"{f['window'][0]:g}-{f['window'][1]:g}",
            f"{f['p_value']:.3f}",
        )
    console.print(table)


def _parse_point(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        msg = f"cannot parse point {text!r}"
        raise click.BadParameter(msg) from exc


@main.command()
@click.option("--family", type=click.Choice(sorted(FAMILIES)), required=True)
@click.option("--points", required=True, help="Comma-separated points, e.g. '0,1,2,3' or '0.5+1j,0'.")
@click.option("--maps", "n_maps", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@handle_errors
def continuum(family: str, points: str, n_maps: int, seed: int, out_path: Path | None) -> None:
    """Evaluate a continuum formula with its covariance and BPZ residuals."""
    formula = CorrelationFormula.build(family, [_parse_point(p) for p in points.split(",")])
    value = formula.evaluate()
    covariance = covariance_sweep(formula, n_maps, seed) if formula.spec.covariant else float("nan")
    bpz = float("nan")
    if formula.spec.bpz:
        spins = [j for j, w in enumerate(formula.weights) if w == 0.5]
        bpz = max(bpz_residual(formula, j) for j in spins)
    row = {
        "formula": family,
        "points": " ".join(str(p) for p in formula.points),
        "value": value,
        "covariance_residual": covariance,
        "bpz_residual": bpz,
    }
    handle = out_path.open("w", newline="") if out_path else sys.stdout
    try:
        writer = csv.DictWriter(handle, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
    finally:
        if out_path:
            handle.close()


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@handle_errors
def report(run_dir: Path) -> None:
    """Summarize the estimates of a RUN_DIR."""
    manifest = read_manifest(run_dir)
    records = read_estimates(run_dir / "estimates.csv")
    table = Table(title=f"{run_dir.name} (manifest {manifest.manifest_hash}, seed {manifest.seed})")
    for column in ("observable", "value", "stderr", "n", "tau_int"):
        table.add_column(column, justify="left" if column == "observable" else "right")
    for r in records:
        table.add_row(r.observable_id, f"{r.value:.6f}", f"{r.stderr:.2e}", str(r.n_samples), f"{r.tau_int:.2f}")
    console.print(table)
    relative = [r.stderr / r.value for r in records if r.value > 0]
    if relative:
        console.print(f"median relative error {float(np.median(relative)):.3%}")


if __name__ == "__main__":
    main()
