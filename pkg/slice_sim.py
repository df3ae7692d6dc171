"""
slice-sim - Uplink Network Slicing Simulator CLI

Sweeps for eMBB + URLLC and eMBB + mMTC coexistence under OMA, NOMA and
RSMA. Results go to stdout (or --out); progress and diagnostics go to
stderr.
"""

import sys
import io

# UTF-8 stdio for rich output on CP1252 consoles
if sys.stdout.encoding != 'utf-8':
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding='utf-8', errors='replace')
if sys.stderr.encoding != 'utf-8':
    sys.stderr = io.TextIOWrapper(sys.stderr.buffer, encoding='utf-8', errors='replace')


import logging
import os
from typing import Callable, List, Optional

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from slice_core import __version__
from slice_core.algorithms.channel_model import db_to_linear
from slice_core.config_loader import load_scenario_config, parse_overrides
from slice_core.experiments import (
    require_feasible,
    run_beta_sweep_mmtc,
    run_beta_sweep_urllc,
    run_embb_check,
    run_frontier_mmtc,
    run_region_urllc,
    run_single_trial_trace,
    run_user_region_urllc,
)
from slice_core.report_writer import render_csv, render_json, write_output
from slice_core.slice_schemas import ConfigurationError, InfeasibleSearchError, ScenarioConfig
from slice_core.startup_checks import run_startup_checks
from slice_core.telemetry.collector import collector
from slice_core.telemetry.events import EventType

EXIT_CONFIGURATION = 2
EXIT_INFEASIBLE = 3

# SLICE_SIM_DEBUG=true switches logging to DEBUG
DEBUG_MODE = os.getenv("SLICE_SIM_DEBUG", "false").lower() == "true"

app = typer.Typer(help=f"slice-sim v{__version__} CLI")
console = Console(stderr=True)
logger = logging.getLogger("slice_sim")


def _configure_logging() -> None:
    logging.basicConfig(
        level=logging.DEBUG if DEBUG_MODE else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )


@app.callback()
def main_callback():
    """
    Run startup checks before any command.
    """
    _configure_logging()
    if DEBUG_MODE:
        logger.info("🐛 DEV MODE: Debug logging enabled (SLICE_SIM_DEBUG=true)")
    if not run_startup_checks():
        console.print("[bold red]❌ Critical startup checks failed. See logs.[/bold red]")
        raise typer.Exit(code=1)


def _load(config: Optional[str], overrides: List[str], seed: Optional[int], trials: Optional[int],
          scheme: Optional[str], no_retry: bool, fast: bool) -> ScenarioConfig:
    values = parse_overrides(overrides)
    if seed is not None:
        values["seed"] = seed
    if trials is not None:
        values["trials"] = trials
    if scheme is not None:
        values["scheme"] = scheme.lower()
    if no_retry:
        values["retry_after_cancellation"] = False
    return load_scenario_config(config, values, fast=fast)


def _sweep(command: str, runner: Callable, config: Optional[str], overrides: List[str],
           seed: Optional[int], trials: Optional[int], workers: int, fast: bool, out: Optional[str],
           json_out: bool, no_retry: bool, scheme: Optional[str]) -> None:
    try:
        scenario = _load(config, overrides, seed, trials, scheme, no_retry, fast)
        console.print(f"📡 {command}: scenario={scenario.scenario} scheme={scenario.scheme} "
                      f"trials={scenario.trials} seed={scenario.seed} workers={workers}")
        collector.emit(EventType.RUN_START, command, properties={"seed": scenario.seed, "workers": workers})
        points = collector.track_stage(command)(runner)(scenario, workers=workers)
    except ConfigurationError as e:
        console.print(f"[bold red]Configuration error: {escape(str(e))}[/bold red]")
        raise typer.Exit(code=EXIT_CONFIGURATION)

    text = render_json(command, points, scenario) if json_out else render_csv(points, scenario)
    if out:
        write_output(text, out)
        console.print(f"[green]✅ Wrote {len(points)} rows to {out}[/green]")
    else:
        typer.echo(text, nl=False)

    try:
        require_feasible(points)
    except InfeasibleSearchError as e:
        console.print(f"[bold yellow]⚠️ {e}[/bold yellow]")
        raise typer.Exit(code=EXIT_INFEASIBLE)


CONFIG_HELP = "Config file path or preset name (fig3..fig9)"
SET_HELP = "Override a config field, e.g. --set eps_u=1e-3 (repeatable)"


@app.command("region-urllc")
def region_urllc(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials per probe"),
    workers: int = typer.Option(1, help="Worker threads (results do not depend on it)"),
    fast: bool = typer.Option(False, "--fast", help="Reduced budget for smoke runs"),
    out: Optional[str] = typer.Option(None, "--out", help="Write results to this file"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON instead of CSV"),
    no_retry: bool = typer.Option(False, "--no-retry", help="Do not retry a device after cancellation"),
    scheme: Optional[str] = typer.Option(None, help="oma, noma or rsma"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """URLLC sum rate versus eMBB sum rate."""
    _sweep("region-urllc", run_region_urllc, config, overrides, seed, trials, workers,
           fast, out, json_out, no_retry, scheme)


@app.command("beta-sweep-urllc")
def beta_sweep_urllc(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials per probe"),
    workers: int = typer.Option(1, help="Worker threads (results do not depend on it)"),
    fast: bool = typer.Option(False, "--fast", help="Reduced budget for smoke runs"),
    out: Optional[str] = typer.Option(None, "--out", help="Write results to this file"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON instead of CSV"),
    no_retry: bool = typer.Option(False, "--no-retry", help="Do not retry a device after cancellation"),
    scheme: Optional[str] = typer.Option(None, help="oma, noma or rsma"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """URLLC sum rate versus beta at a fixed eMBB rate."""
    _sweep("beta-sweep-urllc", run_beta_sweep_urllc, config, overrides, seed, trials, workers,
           fast, out, json_out, no_retry, scheme)


@app.command("user-region-urllc")
def user_region_urllc(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials per probe"),
    workers: int = typer.Option(1, help="Worker threads (results do not depend on it)"),
    fast: bool = typer.Option(False, "--fast", help="Reduced budget for smoke runs"),
    out: Optional[str] = typer.Option(None, "--out", help="Write results to this file"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON instead of CSV"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """Per-user URLLC rate region traced by beta."""
    _sweep("user-region-urllc", run_user_region_urllc, config, overrides, seed, trials, workers,
           fast, out, json_out, False, None)


@app.command("frontier-mmtc")
def frontier_mmtc(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials per probe"),
    workers: int = typer.Option(1, help="Worker threads (results do not depend on it)"),
    fast: bool = typer.Option(False, "--fast", help="Reduced budget for smoke runs"),
    out: Optional[str] = typer.Option(None, "--out", help="Write results to this file"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON instead of CSV"),
    no_retry: bool = typer.Option(False, "--no-retry", help="Do not retry a device after cancellation"),
    scheme: Optional[str] = typer.Option(None, help="oma, noma or rsma"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """Largest mMTC arrival rate versus eMBB rate."""
    _sweep("frontier-mmtc", run_frontier_mmtc, config, overrides, seed, trials, workers,
           fast, out, json_out, no_retry, scheme)


@app.command("beta-sweep-mmtc")
def beta_sweep_mmtc(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials per probe"),
    workers: int = typer.Option(1, help="Worker threads (results do not depend on it)"),
    fast: bool = typer.Option(False, "--fast", help="Reduced budget for smoke runs"),
    out: Optional[str] = typer.Option(None, "--out", help="Write results to this file"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON instead of CSV"),
    no_retry: bool = typer.Option(False, "--no-retry", help="Do not retry a device after cancellation"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """Largest mMTC arrival rate versus beta at a fixed eMBB rate."""
    _sweep("beta-sweep-mmtc", run_beta_sweep_mmtc, config, overrides, seed, trials, workers,
           fast, out, json_out, no_retry, None)


def parse_gains(text: str, in_db: bool = False, allow_empty: bool = False) -> List[List[float]]:
    """'125.89;79.43' -> [[125.89], [79.43]]: rows split on ';', columns on ','."""
    rows = []
    for row in text.split(";"):
        if not row.strip():
            continue
        try:
            values = [float(item) for item in row.split(",") if item.strip()]
        except ValueError:
            raise ConfigurationError(f"gains: cannot parse '{text}'")
        rows.append([db_to_linear(value) if in_db else value for value in values])
    if not rows and not allow_empty:
        raise ConfigurationError("gains: no values given")
    return rows


@app.command()
def trace(
    gains: str = typer.Option(..., "--gains", help="Gains, users/devices split by ';', frequencies by ','"),
    gains_db: bool = typer.Option(False, "--gains-db", help="Interpret --gains in dB"),
    gtar: Optional[float] = typer.Option(None, "--gtar", help="eMBB target SNR (linear)"),
    beta: float = typer.Option(0.5, help="RSMA power split"),
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    scheme: Optional[str] = typer.Option(None, help="oma, noma or rsma"),
    no_retry: bool = typer.Option(False, "--no-retry", help="Do not retry a device after cancellation"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """Decode one explicit channel realisation and print the SIC trace."""
    try:
        scenario = _load(config, overrides, None, None, scheme, no_retry, False)
        rows = parse_gains(gains, gains_db, allow_empty=scenario.scenario == "embb-mmtc")
        if scenario.scenario == "embb-mmtc":
            rows = [value for row in rows for value in row]
        typer.echo(run_single_trial_trace(scenario, rows, g_tar=gtar, beta=beta))
    except ConfigurationError as e:
        console.print(f"[bold red]Configuration error: {escape(str(e))}[/bold red]")
        raise typer.Exit(code=EXIT_CONFIGURATION)


@app.command("embb-check")
def embb_check(
    config: Optional[str] = typer.Option(None, "--config", help=CONFIG_HELP),
    seed: Optional[int] = typer.Option(None, help="Master seed"),
    trials: Optional[int] = typer.Option(None, help="Monte Carlo trials"),
    workers: int = typer.Option(1, help="Worker threads"),
    json_out: bool = typer.Option(False, "--json", help="Emit JSON"),
    overrides: List[str] = typer.Option([], "--set", help=SET_HELP),
) -> None:
    """eMBB power-control constants and their Monte Carlo check."""
    try:
        scenario = _load(config, overrides, seed, trials, None, False, False)
        report = run_embb_check(scenario, workers=workers)
    except ConfigurationError as e:
        console.print(f"[bold red]Configuration error: {escape(str(e))}[/bold red]")
        raise typer.Exit(code=EXIT_CONFIGURATION)

    table = Table(title=f"eMBB power control ({report.gamma_b_db:g} dB, eps_b={report.eps_b:g})")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for name, value in report.model_dump().items():
        table.add_row(name, repr(value))
    console.print(table)

    if json_out:
        typer.echo(report.model_dump_json(indent=2))
    else:
        typer.echo("\n".join(f"{name}={value!r}" for name, value in report.model_dump().items()))


if __name__ == "__main__":
    app()
