#!/usr/bin/env python3
"""
Command line entry point

    python app.py [--config FILE] [--debug] verify|solve|paper-examples|oracle ...

Exit codes: 0 success, 1 verification or convergence failure, 2 configuration error.
"""

import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import click
from rich.console import Console
from rich.table import Table

# Add the project root to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from config import Config
from fixedpoint.errors import FixedPointError, NonlinearKernel, ScenarioError
from fixedpoint.export_manager import ReportExporter
from fixedpoint.logger import LOGGER_NAME, log_configuration, log_system_info, setup_logger
from fixedpoint.scenario import (
    BUNDLED_SCENARIOS,
    ScenarioRunner,
    SolveOutcome,
    VerifyOutcome,
    load_problem,
    load_scenario,
    scenario_path,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

console = Console()


@dataclass
class AppContext:
    config: Config
    logger: Any


def run_options(func: Callable) -> Callable:
    """Flags shared by every command; unset flags fall back to the scenario, then the config"""
    options = [
        click.option("--tol", type=float, default=None, help="Stopping tolerance"),
        click.option("--max-iter", "max_iter", type=int, default=None, help="Iteration cap"),
        click.option("--seed", type=int, default=None, help="Seed for all sampling (default 0)"),
        click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Report directory"),
        click.option("--format", "fmt", type=click.Choice(ReportExporter.get_available_formats()),
                     default=None, help="Trace format"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _runner(app: AppContext, tol, max_iter, seed, out, fmt) -> ScenarioRunner:
    app.config.update({"output_directory": out, "report_format": fmt, "seed": seed})
    exporter = ReportExporter(app.config.output_directory, app.config.report_format, logger=app.logger)
    overrides = {"tol": tol, "max_iter": max_iter, "seed": seed}
    return ScenarioRunner(app.config, exporter=exporter, overrides=overrides, logger=app.logger)


def _guarded(app: AppContext, action: Callable[[], int]) -> None:
    """Run a command body and translate errors into exit codes"""
    try:
        code = action()
    except (ScenarioError, NonlinearKernel) as e:
        app.logger.error(f"Configuration error: {e}")
        console.print(f"[red]Configuration error:[/red] {e}")
        code = EXIT_CONFIG
    except FixedPointError as e:
        app.logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        console.print(f"[red]{type(e).__name__}:[/red] {e}")
        code = EXIT_FAILED
    except Exception as e:
        app.logger.error(f"Unexpected error: {e}", exc_info=True)
        console.print(f"[red]Unexpected error:[/red] {e}")
        code = EXIT_FAILED
    sys.exit(code)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _verify_table(outcome: VerifyOutcome) -> Table:
    table = Table(title=f"Verification: {outcome.scenario}")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Detail")
    if outcome.axioms is not None:
        axioms = outcome.axioms
        table.add_row("b-metric axioms", _fmt(axioms.all_ok),
                      f"{axioms.checked_pairs} pairs, worst triangle slack {_fmt(axioms.worst_triangle_slack)}")
    for certificate in outcome.certificates:
        constants = ", ".join(f"{key}={_fmt(value)}" for key, value in certificate.constants.items())
        table.add_row(
            f"{certificate.family.value} ({certificate.norm_mode.value}/{certificate.order_mode.value})",
            _fmt(certificate.overall),
            f"{constants}; {len(certificate.edge_results)} edges, {len(certificate.failed_edges)} failed, "
            f"worst slack {_fmt(certificate.worst_slack)}",
        )
    for key, value in outcome.details.items():
        table.add_row(key, _fmt(value), "")
    return table


def _solve_table(outcome: SolveOutcome) -> Table:
    table = Table(title=f"Solve: {outcome.scenario}")
    if outcome.results:
        for column in ("seed", "iterations", "point of coincidence", "coincidence point",
                       "weakly compatible", "common fixed point", "in C_gf"):
            table.add_column(column)
        for result in outcome.results:
            table.add_row(
                _fmt(result.seed),
                _fmt(result.iterations),
                _fmt(result.point_of_coincidence),
                _fmt(result.coincidence_point),
                _fmt(result.weakly_compatible),
                _fmt(result.common_fixed_point) if result.common_fixed_point is not None else "absent",
                _fmt(result.in_cgf),
            )
        return table
    table.add_column("Quantity")
    table.add_column("Value")
    for key in ("iterations", "residual", "oracle_delta", "max_contraction_factor", "beta", "hermitian", "positive"):
        if key in outcome.summary:
            table.add_row(key, _fmt(outcome.summary[key]))
    return table


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.option("--config", "config_file", default="fixedpoint.json", show_default=True, help="JSON config file")
@click.option("--debug", is_flag=True, help="Verbose logging")
@click.pass_context
def cli(ctx: click.Context, config_file: str, debug: bool) -> None:
    """Fixed points in C*-algebra-valued b-metric spaces with a graph"""
    config = Config(config_file=config_file)
    logger = setup_logger(
        LOGGER_NAME,
        log_file=config.log_file or None,
        log_level="DEBUG" if debug else config.log_level,
        max_size=config.log_max_size,
    )
    if config.load_error:
        console.print(f"[red]Configuration error:[/red] {config.load_error}")
        sys.exit(EXIT_CONFIG)
    if debug:
        log_system_info()
        log_configuration(config)
    ctx.obj = AppContext(config, logger)


@cli.command()
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@run_options
@click.pass_obj
def verify(app: AppContext, scenario_file: str, tol, max_iter, seed, out, fmt) -> None:
    """Check the axioms and certificates of a scenario"""
    def action() -> int:
        runner = _runner(app, tol, max_iter, seed, out, fmt)
        outcome = runner.verify(load_scenario(scenario_file))
        console.print(_verify_table(outcome))
        return EXIT_OK if outcome.passed else EXIT_FAILED
    _guarded(app, action)


@cli.command()
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@run_options
@click.pass_obj
def solve(app: AppContext, scenario_file: str, tol, max_iter, seed, out, fmt) -> None:
    """Verify, then iterate to the point of coincidence and write reports"""
    def action() -> int:
        runner = _runner(app, tol, max_iter, seed, out, fmt)
        scenario = load_scenario(scenario_file)
        verified = runner.verify(scenario)
        if not verified.passed:
            console.print(_verify_table(verified))
            return EXIT_FAILED
        outcome = runner.solve(scenario)
        console.print(_solve_table(outcome))
        for path in outcome.files:
            console.print(f"wrote {path}")
        return EXIT_OK if outcome.converged else EXIT_FAILED
    _guarded(app, action)


@cli.command("paper-examples")
@click.option("--scenario-dir", "scenario_dir", type=click.Path(file_okay=False), default=None,
              help="Directory holding the bundled scenarios")
@run_options
@click.pass_obj
def bundled_examples(app: AppContext, scenario_dir: Optional[str], tol, max_iter, seed, out, fmt) -> None:
    """Run the bundled scenarios and check their expected outcomes"""
    def action() -> int:
        runner = _runner(app, tol, max_iter, seed, out, fmt)
        directory = scenario_dir or app.config.scenario_directory
        scenarios = [load_scenario(scenario_path(directory, name)) for name in BUNDLED_SCENARIOS]

        table = Table(title="Bundled examples")
        for column in ("scenario", "kind", "verify", "solve", "status", "notes"):
            table.add_column(column)

        failed = 0
        for scenario in scenarios:
            verified = runner.verify(scenario)
            solved: Optional[SolveOutcome] = None
            problems: List[str] = []
            if verified.passed:
                try:
                    solved = runner.solve(scenario)
                except FixedPointError as e:
                    app.logger.error(f"Scenario '{scenario.name}' failed to solve: {e}", exc_info=True)
                    problems.append(f"{type(e).__name__}: {e}")
            problems.extend(runner.check_expectations(scenario, verified, solved))
            failed += bool(problems)
            table.add_row(
                scenario.name,
                scenario.kind,
                _fmt(verified.passed),
                _fmt(solved.converged) if solved is not None else "-",
                "[green]PASS[/green]" if not problems else "[red]FAIL[/red]",
                "; ".join(problems),
            )

        console.print(table)
        app.logger.info(f"Bundled examples: {len(scenarios) - failed}/{len(scenarios)} passed")
        return EXIT_OK if failed == 0 else EXIT_FAILED
    _guarded(app, action)


@cli.command()
@click.argument("problem_file", type=click.Path(dir_okay=False))
@run_options
@click.pass_obj
def oracle(app: AppContext, problem_file: str, tol, max_iter, seed, out, fmt) -> None:
    """Compare the iterative solution of a problem file with the direct solver"""
    def action() -> int:
        runner = _runner(app, tol, max_iter, seed, out, fmt)
        problem = load_problem(problem_file)
        name = os.path.splitext(os.path.basename(problem_file))[0]
        summary: Dict[str, Any] = runner.oracle(problem, name=f"{name}_oracle")
        table = Table(title=f"Oracle: {name}")
        table.add_column("Quantity")
        table.add_column("Value")
        for key, value in summary.items():
            table.add_row(key, _fmt(value))
        console.print(table)
        return EXIT_OK if summary["oracle_delta"] < 1e-8 else EXIT_FAILED
    _guarded(app, action)


if __name__ == "__main__":
    cli()
