"""Command line: calibrate, run and verify scenarios."""

import json
import logging
import sys
from typing import Optional

import click

from app.errors import ControlLabError
from app.scenario.config import load_config
from app.scenario.engine import calibrate, run_scenario, verify_bundle
from app.scenario.exports import to_json
from app.settings import load_environment

logger = logging.getLogger(__name__)


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@click.group()
@click.option("--log-level", default="INFO", show_default=True, help="Root logger level")
def cli(log_level: str) -> None:
    """Control synthesis lab for 2D ideal MHD on an annulus"""
    load_environment()
    _configure_logging(log_level)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Scenario TOML file")
@click.option("--out", "output_root", default=None, type=click.Path(file_okay=False), help="Output root directory")
@click.option("--threads", default=None, type=click.IntRange(min=1), help="Worker count for export")
@click.option(
    "--resolution-scale",
    default=1.0,
    show_default=True,
    type=click.FloatRange(min=0.0, min_open=True),
    help="Grid and time refinement factor",
)
@click.option("--refine", is_flag=True, default=False, help="Also run at twice the resolution for observed orders")
def run(config_path: str, output_root: Optional[str], threads: Optional[int], resolution_scale: float, refine: bool) -> None:
    """Run a scenario and write its bundle; exit status 1 on a failed verdict"""
    try:
        scenario = load_config(config_path).rescaled(resolution_scale)
        if refine:
            scenario = scenario.model_copy(update={"refinement": True})
        if resolution_scale != 1.0:
            geometry = scenario.geometry
            logger.info("Resolution scaled by %.3g: %d x %d nodes", resolution_scale, geometry.n_radial, geometry.n_angular)
        result = run_scenario(scenario, output_root, threads)
    except ControlLabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(json.dumps({"path": result["path"], "passed": result["passed"]}))
    sys.exit(0 if result["passed"] else 1)


@cli.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@click.option("--against", default=None, type=click.Path(exists=True, file_okay=False), help="Second bundle for the determinism check")
def verify(bundle: str, against: Optional[str]) -> None:
    """Re-check a bundle's acceptance criteria without solving"""
    try:
        result = verify_bundle(bundle, against)
    except ControlLabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    for entry in result["verdict"]["criteria"]:
        click.echo(f"{entry['criterion']:<26} {entry['status']}")
    sys.exit(0 if result["passed"] else 1)


@cli.command(name="calibrate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Scenario TOML file")
@click.option("--resolution-scale", default=1.0, show_default=True, type=click.FloatRange(min=0.0, min_open=True))
def calibrate_command(config_path: str, resolution_scale: float) -> None:
    """Print the calibrated flushing profile summary"""
    try:
        summary = calibrate(load_config(config_path).rescaled(resolution_scale))
    except ControlLabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(to_json(summary))


if __name__ == "__main__":
    cli()
