"""Command-line entry points: headless runs, baseline comparison,
prediction-step sweeps, and serving live HITL sessions.

Exit codes: 0 success, 2 scenario/schema error, 3 runtime invariant
violation, 4 port unavailable. Every flag can also be set through a
CROSSWAY_-prefixed environment variable.
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from .engine import Simulation, run_sensitivity
from .errors import BadScenario
from .presets import PRESETS
from .report import (
    comparison_dict,
    summary_dict,
    write_manifest,
    write_run_outputs,
    write_sensitivity_csv,
    write_speed_distance_csv,
    write_trace_csv,
)
from .scenario import COOPERATIVE, SIGNALIZED, load_scenario

EXIT_SCHEMA = 2
EXIT_VIOLATION = 3
EXIT_PORT = 4


def _load(scenario: str, seed: int | None, mode: str | None):
    if scenario in PRESETS:
        cfg = PRESETS[scenario](seed=seed or 0)
    else:
        try:
            cfg = load_scenario(scenario)
        except BadScenario as e:
            click.echo(f"scenario error: {e}", err=True)
            sys.exit(EXIT_SCHEMA)
    try:
        if seed is not None:
            cfg = cfg.with_seed(seed)
        if mode is not None:
            cfg = cfg.with_mode(mode)
        cfg.validate()
    except BadScenario as e:
        click.echo(f"scenario error: {e}", err=True)
        sys.exit(EXIT_SCHEMA)
    return cfg


@click.group()
def main():
    """Cooperative non-signalized intersection simulator."""


@main.command()
@click.option("--scenario", required=True,
              help="Scenario JSON path or a preset name "
                   f"({', '.join(sorted(PRESETS))}).")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--mode", type=click.Choice([COOPERATIVE, SIGNALIZED]), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def run(scenario, seed, mode, out_dir):
    """Run a scenario headless; write trace CSV, summary, and manifest."""
    cfg = _load(scenario, seed, mode)
    sim = Simulation(cfg, collect_trace=True)
    sim.run()
    summary = write_run_outputs(sim, out_dir, scenario_ref=scenario)
    click.echo(json.dumps({k: summary[k] for k in
                           ("scenario", "mode", "seed", "spawned", "exited",
                            "collisions", "occupancy_overlaps")}))
    if summary["collisions"] or summary["occupancy_overlaps"]:
        click.echo("invariant violation: conflict-point co-occupancy or collision",
                   err=True)
        sys.exit(EXIT_VIOLATION)


@main.command()
@click.option("--scenario", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def compare(scenario, seed, out_dir):
    """Run cooperative and signalized modes on the same spawn sequence and
    emit the comparison table plus per-vehicle speed-distance series."""
    cfg = _load(scenario, seed, None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sims = {}
    metrics = {}
    for mode in (COOPERATIVE, SIGNALIZED):
        sim = Simulation(cfg.with_mode(mode), collect_trace=True)
        metrics[mode] = sim.run()
        sims[mode] = sim
    result = comparison_dict(metrics[COOPERATIVE], metrics[SIGNALIZED])
    outputs = []
    cmp_path = out / "comparison.json"
    cmp_path.write_text(json.dumps(result, indent=1))
    outputs.append(cmp_path)
    sd_path = out / "speed_distance.csv"
    write_speed_distance_csv(sims, sd_path)
    outputs.append(sd_path)
    for mode, sim in sims.items():
        s_path = out / f"summary_{mode}.json"
        s_path.write_text(json.dumps(summary_dict(metrics[mode], sim.cfg), indent=1))
        outputs.append(s_path)
    write_manifest(out, scenario, cfg, outputs)
    click.echo(json.dumps(result["travel_time"] | {
        "energy_reduction_pct": result["energy"]["reduction_pct"]}))
    for m in metrics.values():
        if m.collisions or m.occupancy_overlaps:
            sys.exit(EXIT_VIOLATION)


@main.command()
@click.option("--scenario", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--dt-pred", "dt_preds", multiple=True, type=float,
              help="Prediction step values; repeatable.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sweep(scenario, seed, dt_preds, out_dir):
    """Sweep the motion-estimation prediction step and tabulate maximum
    position error and estimator invocation rate."""
    if not dt_preds:
        click.echo("scenario error: empty prediction-step grid", err=True)
        sys.exit(EXIT_SCHEMA)
    cfg = _load(scenario, seed, None)
    try:
        rows = run_sensitivity(cfg, list(dt_preds))
    except BadScenario as e:
        click.echo(f"scenario error: {e}", err=True)
        sys.exit(EXIT_SCHEMA)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sensitivity.csv"
    write_sensitivity_csv(rows, csv_path)
    write_manifest(out, scenario, cfg, [csv_path])
    for r in rows:
        click.echo(json.dumps(r))


@main.command()
@click.option("--scenario", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--port", type=int, default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--pace", type=float, default=None,
              help="Sim seconds per wall second (default from scenario).")
@click.option("--decimation", type=int, default=None,
              help="Publish a snapshot every N ticks.")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Write trace/summary when the session ends.")
def serve(scenario, seed, port, host, pace, decimation, out_dir):
    """Serve the scenario over WebSocket for the browser UI; runs until
    interrupted. HITL scenarios stay paused until a driver connects."""
    from dataclasses import replace

    from .server import serve as serve_session

    cfg = _load(scenario, seed, None)
    telemetry = cfg.telemetry
    if pace is not None:
        telemetry = replace(telemetry, pace=pace)
    if decimation is not None:
        telemetry = replace(telemetry, decimation=decimation)
    if port is not None:
        telemetry = replace(telemetry, port=port)
    cfg = replace(cfg, telemetry=telemetry)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, cfg.telemetry.port))
        probe.close()
    except OSError:
        click.echo(f"port {cfg.telemetry.port} unavailable", err=True)
        sys.exit(EXIT_PORT)
    click.echo(f"serving {cfg.name} on ws://{host}:{cfg.telemetry.port}")
    serve_session(cfg, cfg.telemetry.port, out_dir=out_dir, host=host)


def entry():
    main(auto_envvar_prefix="CROSSWAY")


if __name__ == "__main__":
    entry()
