"""Run artifact writers: trace CSV, summary JSON, comparison and
sensitivity tables, and the run manifest with output checksums.

Float formatting is fixed so reruns with the same seed produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from .engine import RunMetrics, Simulation

TRACE_COLUMNS = ["t", "vehicle_id", "role", "s", "x", "y", "v", "a",
                 "slot", "intersection", "est_err", "mode"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_trace_csv(sim: Simulation, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_COLUMNS)
        for row in sim.trace_rows:
            t, vid, role, s, x, y, v, a, slot, iid, err, mode = row
            w.writerow([
                f"{t:.4f}", vid, role, f"{s:.4f}", f"{x:.4f}", f"{y:.4f}",
                f"{v:.4f}", f"{a:.4f}", slot, iid, f"{err:.4f}", mode,
            ])


def summary_dict(metrics: RunMetrics, cfg) -> dict:
    completed = metrics.completed()
    per_vehicle = [
        {
            "vehicle_id": m.vehicle_id,
            "role": m.role,
            "spawn_time": round(m.spawn_time, 4),
            "exit_time": None if m.exit_time is None else round(m.exit_time, 4),
            "travel_time": None if m.travel_time is None else round(m.travel_time, 4),
            "min_speed": round(m.min_speed, 4),
            "full_stops": m.full_stops,
            "energy_j": round(m.energy_j, 2),
            "distance_m": round(m.distance_m, 2),
        }
        for m in sorted(metrics.vehicles, key=lambda m: m.vehicle_id)
    ]
    return {
        "scenario": cfg.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "duration_s": metrics.duration_s,
        "spawned": metrics.spawned,
        "exited": metrics.exited,
        "collisions": len(metrics.collisions),
        "occupancy_overlaps": len(metrics.occupancy_overlaps),
        "max_est_err_m": round(metrics.max_est_err, 4),
        "mean_travel_time_s": round(
            sum(m.travel_time for m in completed) / len(completed), 4
        ) if completed else None,
        "mean_energy_j": round(
            sum(m.energy_j for m in completed) / len(completed), 2
        ) if completed else None,
        "total_full_stops": sum(m.full_stops for m in metrics.vehicles),
        "vehicles": per_vehicle,
    }


def write_manifest(out_dir: Path, scenario_ref: str, cfg, outputs: list[Path]) -> Path:
    manifest = {
        "scenario": scenario_ref,
        "name": cfg.name,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": [
            {"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
            for p in outputs
        ],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def write_reservations_csv(sim: Simulation, path: Path) -> None:
    """Slot assignment/release events: slot 0 rows are releases."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tick", "vehicle_id", "intersection", "slot", "targets"])
        for tick, vid, iid, slot, targets in sim.reservation_events:
            w.writerow([tick, vid, iid, slot, "|".join(map(str, targets))])


def write_delivery_log_csv(sim: Simulation, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sent_at", "deliver_at", "link"])
        for msg in sim.channel.sent_log:
            w.writerow([
                f"{msg.sent_at:.4f}",
                "DROPPED" if msg.dropped else f"{msg.deliver_at:.6f}",
                f"{msg.sender_id}->{msg.receiver_id}",
            ])


def write_run_outputs(sim: Simulation, out_dir, scenario_ref: str = "") -> dict:
    """Finalize the run and emit trace + summary + event logs + manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = sim.finalize()
    outputs = []
    if sim.collect_trace:
        trace_path = out / "trace.csv"
        write_trace_csv(sim, trace_path)
        outputs.append(trace_path)
        res_path = out / "reservations.csv"
        write_reservations_csv(sim, res_path)
        outputs.append(res_path)
        log_path = out / "delivery_log.csv"
        write_delivery_log_csv(sim, log_path)
        outputs.append(log_path)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary_dict(metrics, sim.cfg), indent=1))
    outputs.append(summary_path)
    write_manifest(out, scenario_ref or sim.cfg.name, sim.cfg, outputs)
    return summary_dict(metrics, sim.cfg)


def write_speed_distance_csv(sims: dict[str, Simulation], path: Path) -> None:
    """Per-vehicle speed over distance for both comparison modes."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "vehicle_id", "distance_m", "v"])
        for mode, sim in sims.items():
            for row in sim.trace_rows:
                _, vid, _, s, _, _, v, *_ = row
                w.writerow([mode, vid, f"{s:.4f}", f"{v:.4f}"])


def comparison_dict(coop: RunMetrics, sig: RunMetrics) -> dict:
    """Paired travel-time/energy deltas over commonly completed vehicles."""
    coop_done = {m.vehicle_id: m for m in coop.completed()}
    sig_done = {m.vehicle_id: m for m in sig.completed()}
    common = sorted(set(coop_done) & set(sig_done))
    if not common:
        raise ValueError("no commonly completed vehicles to compare")
    tt_c = sum(coop_done[i].travel_time for i in common) / len(common)
    tt_s = sum(sig_done[i].travel_time for i in common) / len(common)
    e_c = sum(coop_done[i].energy_j for i in common) / len(common)
    e_s = sum(sig_done[i].energy_j for i in common) / len(common)
    return {
        "common_vehicles": len(common),
        "travel_time": {
            "cooperative_mean_s": round(tt_c, 4),
            "signalized_mean_s": round(tt_s, 4),
            "reduction_pct": round(100.0 * (1.0 - tt_c / tt_s), 2),
        },
        "energy": {
            "cooperative_mean_j": round(e_c, 2),
            "signalized_mean_j": round(e_s, 2),
            "reduction_pct": round(100.0 * (1.0 - e_c / e_s), 2),
        },
        "full_stops": {
            "cooperative": sum(coop_done[i].full_stops for i in common),
            "signalized": sum(sig_done[i].full_stops for i in common),
        },
    }


def write_sensitivity_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dt_pred", "max_est_err_m", "estimator_calls_per_s"])
        for r in rows:
            w.writerow([
                f"{r['dt_pred']:.6g}",
                f"{r['max_est_err_m']:.6f}",
                f"{r['estimator_calls_per_s']:.6f}",
            ])
