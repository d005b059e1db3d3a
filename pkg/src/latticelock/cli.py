"""Command-line harness tying the subsystems into the five experiments.

Subcommands: lock, time-scan, kick-scan, position-scan, fit-map.  Each run
is fully determined by (config file, seed): all randomness flows from the
single seed through named substreams, outputs are written atomically, and a
one-line summary is printed and duplicated into a JSON sidecar.

Exit codes: 0 ok, 2 config error, 3 runtime model error, 4 fit non-convergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .echo import echo_signal_thermal, sample_measurement
from .fockspace import TruncationError
from .kicks import SidebandReadout, cancellation_ratio, fit_delay_curve, kick_delay_scan
from .lattice import MotionalState, lattice_period
from .lock import operating_exposure_time, residual_stats, run_lock
from .mapping import (
    FitConvergenceError,
    ModelError,
    ScanRecord,
    compare_to_electrostatics,
    fit_polynomial_map,
    generate_scan_set,
    model_positions,
)
from .output import write_csv, write_json
from .rng import substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_FIT = 4


def _summary(out_dir: str, name: str, stats: dict) -> None:
    line = f"{name}: " + " ".join(f"{k}={v}" for k, v in stats.items())
    print(line)
    write_json(os.path.join(out_dir, f"{name}.summary.json"), stats)


def cmd_lock(cfg: ExperimentConfig, seed: int, out_dir: str) -> int:
    lock_cfg = cfg.lock_config()
    duration = cfg.require("lock").get("duration_s", 600.0)
    trace = run_lock(cfg.drift_process(), lock_cfg, duration, seed, cfg.field)
    rows = zip(trace.times, trace.true_phase, trace.measured_signal,
               trace.applied_voltage, trace.residual_phase)
    write_csv(os.path.join(out_dir, "lock.csv"),
              ["time_s", "true_phase_rad", "signal", "voltage_V", "residual_rad"], rows)
    stats = residual_stats(trace)
    _summary(out_dir, "lock", {
        "duration_s": duration,
        "residual_rms_rad": stats.rms,
        "residual_rms_pi": stats.rms / math.pi,
        "max_drift_corrected_rad": stats.max_drift_corrected,
        "lock_lost_count": stats.lock_lost_count,
    })
    return EXIT_OK


def cmd_time_scan(cfg: ExperimentConfig, seed: int, out_dir: str) -> int:
    e = cfg.require("echo")
    field = cfg.field
    params = cfg.physical
    stark = field.stark_amplitude
    t_max = e.get("t_max_s", 2.0 * 2 * math.pi / stark)
    times = np.linspace(0.0, t_max, e.get("n_times", 121))
    motion = MotionalState.thermal(e.get("nbar", 0.4))
    jitter = e.get("phase_jitter_rms_rad", 0.0)
    reps = e.get("repetitions", 200)
    positions = e.get("phase_positions_rad", [0.0, math.pi / 4, math.pi / 2])
    rows = []
    for u in positions:
        z = (u - field.phase) / field.wavevector
        p_model = np.clip(echo_signal_thermal(motion, field, z, times,
                                              params.lamb_dicke, jitter), 0.0, 1.0)
        rng = substream(seed, "time-scan", f"{u:.9f}")
        for t, p in zip(times, p_model):
            est = sample_measurement(float(p), reps, params.readout_fidelity, rng)
            rows.append((u, t, z, float(p), est.p_up_estimate))
    write_csv(os.path.join(out_dir, "time_scan.csv"),
              ["position_rad", "time_s", "z_m", "p_model", "p_estimate"], rows)
    _summary(out_dir, "time-scan", {
        "curves": len(positions), "points_per_curve": len(times),
        "nbar": e.get("nbar", 0.4), "phase_jitter_rms_rad": jitter,
    })
    return EXIT_OK


def cmd_kick_scan(cfg: ExperimentConfig, seed: int, out_dir: str) -> int:
    kf = cfg.require("kick")
    params = cfg.physical
    field = cfg.field
    readout = SidebandReadout(nbar=kf.get("nbar", 0.4), eta=params.lamb_dicke,
                              pulse_area=kf.get("pulse_area_rad", math.pi))
    rows = []
    results = {}
    for mj in (+0.5, -0.5):
        res = kick_delay_scan(
            field, params, mj, seed,
            target_amplitude=kf.get("target_amplitude", 1.0),
            nbar=kf.get("nbar", 0.4),
            phase_jitter_rms=kf.get("phase_jitter_rms_rad", 0.0),
            repetitions=kf.get("repetitions", 200),
            n_delays=kf.get("n_delays", 40),
            periods=kf.get("periods", 1.25),
            readout=readout)
        results[mj] = res
        for i in range(len(res.delays)):
            rows.append((res.delays[i] * 1e9, mj, res.alpha_true[i],
                         res.p_red[i], res.p_blue[i], res.alpha_inferred[i]))
    write_csv(os.path.join(out_dir, "kick_scan.csv"),
              ["delay_ns", "spin", "alpha_true", "p_red", "p_blue", "alpha_inferred"],
              rows)
    phases = {}
    ratios = {}
    for mj, res in results.items():
        _, _, ph = fit_delay_curve(res.delays, res.alpha_rms, params.trap_freq)
        phases[mj] = ph
        ratios[mj] = cancellation_ratio(res.delays, res.alpha_rms, params.trap_freq)
    dphase = abs(phases[+0.5] - phases[-0.5])
    dphase = min(dphase, 2 * math.pi - dphase)
    _summary(out_dir, "kick-scan", {
        "spin_phase_difference_pi": dphase / math.pi,
        "cancellation_ratio_up": ratios[+0.5],
        "cancellation_ratio_down": ratios[-0.5],
    })
    return EXIT_OK


def _scan_position_source(cfg: ExperimentConfig):
    s = cfg.require("scan")
    if s.get("source", "map") == "model":
        return model_positions(cfg.trap_model())
    truth = cfg.truth_map()
    if truth is None:
        raise ConfigError("scan.source='map' needs scan.map_coefficients")
    return truth


def cmd_position_scan(cfg: ExperimentConfig, seed: int, out_dir: str) -> int:
    s = cfg.require("scan")
    field = cfg.field
    params = cfg.physical
    t_pi = math.pi / field.stark_amplitude
    plan = cfg.scan_plan()
    motion = MotionalState.thermal(s.get("nbar", 0.4))
    records = generate_scan_set(
        _scan_position_source(cfg), field, t_pi, plan,
        eta=params.lamb_dicke, motion=motion,
        phase_jitter_rms=s.get("phase_jitter_rms_rad", 0.0),
        readout_fidelity=params.readout_fidelity, seed=seed)
    rows = []
    for rec in records:
        for v, p in zip(rec.voltages, rec.signals):
            rows.append((v, p, rec.repetitions, rec.scan_kind))
    write_csv(os.path.join(out_dir, "position_scan.csv"),
              ["voltage_V", "signal", "n_reps", "kind"], rows)
    _summary(out_dir, "position-scan", {
        "records": len(records),
        "points": len(rows),
        "v_max": plan.v_max,
    })
    return EXIT_OK


def _records_from_csv(path: str):
    from .output import read_csv
    header, rows = read_csv(path)
    idx = {name: i for i, name in enumerate(header)}
    for col in ("voltage_V", "signal", "n_reps", "kind"):
        if col not in idx:
            raise ConfigError(f"scan CSV {path!r} lacks column {col!r}")
    records = []
    current = None
    for row in rows:
        v = float(row[idx["voltage_V"]])
        p = float(row[idx["signal"]])
        n = int(row[idx["n_reps"]])
        kind = row[idx["kind"]]
        new_block = (
            current is None or kind != current["kind"] or n != current["n"]
            or (len(current["v"]) >= 2
                and abs(v - current["v"][-1]) > 3.0 * abs(current["v"][1] - current["v"][0])))
        if new_block:
            if current is not None:
                records.append(current)
            current = {"kind": kind, "n": n, "v": [], "p": []}
        current["v"].append(v)
        current["p"].append(p)
    if current is not None:
        records.append(current)
    out = []
    for blk in records:
        v = np.array(blk["v"])
        step = float(abs(v[1] - v[0])) if len(v) > 1 else 1.0
        out.append(ScanRecord(voltages=v, signals=np.array(blk["p"]),
                              repetitions=blk["n"], scan_kind=blk["kind"], step=step))
    return out


def cmd_fit_map(cfg: ExperimentConfig, seed: int, out_dir: str, scan_files) -> int:
    if not scan_files:
        raise ConfigError("fit-map needs at least one scan CSV")
    s = cfg.require("scan")
    field = cfg.field
    params = cfg.physical
    t_pi = math.pi / field.stark_amplitude
    records = []
    for path in scan_files:
        records.extend(_records_from_csv(path))
    motion = MotionalState.thermal(s.get("nbar", 0.4))
    pmap, report = fit_polynomial_map(
        records, field, t_pi, eta=params.lamb_dicke, motion=motion,
        phase_jitter_rms=s.get("phase_jitter_rms_rad", 0.0))
    payload = {
        "coefficients": list(report.coefficients),
        "covariance": [[float(x) for x in row] for row in report.covariance],
        "relative_uncertainty": list(report.rel_uncertainty),
        "chi2_dof": report.chi2_dof,
        "n_points": report.n_points,
        "ambiguous_branch": report.ambiguous_branch,
        "branch_delta_chi2": (None if math.isinf(report.branch_delta_chi2)
                              else report.branch_delta_chi2),
    }
    truth = cfg.truth_map()
    if truth is not None:
        v = np.linspace(-s["v_max"], s["v_max"], 4001)
        payload["max_position_error_m"] = float(np.max(np.abs(pmap(v) - truth(v))))
    if s.get("trap_model") is not None:
        model = cfg.trap_model()
        v = np.linspace(-s["v_max"], s["v_max"], 201)
        curve = compare_to_electrostatics(pmap, model, v, lattice_period(params))
        write_csv(os.path.join(out_dir, "map_discrepancy.csv"),
                  ["voltage_V", "map_slope_periods", "model_slope_periods",
                   "relative_deviation"],
                  zip(curve.voltages, curve.map_slope_periods,
                      curve.model_slope_periods, curve.relative_deviation))
    write_json(os.path.join(out_dir, "fit_map.json"), payload)
    stats = {"chi2_dof": report.chi2_dof, "ambiguous_branch": report.ambiguous_branch}
    if "max_position_error_m" in payload:
        stats["max_position_error_nm"] = payload["max_position_error_m"] * 1e9
    _summary(out_dir, "fit-map", stats)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticelock",
        description="Phase-stabilized optical-lattice simulator for a trapped ion.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("lock", "time-scan", "kick-scan", "position-scan", "fit-map"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=".", help="output directory")
        if name == "fit-map":
            p.add_argument("scans", nargs="*", help="scan CSV files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else cfg.seed
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "lock":
            return cmd_lock(cfg, seed, args.out)
        if args.command == "time-scan":
            return cmd_time_scan(cfg, seed, args.out)
        if args.command == "kick-scan":
            return cmd_kick_scan(cfg, seed, args.out)
        if args.command == "position-scan":
            return cmd_position_scan(cfg, seed, args.out)
        if args.command == "fit-map":
            return cmd_fit_map(cfg, seed, args.out, args.scans)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitConvergenceError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ModelError, TruncationError, ValueError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
