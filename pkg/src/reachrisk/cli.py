"""Command-line entry points.

Commands: brs-solve, brs-slice, run, sweep, export-field, validate-config.
All outputs are deterministic CSV/JSON given the same config; the `run`
command's exit code is 1 when an alert fired (0 otherwise, 2 on errors) so
scripts can branch on detection outcomes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import brs
from .config import RunConfig
from .framework import evaluate_event
from .frs import field_rows
from .scenario import SimTrace, crash_band, simulate, sweep as run_sweep

# predictor kind and beta set per published variant name
VARIANTS = {
    "hsrs": ("heuristic", [1.0]),
    "psrs": ("generative", [1.0]),
    "psrs-3b": ("generative", [0.5, 1.0, 2.0]),
    "psrs-5b": ("generative", [1 / 3, 0.5, 1.0, 2.0, 3.0]),
}
SWEEP_THRESHOLDS = [round(0.05 * i, 2) for i in range(1, 11)]


def _load_config(path) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig.from_dict({})


def _event_pipeline(cfg: RunConfig, table, trace, variant: str):
    kind, betas = VARIANTS[variant]
    scenario = trace.config
    predictor = cfg.predictor(scenario=scenario, kind=kind)
    belief = cfg.belief(betas=betas)
    fw = cfg.raw["framework"]
    return evaluate_event(
        trace,
        table,
        cfg.build_engine(),
        predictor,
        belief,
        threshold=float(cfg.raw["threshold"]),
        warmup=fw["warmup"],
        tick=fw["tick"],
        history_span=fw["history_span"],
        history_rate=fw["history_rate"],
    )


def cmd_validate_config(args) -> int:
    cfg = _load_config(args.config)
    print(f"config ok: {len(cfg.raw)} top-level sections")
    return 0


def cmd_brs_solve(args) -> int:
    cfg = _load_config(args.config)
    grid = cfg.brs_grid()
    b = cfg.raw["brs"]
    t0 = time.monotonic()
    table, _ = brs.solve(
        grid,
        float(b["horizon"]),
        geom=cfg.geometry(),
        cfl=float(b["cfl"]),
        n_beta=int(b["beta_samples"]),
        progress=True,
    )
    brs.save_table(table, args.out)
    wall = time.monotonic() - t0
    print(
        f"solved {grid.size} nodes to horizon {table.horizon:.2f} s "
        f"in {table.meta['steps']} steps ({wall:.1f} s); wrote {args.out}"
    )
    return 0


def cmd_brs_slice(args) -> int:
    table = brs.load_table(args.table)
    y1 = table.grid.axes[0].nodes()
    y2 = table.grid.axes[1].nodes()
    psi = float(np.deg2rad(args.psi_deg))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y1_rel", "y2_rel", "value", "unsafe"])
        pts = np.array(
            [[a, b, psi, args.v_ego, args.v_sur] for a in y1 for b in y2]
        )
        vals, _ = brs.interpolate(table, pts)
        for (a, b, _, _, _), v in zip(pts, vals):
            writer.writerow([f"{a:.4g}", f"{b:.4g}", f"{v:.6g}", int(v <= 0.0)])
    print(f"wrote {len(pts)} slice rows to {args.out}")
    return 0


def _load_trace(cfg: RunConfig, args) -> SimTrace:
    if args.trace:
        trace = SimTrace.from_csv(args.trace)
        trace.config = cfg.scenario()  # generative predictor needs a model handle
        return trace
    return simulate(cfg.scenario(v_ego=args.v_ego, v_sur=args.v_sur))


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    table = brs.load_table(args.table)
    trace = _load_trace(cfg, args)
    result = _event_pipeline(cfg, table, trace, args.variant)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ticks_path = out_dir / "ticks.csv"
    betas = VARIANTS[args.variant][1]
    with open(ticks_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        steps = max((len(r.step_sums) for r in result.records), default=0)
        header = ["t", "gate", "p_col", "alert"]
        header += [f"step_sum_{k}" for k in range(1, steps + 1)]
        header += [f"belief_{b:g}" for b in betas]
        writer.writerow(header)
        for r in result.records:
            sums = list(r.step_sums) + [0.0] * (steps - len(r.step_sums))
            writer.writerow(
                [f"{r.t:.2f}", r.gate, f"{r.p_col:.6g}", int(r.alert)]
                + [f"{s:.6g}" for s in sums]
                + [f"{b:.6g}" for b in r.belief]
            )
    summary = {
        "variant": args.variant,
        "crashed": result.crashed,
        "crash_time": result.crash_time,
        "max_p_col": result.max_p_col,
        "first_alert_time": result.first_alert_time,
        "timeliness": result.timeliness,
        "false_positive": result.false_positive,
        "alerts": sum(r.alert for r in result.records),
        "ticks": len(result.records),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary, indent=2))
    return 1 if summary["alerts"] else 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    table = brs.load_table(args.table)
    s = cfg.raw["scenario"]
    speeds = np.arange(args.speed_min, args.speed_max + 0.5, 1.0)
    events = run_sweep(speeds, speeds, cfg.scenario())

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v_ego", "v_sur", "crashed", "crash_time"])
        for e in events:
            writer.writerow(
                [e["v_ego"], e["v_sur"], int(e["crashed"]),
                 "" if e["crash_time"] is None else f"{e['crash_time']:.2f}"]
            )
    band = crash_band(events)
    print(f"{sum(e['crashed'] for e in events)} crashes; band v_ego - v_sur = {band}")

    crashes = [e for e in events if e["crashed"]]
    variants = args.variants.split(",")
    rows = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        for e in crashes:
            trace = simulate(cfg.scenario(v_ego=e["v_ego"], v_sur=e["v_sur"]))
            result = _event_pipeline(cfg, table, trace, variant)
            times = [r.t for r in result.records]
            probs = [r.p_col for r in result.records]
            for thr in SWEEP_THRESHOLDS:
                from .scenario import timeliness as _tl

                tl = _tl(times, probs, trace.crash_time, thr)
                rows.append(
                    {
                        "variant": variant,
                        "v_ego": e["v_ego"],
                        "v_sur": e["v_sur"],
                        "threshold": thr,
                        "timeliness": tl,
                    }
                )
    with open(out_dir / "timeliness.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "v_ego", "v_sur", "threshold", "timeliness"])
        for r in rows:
            writer.writerow(
                [r["variant"], r["v_ego"], r["v_sur"], r["threshold"],
                 "" if r["timeliness"] is None else f"{r['timeliness']:.2f}"]
            )
    with open(out_dir / "timeliness_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "threshold", "mean_timeliness", "events_detected"])
        for variant in variants:
            for thr in SWEEP_THRESHOLDS:
                vals = [
                    r["timeliness"]
                    for r in rows
                    if r["variant"] == variant and r["threshold"] == thr
                    and r["timeliness"] is not None
                ]
                mean = f"{np.mean(vals):.3f}" if vals else ""
                writer.writerow([variant, thr, mean, len(vals)])
    print(f"wrote {len(rows)} timeliness rows to {out_dir}")
    return 0


def cmd_export_field(args) -> int:
    cfg = _load_config(args.config)
    trace = simulate(cfg.scenario(v_ego=args.v_ego, v_sur=args.v_sur))
    kind, betas = VARIANTS[args.variant]
    predictor = cfg.predictor(scenario=trace.config, kind=kind)
    belief = cfg.belief(betas=betas)
    engine = cfg.build_engine()

    i = trace.index_at(args.time)
    fw = cfg.raw["framework"]
    sim_dt = trace.t[1] - trace.t[0]
    stride = int(round(1.0 / fw["history_rate"] / sim_dt))
    lo = max(0, i - int(round(fw["history_span"] / sim_dt)))
    sel = np.arange(i, lo - 1, -stride)[::-1]
    from .predictor import TrackHistory

    history = TrackHistory(trace.t[sel], trace.sur[sel, :4], trace.sur[sel, 4:6])
    forecast = predictor.forecast(history)
    init = np.array(
        [
            trace.sur[i, 0] - trace.ego[i, 0],
            trace.sur[i, 1] - trace.ego[i, 1],
            trace.sur[i, 2],
            trace.sur[i, 3],
        ]
    )
    fields = engine.propagate(engine.init_field(init), forecast, belief)
    min_p = float(cfg.raw["field_export_min_p"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "y1", "y2", "p"])
        for fld in fields[1:]:
            for y1, y2, p in field_rows(fld, engine.state_grid, min_p):
                writer.writerow([fld.k, f"{y1:.4g}", f"{y2:.4g}", f"{p:.6g}"])
    print(f"wrote field export to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reachrisk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("brs-solve", help="solve and cache the BRS value table")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_brs_solve)

    p = sub.add_parser("brs-slice", help="export a 2-D unsafe-area slice to CSV")
    p.add_argument("--table", required=True)
    p.add_argument("--v-ego", type=float, default=30.0)
    p.add_argument("--v-sur", type=float, default=28.0)
    p.add_argument("--psi-deg", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_brs_slice)

    p = sub.add_parser("run", help="assess one cut-in event or imported trace")
    p.add_argument("--config", default=None)
    p.add_argument("--table", required=True)
    p.add_argument("--v-ego", type=float, default=None)
    p.add_argument("--v-sur", type=float, default=None)
    p.add_argument("--trace", default=None, help="trace CSV instead of simulation")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="psrs-5b")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="speed sweep plus timeliness-vs-threshold table")
    p.add_argument("--config", default=None)
    p.add_argument("--table", required=True)
    p.add_argument("--speed-min", type=float, default=20.0)
    p.add_argument("--speed-max", type=float, default=35.0)
    p.add_argument("--variants", default="hsrs,psrs,psrs-3b,psrs-5b")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-field", help="export stochastic FRS snapshots to CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--v-ego", type=float, default=30.0)
    p.add_argument("--v-sur", type=float, default=25.0)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), default="psrs-5b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_field)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
