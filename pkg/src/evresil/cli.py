"""Command-line surface for the full pipeline.

Subcommands: generate, fit-lut, inject, train, forecast, simulate, sweep,
grid, report, serve. All randomness derives from one --seed; each stage mixes
in its own name so adding a stage never perturbs another stage's draws.
Output files are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import zlib
from pathlib import Path

import numpy as np

from . import KERNEL_BACKEND, deliverability, forecast, gridcouple, injection, panel, resilience

DEFAULT_SEED = 42
OUT_DIR_ENV = "EVRESIL_OUT_DIR"


def stage_seed(seed: int, stage: str) -> int:
    """Stable per-stage sub-seed."""
    return zlib.crc32(f"{seed}:{stage}".encode()) & 0x7FFFFFFF


def atomic_write(path: Path, write_fn) -> None:
    """write_fn receives a temp path; the result is renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write_fn(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out(args, name: str) -> Path:
    base = Path(os.environ.get(OUT_DIR_ENV, args.out_dir))
    return base / name


def _load_config(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    return {}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_config(args)
    tele_spec = panel.SynthTelemetrySpec(
        samples_per_cell=cfg.get("samples_per_cell", 30), noise=cfg.get("noise", 0.02)
    )
    records = panel.generate_synthetic_telemetry(tele_spec, stage_seed(args.seed, "telemetry"))
    atomic_write(_out(args, "telemetry.csv"), lambda p: panel.save_telemetry_csv(records, p))

    panel_kwargs = {k: v for k, v in cfg.items() if k in {f.name for f in panel.SynthPanelSpec.__dataclass_fields__.values()}}
    p_spec = panel.SynthPanelSpec(**panel_kwargs)
    zp = panel.generate_synthetic_panel(p_spec, stage_seed(args.seed, "panel"))

    def write_panel(tmp: Path):
        meta_tmp = tmp.with_suffix(".meta")
        panel.save_panel_csv(zp, tmp, meta_tmp)
        os.replace(meta_tmp, _out(args, "zones.csv"))

    atomic_write(_out(args, "panel.csv"), write_panel)
    print(f"wrote telemetry ({len(records)} records) and panel ({zp.n_hours}x{zp.n_zones})")
    return 0


def cmd_fit_lut(args) -> int:
    records = panel.load_telemetry_csv(args.telemetry)
    lut = deliverability.fit_lut(records, panel.StationConfig(p_cap=args.p_cap))
    out = _out(args, "lut.csv")

    def write(tmp: Path):
        sidecar_tmp = tmp.with_suffix(".sidecar")
        deliverability.save_lut(lut, tmp, sidecar_tmp)
        os.replace(sidecar_tmp, out.with_suffix(".json"))

    atomic_write(out, write)
    print(f"wrote LUT ({lut.grid.n_temp_bins}x{lut.grid.n_pressure_bins}) from {len(records)} records")
    return 0


def cmd_inject(args) -> int:
    zp = panel.load_panel_csv(args.panel, args.zones)
    split = panel.SplitIndex.from_ratios(zp.n_hours)
    if args.mode == "a1":
        lut = deliverability.load_lut(args.lut, Path(args.lut).with_suffix(".json"))
        records = panel.load_telemetry_csv(args.telemetry)
        src = injection.micro_pressures(records, args.p_cap)
        aligner = injection.fit_aligner_from_panel(zp, src, split.train_end)
        injected = injection.inject_panel(zp, lut, aligner)
        atomic_write(_out(args, "aligner.json"), aligner.to_json)
    else:
        injected = injection.inject_panel_a0(zp)

    def write_panel(tmp: Path):
        meta_tmp = tmp.with_suffix(".meta")
        panel.save_panel_csv(injected, tmp, meta_tmp)
        os.unlink(meta_tmp)

    atomic_write(_out(args, f"panel_injected_{args.mode}.csv"), write_panel)
    print(f"injected panel ({args.mode}); mean slr {injected.slr.mean():.4f}")
    return 0


def cmd_train(args) -> int:
    zp = panel.load_panel_csv(args.panel, args.zones)
    split = panel.SplitIndex.from_ratios(zp.n_hours)
    graph = forecast.build_graph(zp.coords)
    t_cfg = forecast.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, seed=stage_seed(args.seed, "train"), hidden=args.hidden
    )
    loss_cfg = forecast.TailLossConfig(alpha=args.alpha, beta_exp=args.beta, w_slr=args.w_slr)
    params, stats, log = forecast.train(zp, graph, split, loss_cfg, t_cfg)
    atomic_write(_out(args, "model.json"), lambda p: forecast.save_checkpoint(p, params, stats, t_cfg.seed))

    def write_log(p: Path):
        with open(p, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "valid_loss", "valid_slr_rmse", "valid_vol_mae"])
            writer.writeheader()
            writer.writerows(log)

    atomic_write(_out(args, "training_log.csv"), write_log)
    print(f"trained {args.epochs} epochs; final train loss {log[-1]['train_loss']:.6g}")
    return 0


def cmd_forecast(args) -> int:
    zp = panel.load_panel_csv(args.panel, args.zones)
    split = panel.SplitIndex.from_ratios(zp.n_hours)
    hours = np.arange(split.valid_end, zp.n_hours - 1)
    if args.model:
        params, stats, _ = forecast.load_checkpoint(args.model)
        graph = forecast.build_graph(zp.coords)
        slr_hat, vol_hat = forecast.predict(params, graph, zp, stats, hours)
        truth_slr, truth_vol = zp.slr[hours + 1], zp.demand[hours + 1]
    else:
        lut = deliverability.load_lut(args.lut, Path(args.lut).with_suffix(".json"))
        aligner = injection.PressureAligner.from_json(args.aligner)
        slr_hat, vol_hat = forecast.persistence_forecast(zp, aligner, lut, hours)
        truth_slr, truth_vol = zp.slr[hours], zp.demand[hours]

    metrics = {
        "volume": forecast.eval_accuracy(vol_hat, truth_vol),
        "slr": forecast.eval_accuracy(slr_hat, truth_slr),
    }

    def write_npz(p: Path):
        # write through a handle: np.savez would append ".npz" to the temp name
        with open(p, "wb") as fh:
            np.savez(fh, hours=hours, slr_hat=slr_hat, vol_hat=vol_hat)

    atomic_write(_out(args, "forecasts.npz"), write_npz)
    atomic_write(_out(args, "forecast_metrics.json"), lambda p: Path(p).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n"))
    print(f"forecast {len(hours)} hours; volume rmse {metrics['volume']['rmse']:.3f}")
    return 0


def _forecast_inputs(args):
    """Forecast series for simulation: persistence over the full usable range."""
    zp = panel.load_panel_csv(args.panel, args.zones)
    lut = deliverability.load_lut(args.lut, Path(args.lut).with_suffix(".json"))
    aligner = injection.PressureAligner.from_json(args.aligner)
    hours = np.arange(24, zp.n_hours)
    slr_hat, vol_hat = forecast.persistence_forecast(zp, aligner, lut, hours)
    risk = forecast.risk_score(slr_hat, vol_hat)
    return zp, slr_hat, vol_hat, risk


def _scenario_from_args(args, horizon_cap: int) -> resilience.ScenarioSpec:
    if args.scenario:
        scen = resilience.load_scenario_json(args.scenario)
    else:
        scen = resilience.ScenarioSpec()
    if scen.horizon > horizon_cap:
        scen = resilience.ScenarioSpec.from_json_dict({**scen.to_json_dict(), "horizon": horizon_cap})
    return scen


def cmd_simulate(args) -> int:
    zp, slr_hat, vol_hat, risk = _forecast_inputs(args)
    scen = _scenario_from_args(args, len(slr_hat))
    reports = resilience.run_policy_suite(vol_hat, slr_hat, zp.capacity, risk, scen)
    payload = {k: resilience.report_to_dict(r) for k, r in reports.items()}
    atomic_write(_out(args, "policy_suite.json"), lambda p: Path(p).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n"))
    print("policy suite: " + ", ".join(f"{k} dAUC={r.delta_auc:.1f}" for k, r in reports.items()))
    return 0


def cmd_sweep(args) -> int:
    zp, slr_hat, vol_hat, risk = _forecast_inputs(args)
    scen = _scenario_from_args(args, len(slr_hat))
    cells = resilience.sweep_cells(vol_hat, slr_hat, zp.capacity, risk, scenario=scen, policy_kind=args.policy)
    atomic_write(_out(args, "sweep.csv"), lambda p: resilience.save_sweep_csv(cells, p))
    boundary = resilience.fit_boundary(cells)
    atomic_write(_out(args, "boundary.json"), lambda p: Path(p).write_text(json.dumps(boundary, indent=2, sort_keys=True) + "\n"))
    print(f"sweep: {len(cells)} cells; boundary fit {boundary['fit']}")
    return 0


def cmd_grid(args) -> int:
    zp, slr_hat, vol_hat, risk = _forecast_inputs(args)
    scen = _scenario_from_args(args, len(slr_hat))
    out, _ = resilience.run_policy_suite_trajectories(vol_hat, slr_hat, zp.capacity, risk, scen)
    cfg = gridcouple.default_grid_config(float(zp.capacity.sum()))
    report = gridcouple.grid_report({k: t for k, (_, t) in out.items()}, cfg)
    atomic_write(_out(args, "grid_report.json"), lambda p: gridcouple.save_grid_report_json(report, p))
    series = gridcouple.load_series(out["none"][1], cfg)
    atomic_write(_out(args, "load_series.csv"), lambda p: gridcouple.save_load_series_csv(series, p))
    print("grid report: " + ", ".join(f"{k} dH={v['delta_stress_hours']:+.0f}" for k, v in report.items()))
    return 0


def cmd_report(args) -> int:
    zp, slr_hat, vol_hat, risk = _forecast_inputs(args)
    scen = _scenario_from_args(args, len(slr_hat))
    out, _ = resilience.run_policy_suite_trajectories(vol_hat, slr_hat, zp.capacity, risk, scen)
    cfg = gridcouple.default_grid_config(float(zp.capacity.sum()))
    grid = gridcouple.grid_report({k: t for k, (_, t) in out.items()}, cfg)

    def write_summary(p: Path):
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy", "delta_auc", "delta_rt", "censored", "peak", "ens", "delta_stress_hours"])
            for kind in resilience.POLICY_KINDS:
                r = out[kind][0]
                writer.writerow([kind, repr(r.delta_auc), repr(r.delta_rt), int(r.censored),
                                 repr(r.peak), repr(r.ens), repr(grid[kind]["delta_stress_hours"])])

    atomic_write(_out(args, "summary.csv"), write_summary)
    print(f"wrote summary for {len(out)} policies")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(artifact_dir=Path(os.environ.get(OUT_DIR_ENV, args.out_dir)), seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evresil", description="EV-charging resilience pipeline")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--out-dir", type=str, default="out")
    parser.add_argument("--jobs", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="synthetic telemetry + panel")

    p = sub.add_parser("fit-lut", help="estimate the deliverability table")
    p.add_argument("--telemetry", required=True)
    p.add_argument("--p-cap", type=float, default=panel.PER_PLUG_P_CAP_KW)

    p = sub.add_parser("inject", help="inject service-loss rates into a panel")
    p.add_argument("--panel", required=True)
    p.add_argument("--zones", required=True)
    p.add_argument("--lut")
    p.add_argument("--telemetry")
    p.add_argument("--mode", choices=["a1", "a0"], default="a1")
    p.add_argument("--p-cap", type=float, default=panel.PER_PLUG_P_CAP_KW)

    p = sub.add_parser("train", help="train the graph forecaster")
    p.add_argument("--panel", required=True)
    p.add_argument("--zones", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--w-slr", type=float, default=6.0, help="loss weight for the service-loss head")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=2.0)

    p = sub.add_parser("forecast", help="run model or persistence forecasts")
    p.add_argument("--panel", required=True)
    p.add_argument("--zones", required=True)
    p.add_argument("--model")
    p.add_argument("--lut")
    p.add_argument("--aligner")

    for name in ("simulate", "sweep", "grid", "report"):
        p = sub.add_parser(name)
        p.add_argument("--panel", required=True)
        p.add_argument("--zones", required=True)
        p.add_argument("--lut", required=True)
        p.add_argument("--aligner", required=True)
        p.add_argument("--scenario", help="scenario JSON file")
        if name == "sweep":
            p.add_argument("--policy", choices=resilience.POLICY_KINDS, default="price")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


COMMANDS = {
    "generate": cmd_generate,
    "fit-lut": cmd_fit_lut,
    "inject": cmd_inject,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "grid": cmd_grid,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (panel.PanelError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
