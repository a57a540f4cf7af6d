"""HTTP JSON API over a loaded artifact directory.

Serves scenario simulation, policy sweeps, and boundary fits to the
scenario-explorer UI. The context (panel + LUT + aligner + forecasts) is
loaded once, is immutable afterwards, and carries a version stamp; requests
pinned to a different version are rejected so a UI talking to a restarted
service knows to reload its controls. Responses are deterministic for a
fixed (context version, body) pair: all floats flow through one JSON encoder
with sorted keys.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import deliverability, forecast, gridcouple, injection, panel, resilience
from .panel import PanelError

MAX_SWEEP_CELLS = 64
MAX_TRAJECTORY_POINTS = 2000


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionContext:
    """Everything a request needs, loaded once and never mutated."""

    version: str
    zone_panel: panel.ZoneHourPanel
    lut: deliverability.DeliverabilityLut
    aligner: injection.PressureAligner
    slr_hat: np.ndarray
    vol_hat: np.ndarray
    risk: np.ndarray
    grid_cfg: gridcouple.GridConfig


def load_context(artifact_dir: str | Path, seed: int = 42) -> SessionContext:
    """Load pipeline artifacts and precompute the forecast series used by
    every simulation request.

    Expects the files the CLI writes: panel.csv + zones.csv, lut.csv +
    lut.json, aligner.json. Forecasts use the persistence path so the
    service works without a trained checkpoint.
    """
    artifact_dir = Path(artifact_dir)
    zp = panel.load_panel_csv(artifact_dir / "panel.csv", artifact_dir / "zones.csv")
    lut = deliverability.load_lut(artifact_dir / "lut.csv", artifact_dir / "lut.json")
    aligner = injection.PressureAligner.from_json(artifact_dir / "aligner.json")
    hours = np.arange(24, zp.n_hours)
    slr_hat, vol_hat = forecast.persistence_forecast(zp, aligner, lut, hours)
    risk = forecast.risk_score(slr_hat, vol_hat)
    grid_cfg = gridcouple.default_grid_config(float(zp.capacity.sum()))

    stamp = hashlib.sha256()
    stamp.update(zp.demand.tobytes())
    stamp.update(lut.eta.tobytes())
    stamp.update(repr(aligner.anchor).encode())
    stamp.update(str(seed).encode())
    version = stamp.hexdigest()[:16]
    return SessionContext(
        version=version,
        zone_panel=zp,
        lut=lut,
        aligner=aligner,
        slr_hat=slr_hat,
        vol_hat=vol_hat,
        risk=risk,
        grid_cfg=grid_cfg,
    )


def build_context_from_panel(
    zp: panel.ZoneHourPanel,
    lut: deliverability.DeliverabilityLut,
    aligner: injection.PressureAligner,
    seed: int = 42,
) -> SessionContext:
    """In-process context builder (tests, notebooks) bypassing the filesystem."""
    hours = np.arange(24, zp.n_hours)
    slr_hat, vol_hat = forecast.persistence_forecast(zp, aligner, lut, hours)
    risk = forecast.risk_score(slr_hat, vol_hat)
    stamp = hashlib.sha256()
    stamp.update(zp.demand.tobytes())
    stamp.update(lut.eta.tobytes())
    stamp.update(str(seed).encode())
    return SessionContext(
        version=stamp.hexdigest()[:16],
        zone_panel=zp,
        lut=lut,
        aligner=aligner,
        slr_hat=slr_hat,
        vol_hat=vol_hat,
        risk=risk,
        grid_cfg=gridcouple.default_grid_config(float(zp.capacity.sum())),
    )


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------

def downsample_series(values: np.ndarray, cap: int = MAX_TRAJECTORY_POINTS):
    """Stride-sample a 1-D series to at most `cap` points.

    Always keeps the first point, the last point, and the series maximum so
    plots never lose the peak. Returns (indices, values) lists.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n <= cap:
        idx = np.arange(n)
    else:
        stride = int(np.ceil(n / (cap - 1)))
        keep = set(range(0, n, stride))
        keep.add(n - 1)
        keep.add(int(np.argmax(values)))
        idx = np.array(sorted(keep))
    return idx.tolist(), values[idx].tolist()


def _error(status: int, message: str, field: str | None = None) -> JSONResponse:
    payload = {"error": message}
    if field is not None:
        payload["field"] = field
    return JSONResponse(content=payload, status_code=status)


_SCENARIO_FIELD_TYPES = {
    "multiplier": float, "shock_start": int, "shock_end": int, "horizon": int,
    "balk_threshold": float, "balk_rate": float, "recovery_theta_frac": float,
    "recovery_hold": int, "price_always_on": bool,
}
_POLICY_FIELD_TYPES = {
    "kind": str, "delta_p": float, "elasticity": float, "boost_frac": float, "top_k": int,
}


def _check_field_types(data: dict, types: dict, prefix: str = "") -> None:
    for key, val in data.items():
        want = types.get(key)
        if want is None:
            continue
        ok = isinstance(val, bool) if want is bool else (
            isinstance(val, (int, float)) and not isinstance(val, bool) if want in (int, float)
            else isinstance(val, want))
        if not ok:
            raise FieldError(f"{prefix}{key} must be of type {want.__name__}", f"{prefix}{key}")


class FieldError(ValueError):
    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


def _parse_scenario(body: dict) -> resilience.ScenarioSpec:
    _check_field_types(body, _SCENARIO_FIELD_TYPES)
    policy = body.get("policy", {})
    if not isinstance(policy, dict):
        raise FieldError("policy must be a JSON object", "policy")
    _check_field_types(policy, _POLICY_FIELD_TYPES, prefix="policy.")
    return resilience.ScenarioSpec.from_json_dict(body)


def _trajectory_payload(traj: resilience.BacklogTrajectory) -> dict:
    total_backlog = traj.backlog.sum(axis=1)
    total_served = traj.served.sum(axis=1)
    total_lost = traj.lost.sum(axis=1)
    out = {}
    for name, series in (("backlog", total_backlog), ("served", total_served), ("lost", total_lost)):
        idx, vals = downsample_series(series)
        out[name] = {"hours": idx, "values": vals}
    return out


def _load_series_payload(series: gridcouple.LoadSeries, cfg: gridcouple.GridConfig) -> dict:
    return {
        "hour": np.arange(series.p_total.shape[0]).tolist(),
        "p_base_kw": series.p_base.tolist(),
        "p_ev_kw": series.p_ev.tolist(),
        "p_total_kw": series.p_total.tolist(),
        "lambda": series.lam.tolist(),
        "transformer_kw": cfg.transformer_capacity_kw,
        "stress_threshold": cfg.stress_threshold,
    }


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------

def build_app(artifact_dir: str | Path | None = None, seed: int = 42,
              context: SessionContext | None = None) -> FastAPI:
    """Assemble the API. Pass either an artifact directory or a prebuilt
    context; with neither, every data endpoint answers 503 until
    `app.state.context` is set."""
    app = FastAPI(title="evresil", docs_url=None, redoc_url=None)
    if context is None and artifact_dir is not None:
        context = load_context(artifact_dir, seed)
    app.state.context = context

    def ctx_or_503():
        ctx = app.state.context
        if ctx is None:
            return None, _error(503, "context not loaded")
        return ctx, None

    def version_check(ctx: SessionContext, body: dict):
        pinned = body.pop("context_version", None)
        if pinned is not None and pinned != ctx.version:
            return _error(409, f"stale context version {pinned!r}; reload /api/context")
        return None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "context_loaded": app.state.context is not None}

    @app.get("/api/context")
    def get_context():
        ctx, err = ctx_or_503()
        if err:
            return err
        zp = ctx.zone_panel
        split = panel.SplitIndex.from_ratios(zp.n_hours)
        defaults = resilience.ScenarioSpec()
        return {
            "version": ctx.version,
            "n_zones": zp.n_zones,
            "n_hours": zp.n_hours,
            "split": {"train_end": split.train_end, "valid_end": split.valid_end},
            "lut_provenance": ctx.lut.provenance,
            "defaults": {
                "scenario": defaults.to_json_dict(),
                "multiplier_choices": list(resilience.SWEEP_MULTIPLIERS),
                "elasticity_choices": list(resilience.SWEEP_ELASTICITIES),
                "policy_kinds": list(resilience.POLICY_KINDS),
                "horizon_max": int(ctx.slr_hat.shape[0]),
            },
            "limits": {
                "max_sweep_cells": MAX_SWEEP_CELLS,
                "max_trajectory_points": MAX_TRAJECTORY_POINTS,
            },
        }

    @app.post("/api/scenario")
    async def post_scenario(request: Request):
        ctx, err = ctx_or_503()
        if err:
            return err
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "request body must be a JSON object")
        err = version_check(ctx, body)
        if err:
            return err
        try:
            scen = _parse_scenario(body)
        except FieldError as exc:
            return _error(400, str(exc), field=exc.field)
        except (PanelError, TypeError, ValueError) as exc:
            return _error(400, str(exc), field=_guess_field(exc, body))
        if scen.horizon > ctx.slr_hat.shape[0]:
            return _error(400, f"horizon exceeds available forecasts ({ctx.slr_hat.shape[0]})",
                          field="horizon")
        report, traj, _ = resilience.run_scenario(
            scen, ctx.vol_hat, ctx.slr_hat, ctx.zone_panel.capacity, ctx.risk)
        series = gridcouple.load_series(traj, ctx.grid_cfg)
        return {
            "context_version": ctx.version,
            "scenario": scen.to_json_dict(),
            "report": resilience.report_to_dict(report),
            "trajectory": _trajectory_payload(traj),
            "load_series": _load_series_payload(series, ctx.grid_cfg),
        }

    @app.post("/api/sweep")
    async def post_sweep(request: Request):
        ctx, err = ctx_or_503()
        if err:
            return err
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "request body must be a JSON object")
        err = version_check(ctx, body)
        if err:
            return err
        multipliers = body.get("multipliers", list(resilience.SWEEP_MULTIPLIERS))
        elasticities = body.get("elasticities", list(resilience.SWEEP_ELASTICITIES))
        policy_kind = body.get("policy", "hybrid")
        try:
            multipliers = [float(m) for m in multipliers]
            elasticities = [float(e) for e in elasticities]
        except (TypeError, ValueError):
            return _error(400, "multipliers and elasticities must be numeric lists",
                          field="multipliers")
        if not multipliers or not elasticities:
            return _error(400, "multipliers and elasticities must be non-empty", field="multipliers")
        if policy_kind not in resilience.POLICY_KINDS:
            return _error(400, f"unknown policy kind {policy_kind!r}", field="policy")
        n_cells = len(multipliers) * len(elasticities)
        if n_cells > MAX_SWEEP_CELLS:
            return _error(413, f"grid of {n_cells} cells exceeds the cap of {MAX_SWEEP_CELLS}")
        try:
            scen = _parse_scenario(body.get("scenario", {}))
        except FieldError as exc:
            return _error(400, str(exc), field=f"scenario.{exc.field}")
        except (PanelError, TypeError, ValueError) as exc:
            return _error(400, str(exc), field="scenario")
        if scen.horizon > ctx.slr_hat.shape[0]:
            scen = resilience.ScenarioSpec.from_json_dict(
                {**scen.to_json_dict(), "horizon": int(ctx.slr_hat.shape[0])})
        cells = resilience.sweep_cells(
            ctx.vol_hat, ctx.slr_hat, ctx.zone_panel.capacity, ctx.risk,
            multipliers=multipliers, elasticities=elasticities,
            scenario=scen, policy_kind=policy_kind)
        boundary = resilience.fit_boundary(cells)
        return {
            "context_version": ctx.version,
            "policy": policy_kind,
            "cells": [
                {
                    "multiplier": c.multiplier,
                    "elasticity": c.elasticity,
                    "report": resilience.report_to_dict(c.report),
                }
                for c in cells
            ],
            "boundary": boundary,
        }

    return app


def _guess_field(exc: Exception, body: dict) -> str | None:
    """Best-effort field attribution for validation errors."""
    msg = str(exc)
    for key in list(body) + ["elasticity", "multiplier", "horizon", "policy",
                             "shock_start", "shock_end", "balk_rate", "kind"]:
        if key in msg:
            return key
    if "argument" in msg:
        for key in body:
            if key in msg:
                return key
    return None
