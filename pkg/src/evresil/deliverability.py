"""Deliverability surface estimation: temperature/pressure binning, per-cell
means, and the hard monotone envelope (running minimum along pressure).

LUT CSV schema: t_bin_low_c,s_bin_low,eta,count (one row per grid cell), with a
JSON sidecar carrying bin edges and provenance counters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .panel import PanelError, StationConfig, TelemetryRecord

TEMP_EDGES = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
PRESSURE_MAX = 3.0
PRESSURE_STEP = 0.1
TRUSTED_MIN_COUNT = 30


@dataclass(frozen=True)
class BinGrid:
    """Left-closed right-open bins (last bin closed); out-of-range values clip."""

    temp_edges: tuple[float, ...] = TEMP_EDGES
    pressure_edges: tuple[float, ...] = tuple(np.linspace(0.0, PRESSURE_MAX, 31))

    def __post_init__(self):
        for edges in (self.temp_edges, self.pressure_edges):
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise PanelError("bin edges must be strictly increasing")

    @property
    def n_temp_bins(self) -> int:
        return len(self.temp_edges) - 1

    @property
    def n_pressure_bins(self) -> int:
        return len(self.pressure_edges) - 1

    def temp_bin(self, temp_c) -> np.ndarray:
        idx = np.searchsorted(self.temp_edges, temp_c, side="right") - 1
        return np.clip(idx, 0, self.n_temp_bins - 1)

    def pressure_bin(self, s) -> np.ndarray:
        idx = np.searchsorted(self.pressure_edges, s, side="right") - 1
        return np.clip(idx, 0, self.n_pressure_bins - 1)


def bin_observation(temp_c: float, s: float, grid: BinGrid) -> tuple[int, int]:
    """Total map from (temperature, pressure) to grid indices."""
    return int(grid.temp_bin(temp_c)), int(grid.pressure_bin(s))


def compute_pressure(p_req: float, p_cap: float) -> float:
    """Dimensionless pressure: requested power over rated capacity."""
    if p_cap <= 0:
        raise PanelError(f"p_cap must be positive, got {p_cap}")
    if p_req < 0:
        raise PanelError(f"p_req must be non-negative, got {p_req}")
    return p_req / p_cap


def compute_eta(p_num: float, p_req: float) -> float | None:
    """Served fraction p_num / p_req clipped to [0, 1]; None signals a skip at p_req = 0."""
    if p_req <= 0:
        return None
    return float(np.clip(p_num / p_req, 0.0, 1.0))


@dataclass(frozen=True)
class RawSurface:
    """Per-cell mean deliverability and support counts; NaN where unobserved."""

    eta_mean: np.ndarray
    count: np.ndarray
    grid: BinGrid
    skipped: int = 0


@dataclass(frozen=True)
class DeliverabilityLut:
    """Fully populated monotone deliverability table."""

    eta: np.ndarray
    count: np.ndarray
    grid: BinGrid
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.isnan(self.eta).any():
            raise PanelError("LUT must be fully populated")
        if np.any(np.diff(self.eta, axis=1) > 0):
            raise PanelError("LUT rows must be non-increasing along pressure")

    @property
    def trusted_mask(self) -> np.ndarray:
        return self.count >= TRUSTED_MIN_COUNT


def estimate_raw_surface(
    records: list[TelemetryRecord],
    cfg: StationConfig,
    grid: BinGrid | None = None,
    use_setpoint: bool = False,
) -> RawSurface:
    """Average deliverability ratios per (temperature, pressure) cell.

    Records with zero requested power are skipped and counted. By default the
    realized-power ratio is the target; use_setpoint switches to the setpoint
    ratio for diagnostics.
    """
    if not records:
        raise PanelError("no telemetry records")
    grid = grid or BinGrid()
    sums = np.zeros((grid.n_temp_bins, grid.n_pressure_bins))
    counts = np.zeros_like(sums, dtype=int)
    skipped = 0
    for rec in records:
        numer = rec.p_set if use_setpoint else rec.p_real
        eta = compute_eta(numer, rec.p_req)
        if eta is None:
            skipped += 1
            continue
        ti, si = bin_observation(rec.temp_c, compute_pressure(rec.p_req, cfg.p_cap), grid)
        sums[ti, si] += eta
        counts[ti, si] += 1
    if counts.sum() == 0:
        raise PanelError("all telemetry records were skipped (zero requested power)")
    with np.errstate(invalid="ignore"):
        eta_mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return RawSurface(eta_mean=eta_mean, count=counts, grid=grid, skipped=skipped)


def _fill_row(row: np.ndarray) -> np.ndarray:
    """Forward-fill NaNs from the previous populated cell; leading NaNs take
    the first populated value. Rows with no populated cell are left as NaN."""
    out = row.copy()
    populated = np.flatnonzero(~np.isnan(out))
    if populated.size == 0:
        return out
    first = populated[0]
    out[:first] = out[first]
    for k in range(first + 1, out.size):
        if np.isnan(out[k]):
            out[k] = out[k - 1]
    return out


def monotone_envelope(raw: RawSurface) -> DeliverabilityLut:
    """Fill empty cells, then enforce the running minimum along pressure."""
    if np.all(np.isnan(raw.eta_mean)):
        raise PanelError("entirely empty surface")
    filled = np.vstack([_fill_row(row) for row in raw.eta_mean])

    empty_rows = np.flatnonzero(np.all(np.isnan(filled), axis=1))
    if empty_rows.size:
        # Fully empty temperature rows fall back to the column-wise mean
        # across populated rows (itself forward-filled before use).
        with np.errstate(invalid="ignore"):
            col_mean = np.nanmean(raw.eta_mean, axis=0)
        col_mean = _fill_row(col_mean)
        filled[empty_rows] = col_mean

    eta = np.minimum.accumulate(filled, axis=1)
    n_filled = int(np.isnan(raw.eta_mean).sum())
    return DeliverabilityLut(
        eta=eta,
        count=raw.count.copy(),
        grid=raw.grid,
        provenance={
            "n_records": int(raw.count.sum()) + raw.skipped,
            "n_skipped": raw.skipped,
            "n_filled_cells": n_filled,
            "n_empty_rows": int(empty_rows.size),
        },
    )


def fit_lut(
    records: list[TelemetryRecord],
    cfg: StationConfig | None = None,
    grid: BinGrid | None = None,
    use_setpoint: bool = False,
) -> DeliverabilityLut:
    """Full Stage-1 pipeline: raw surface then monotone envelope."""
    return monotone_envelope(estimate_raw_surface(records, cfg or StationConfig(), grid, use_setpoint))


def lut_query(lut: DeliverabilityLut, temp_c, s):
    """Look up deliverability for (possibly array-valued) temperature and pressure."""
    ti = lut.grid.temp_bin(np.asarray(temp_c, dtype=float))
    si = lut.grid.pressure_bin(np.asarray(s, dtype=float))
    out = lut.eta[ti, si]
    if np.isscalar(temp_c) and np.isscalar(s):
        return float(out)
    return out


def save_lut(lut: DeliverabilityLut, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_bin_low_c", "s_bin_low", "eta", "count"])
        for ti in range(lut.grid.n_temp_bins):
            for si in range(lut.grid.n_pressure_bins):
                writer.writerow(
                    [
                        repr(float(lut.grid.temp_edges[ti])),
                        repr(float(lut.grid.pressure_edges[si])),
                        repr(float(lut.eta[ti, si])),
                        int(lut.count[ti, si]),
                    ]
                )
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    with open(sidecar, "w") as fh:
        json.dump(
            {
                "temp_edges": list(lut.grid.temp_edges),
                "pressure_edges": [float(e) for e in lut.grid.pressure_edges],
                "provenance": lut.provenance,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def load_lut(csv_path: str | Path, sidecar_path: str | Path | None = None) -> DeliverabilityLut:
    csv_path = Path(csv_path)
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    with open(sidecar) as fh:
        meta = json.load(fh)
    grid = BinGrid(temp_edges=tuple(meta["temp_edges"]), pressure_edges=tuple(meta["pressure_edges"]))
    eta = np.full((grid.n_temp_bins, grid.n_pressure_bins), np.nan)
    count = np.zeros_like(eta, dtype=int)
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ti = int(grid.temp_bin(float(row["t_bin_low_c"])))
            si = int(grid.pressure_bin(float(row["s_bin_low"])))
            eta[ti, si] = float(row["eta"])
            count[ti, si] = int(row["count"])
    return DeliverabilityLut(eta=eta, count=count, grid=grid, provenance=meta.get("provenance", {}))
