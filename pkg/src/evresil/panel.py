"""Shared data model: telemetry records, zone-hour panels, loaders, synthetic generators.

Telemetry CSV schema:  timestamp,station_id,p_req_kw,p_set_kw,p_real_kw,temp_c
Panel CSV schema:      zone,hour,demand_kwh,temp_c
Panel metadata schema: zone,capacity_kwh_per_h,x_km,y_km
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

PER_PLUG_P_CAP_KW = 86.25
STATION_P_CAP_KW = 172.5

TELEMETRY_COLUMNS = ["timestamp", "station_id", "p_req_kw", "p_set_kw", "p_real_kw", "temp_c"]
PANEL_COLUMNS = ["zone", "hour", "demand_kwh", "temp_c"]
META_COLUMNS = ["zone", "capacity_kwh_per_h", "x_km", "y_km"]


class PanelError(ValueError):
    """Raised on malformed input files or invariant violations."""


@dataclass(frozen=True)
class TelemetryRecord:
    """One minute of micro-scale charging observation."""

    timestamp: int
    station_id: str
    p_req: float
    p_set: float
    p_real: float
    temp_c: float

    REALIZED_TOLERANCE_KW = 1.0

    def validate(self) -> None:
        if self.p_req < 0 or self.p_set < 0 or self.p_real < 0:
            raise PanelError("negative power value")
        if self.p_real > self.p_set + self.REALIZED_TOLERANCE_KW:
            raise PanelError(
                f"realized power {self.p_real} exceeds setpoint {self.p_set} "
                f"beyond the {self.REALIZED_TOLERANCE_KW} kW tolerance"
            )


@dataclass(frozen=True)
class StationConfig:
    """Rated physical capacity of the charging hardware."""

    p_cap: float = PER_PLUG_P_CAP_KW

    def __post_init__(self):
        if self.p_cap <= 0:
            raise PanelError(f"p_cap must be positive, got {self.p_cap}")


@dataclass(frozen=True)
class SplitIndex:
    """Chronological train/valid/test boundaries (hour indices)."""

    train_end: int
    valid_end: int
    n_hours: int

    def __post_init__(self):
        if not (0 < self.train_end < self.valid_end < self.n_hours):
            raise PanelError(
                f"invalid split: 0 < {self.train_end} < {self.valid_end} < {self.n_hours} required"
            )

    @classmethod
    def from_ratios(cls, n_hours: int, train_frac: float = 0.70, valid_frac: float = 0.15) -> "SplitIndex":
        train_end = int(round(n_hours * train_frac))
        valid_end = int(round(n_hours * (train_frac + valid_frac)))
        return cls(train_end=train_end, valid_end=valid_end, n_hours=n_hours)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ZoneHourPanel:
    """Dense city-scale zone-hour arrays; immutable after construction.

    demand/temp_c/s_raw are (T, Z); capacity is (Z,); coords is (Z, 2) in km.
    s_raw = demand / (capacity * delta_t) elementwise.
    """

    demand: np.ndarray
    temp_c: np.ndarray
    capacity: np.ndarray
    coords: np.ndarray
    s_raw: np.ndarray
    s_mapped: Optional[np.ndarray] = None
    slr: Optional[np.ndarray] = None
    delta_t: float = 1.0

    @property
    def n_hours(self) -> int:
        return self.demand.shape[0]

    @property
    def n_zones(self) -> int:
        return self.demand.shape[1]

    @classmethod
    def build(cls, demand, temp_c, capacity, coords, s_mapped=None, slr=None, delta_t=1.0):
        demand = _frozen(demand)
        temp_c = _frozen(temp_c)
        capacity = _frozen(capacity)
        coords = _frozen(coords)
        if demand.ndim != 2 or demand.shape != temp_c.shape:
            raise PanelError("demand and temp_c must be matching (T, Z) arrays")
        if capacity.shape != (demand.shape[1],):
            raise PanelError("capacity must be a (Z,) array")
        if np.any(demand < 0):
            raise PanelError("negative demand")
        if np.any(capacity <= 0):
            raise PanelError("capacity must be positive for every zone")
        s_raw = _frozen(demand / (capacity[None, :] * delta_t))
        return cls(
            demand=demand,
            temp_c=temp_c,
            capacity=capacity,
            coords=coords,
            s_raw=s_raw,
            s_mapped=None if s_mapped is None else _frozen(s_mapped),
            slr=None if slr is None else _frozen(slr),
            delta_t=delta_t,
        )

    def with_injection(self, s_mapped: np.ndarray, slr: np.ndarray) -> "ZoneHourPanel":
        slr = np.asarray(slr, dtype=float)
        if np.any(slr < 0) or np.any(slr > 1):
            raise PanelError("slr outside [0, 1]")
        return replace(self, s_mapped=_frozen(s_mapped), slr=_frozen(slr))

    def with_demand_scaled(self, multiplier: float) -> "ZoneHourPanel":
        """Scale all demand and recompute s_raw; injection fields are dropped."""
        return ZoneHourPanel.build(
            self.demand * multiplier, self.temp_c, self.capacity, self.coords, delta_t=self.delta_t
        )


def load_telemetry_csv(path: str | Path) -> list[TelemetryRecord]:
    """Parse the telemetry CSV, rejecting malformed rows with line numbers."""
    path = Path(path)
    if not path.exists():
        raise PanelError(f"telemetry file not found: {path}")
    records: list[TelemetryRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError(f"empty telemetry file: {path}")
        if [h.strip() for h in header] != TELEMETRY_COLUMNS:
            raise PanelError(f"unexpected telemetry header {header}, want {TELEMETRY_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(TELEMETRY_COLUMNS):
                raise PanelError(f"line {lineno}: expected {len(TELEMETRY_COLUMNS)} columns, got {len(row)}")
            try:
                rec = TelemetryRecord(
                    timestamp=int(row[0]),
                    station_id=row[1],
                    p_req=float(row[2]),
                    p_set=float(row[3]),
                    p_real=float(row[4]),
                    temp_c=float(row[5]),
                )
            except ValueError as exc:
                raise PanelError(f"line {lineno}: unparseable value ({exc})") from exc
            try:
                rec.validate()
            except PanelError as exc:
                raise PanelError(f"line {lineno}: {exc}") from exc
            records.append(rec)
    return records


def save_telemetry_csv(records: list[TelemetryRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TELEMETRY_COLUMNS)
        for r in records:
            writer.writerow([r.timestamp, r.station_id, repr(float(r.p_req)), repr(float(r.p_set)),
                             repr(float(r.p_real)), repr(float(r.temp_c))])


def load_panel_csv(path: str | Path, meta_path: str | Path) -> ZoneHourPanel:
    """Load a long-format panel CSV plus zone metadata into dense arrays.

    Missing (zone, hour) pairs are zero-filled for demand (count logged);
    missing temperatures take the zone mean.
    """
    path, meta_path = Path(path), Path(meta_path)
    for p in (path, meta_path):
        if not p.exists():
            raise PanelError(f"file not found: {p}")

    zones: list[str] = []
    capacity: dict[str, float] = {}
    coords: dict[str, tuple[float, float]] = {}
    with open(meta_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != META_COLUMNS:
            raise PanelError(f"unexpected metadata header {reader.fieldnames}, want {META_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            z = row["zone"]
            if z in capacity:
                raise PanelError(f"metadata line {lineno}: duplicate zone {z!r}")
            cap = float(row["capacity_kwh_per_h"])
            if cap <= 0:
                raise PanelError(f"metadata line {lineno}: capacity must be positive for zone {z!r}")
            zones.append(z)
            capacity[z] = cap
            coords[z] = (float(row["x_km"]), float(row["y_km"]))

    cells: dict[tuple[str, int], tuple] = {}
    max_hour = -1
    injected_cols = PANEL_COLUMNS + ["s_mapped", "slr"]
    has_injection = False
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames == injected_cols:
            has_injection = True
        elif reader.fieldnames != PANEL_COLUMNS:
            raise PanelError(f"unexpected panel header {reader.fieldnames}, want {PANEL_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            z = row["zone"]
            if z not in capacity:
                raise PanelError(f"line {lineno}: zone {z!r} absent from metadata")
            t = int(row["hour"])
            key = (z, t)
            if key in cells:
                raise PanelError(f"line {lineno}: duplicate (zone, hour) key ({z!r}, {t})")
            extra = (float(row["s_mapped"]), float(row["slr"])) if has_injection else ()
            cells[key] = (float(row["demand_kwh"]), float(row["temp_c"])) + extra
            max_hour = max(max_hour, t)
    if max_hour < 0:
        raise PanelError(f"panel file has no data rows: {path}")

    n_hours, n_zones = max_hour + 1, len(zones)
    zone_index = {z: j for j, z in enumerate(zones)}
    demand = np.zeros((n_hours, n_zones))
    temp = np.full((n_hours, n_zones), np.nan)
    s_mapped = np.zeros((n_hours, n_zones)) if has_injection else None
    slr = np.zeros((n_hours, n_zones)) if has_injection else None
    for (z, t), vals in cells.items():
        j = zone_index[z]
        demand[t, j] = vals[0]
        temp[t, j] = vals[1]
        if has_injection:
            s_mapped[t, j] = vals[2]
            slr[t, j] = vals[3]
    missing = int(np.isnan(temp).sum())
    if missing:
        log.info("panel %s: zero-filled %d missing zone-hour cells", path, missing)
        col_mean = np.nanmean(np.where(np.isnan(temp), np.nan, temp), axis=0)
        col_mean = np.where(np.isnan(col_mean), 0.0, col_mean)
        temp = np.where(np.isnan(temp), col_mean[None, :], temp)

    return ZoneHourPanel.build(
        demand=demand,
        temp_c=temp,
        capacity=np.array([capacity[z] for z in zones]),
        coords=np.array([coords[z] for z in zones]),
        s_mapped=s_mapped,
        slr=slr,
    )


def save_panel_csv(panel: ZoneHourPanel, path: str | Path, meta_path: str | Path) -> None:
    """Write a panel back to the long-format CSV pair, with injected columns when present."""
    extra = panel.s_mapped is not None and panel.slr is not None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PANEL_COLUMNS + (["s_mapped", "slr"] if extra else []))
        for t in range(panel.n_hours):
            for z in range(panel.n_zones):
                row = [z, t, repr(float(panel.demand[t, z])), repr(float(panel.temp_c[t, z]))]
                if extra:
                    row += [repr(float(panel.s_mapped[t, z])), repr(float(panel.slr[t, z]))]
                writer.writerow(row)
    with open(meta_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(META_COLUMNS)
        for z in range(panel.n_zones):
            writer.writerow([z, repr(float(panel.capacity[z])), repr(float(panel.coords[z, 0])), repr(float(panel.coords[z, 1]))])


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def default_deliverability_law(temp_c: float, s: float) -> float:
    """Ground-truth deliverability for synthetic telemetry.

    Full delivery below s = 0.5, then a linear decline whose slope grows
    with temperature (thermal derating), floored at 0.05.
    """
    slope = 0.25 + 0.01 * max(0.0, min(temp_c, 35.0))
    return float(max(0.05, 1.0 - slope * max(0.0, s - 0.5)))


@dataclass(frozen=True)
class SynthTelemetrySpec:
    """Ground-truth law plus sampling plan for synthetic telemetry."""

    law: Callable[[float, float], float] = default_deliverability_law
    samples_per_cell: int = 30
    noise: float = 0.02
    p_cap: float = PER_PLUG_P_CAP_KW
    temp_centers: tuple[float, ...] = (2.5, 7.5, 12.5, 17.5, 22.5, 27.5, 32.5)
    pressure_centers: tuple[float, ...] = tuple(round(0.05 + 0.1 * k, 2) for k in range(30))

    def validate(self) -> None:
        for temp in self.temp_centers:
            prev = np.inf
            for s in self.pressure_centers:
                eta = self.law(temp, s)
                if eta > prev + 1e-12:
                    raise PanelError(
                        f"ground-truth law is not monotone non-increasing at T={temp}, s={s}"
                    )
                prev = eta


def generate_synthetic_telemetry(spec: SynthTelemetrySpec, seed: int) -> list[TelemetryRecord]:
    """Draw telemetry whose realized/requested ratio follows the ground-truth law.

    Samples sit exactly at bin centers so the zero-noise surface recovers the
    law exactly; noise is multiplicative uniform in [1-noise, 1+noise], with
    ratios clipped to [0, 1]. Deterministic for a fixed seed.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    records: list[TelemetryRecord] = []
    ts = 0
    for temp in spec.temp_centers:
        for s in spec.pressure_centers:
            eta_true = spec.law(temp, s)
            for _ in range(spec.samples_per_cell):
                if spec.noise > 0:
                    factor = rng.uniform(1.0 - spec.noise, 1.0 + spec.noise)
                else:
                    factor = 1.0
                eta = min(1.0, max(0.0, eta_true * factor))
                p_req = s * spec.p_cap
                p_real = eta * p_req
                records.append(
                    TelemetryRecord(
                        timestamp=ts,
                        station_id="synth-0",
                        p_req=p_req,
                        p_set=p_real,
                        p_real=p_real,
                        temp_c=temp,
                    )
                )
                ts += 1
    return records


@dataclass(frozen=True)
class SynthPanelSpec:
    """Desk-scale synthetic city panel: diurnal double-peak demand, warm climate."""

    n_zones: int = 20
    n_hours: int = 720
    base_demand: float = 40.0
    morning_peak_hour: float = 9.0
    evening_peak_hour: float = 19.5
    peak_amplitude: float = 60.0
    peak_width_h: float = 2.5
    utilization_range: tuple[float, float] = (0.55, 0.8)
    temp_mean: float = 22.0
    temp_daily_swing: float = 8.0
    demand_noise: float = 0.05
    area_km: float = 12.0

    def validate(self) -> None:
        if self.n_zones <= 0 or self.n_hours <= 0:
            raise PanelError("n_zones and n_hours must be positive")


def _double_peak(hour_of_day: np.ndarray, spec: SynthPanelSpec) -> np.ndarray:
    def bump(center):
        d = np.minimum(np.abs(hour_of_day - center), 24.0 - np.abs(hour_of_day - center))
        return np.exp(-0.5 * (d / spec.peak_width_h) ** 2)

    return spec.base_demand + spec.peak_amplitude * (
        0.8 * bump(spec.morning_peak_hour) + bump(spec.evening_peak_hour)
    )


def generate_synthetic_panel(spec: SynthPanelSpec, seed: int) -> ZoneHourPanel:
    """Generate a zone-hour panel satisfying all panel invariants; seed-deterministic."""
    spec.validate()
    rng = np.random.default_rng(seed)
    Z, T = spec.n_zones, spec.n_hours
    hours = np.arange(T)
    hod = (hours % 24).astype(float)

    shape = _double_peak(hod, spec)  # (T,)
    zone_scale = rng.uniform(0.7, 1.3, size=Z)
    weekly = 1.0 + 0.1 * np.sin(2 * np.pi * hours / (24.0 * 7.0))
    noise = 1.0 + spec.demand_noise * rng.standard_normal((T, Z))
    demand = np.clip(shape[:, None] * zone_scale[None, :] * weekly[:, None] * noise, 0.0, None)

    # Peak demand sits below capacity at the drawn utilization, so the
    # unstressed panel stays under s_raw = 1.
    util = rng.uniform(*spec.utilization_range, size=Z)
    capacity = demand.max(axis=0) / util

    temp = (
        spec.temp_mean
        + spec.temp_daily_swing / 2.0 * np.sin(2 * np.pi * (hod[:, None] - 14.0) / 24.0)
        + 2.0 * rng.standard_normal((T, Z))
    )
    coords = rng.uniform(0.0, spec.area_km, size=(Z, 2))
    return ZoneHourPanel.build(demand=demand, temp_c=temp, capacity=capacity, coords=coords)
