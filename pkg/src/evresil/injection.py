"""Cross-domain pressure alignment and service-loss-rate injection.

The aligner matches the city panel's pressure distribution to the micro-domain
distribution by quantile mapping, rescaled so the capacity boundary s = 1 maps
to itself, then clamped to the table's pressure range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .deliverability import PRESSURE_MAX, DeliverabilityLut, lut_query
from .panel import PanelError, ZoneHourPanel


@dataclass(frozen=True)
class EmpiricalCdf:
    """Linear-interpolated empirical CDF over sorted samples.

    Below-support evaluates to 0, above-support to 1; a single-sample CDF
    degenerates to a step at that sample.
    """

    samples: np.ndarray

    @classmethod
    def fit(cls, samples) -> "EmpiricalCdf":
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size == 0:
            raise PanelError("empty sample set")
        if np.any(samples < 0):
            raise PanelError("pressure samples must be non-negative")
        return cls(samples=np.sort(samples))

    @property
    def _ranks(self) -> np.ndarray:
        n = self.samples.size
        if n == 1:
            return np.array([1.0])
        return np.arange(n) / (n - 1)

    def evaluate(self, x):
        if self.samples.size == 1:
            return np.where(np.asarray(x, dtype=float) >= self.samples[0], 1.0, 0.0)
        return np.interp(x, self.samples, self._ranks)

    def inverse(self, q):
        q_arr = np.asarray(q, dtype=float)
        if np.any(q_arr < 0) or np.any(q_arr > 1):
            raise PanelError("quantile outside [0, 1]")
        if self.samples.size == 1:
            return np.full_like(q_arr, self.samples[0])
        return np.interp(q_arr, self._ranks, self.samples)


fit_ecdf = EmpiricalCdf.fit


@dataclass(frozen=True)
class PressureAligner:
    """Anchored quantile map from target-domain (city) to source-domain (micro) pressure."""

    cdf_target: EmpiricalCdf
    cdf_source: EmpiricalCdf
    anchor: float
    s_max_lut: float = PRESSURE_MAX

    @classmethod
    def fit(cls, target_samples, source_samples, s_max_lut: float = PRESSURE_MAX) -> "PressureAligner":
        cdf_target = EmpiricalCdf.fit(target_samples)
        cdf_source = EmpiricalCdf.fit(source_samples)
        anchor = float(cdf_source.inverse(cdf_target.evaluate(1.0)))
        if anchor <= 0:
            raise PanelError("degenerate source distribution: anchor is zero")
        return cls(cdf_target=cdf_target, cdf_source=cdf_source, anchor=anchor, s_max_lut=s_max_lut)

    def map(self, s_raw):
        """Quantile-match, rescale by the anchor, clamp to [0, s_max_lut]."""
        s_arr = np.asarray(s_raw, dtype=float)
        if np.any(s_arr < 0):
            raise PanelError("s_raw must be non-negative")
        s_qm = self.cdf_source.inverse(self.cdf_target.evaluate(s_arr))
        out = np.clip(s_qm / self.anchor, 0.0, self.s_max_lut)
        if np.isscalar(s_raw):
            return float(out)
        return out

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {
                    "target_samples": self.cdf_target.samples.tolist(),
                    "source_samples": self.cdf_source.samples.tolist(),
                    "anchor": self.anchor,
                    "s_max_lut": self.s_max_lut,
                },
                fh,
            )
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "PressureAligner":
        with open(path) as fh:
            data = json.load(fh)
        return cls(
            cdf_target=EmpiricalCdf(samples=np.asarray(data["target_samples"])),
            cdf_source=EmpiricalCdf(samples=np.asarray(data["source_samples"])),
            anchor=float(data["anchor"]),
            s_max_lut=float(data["s_max_lut"]),
        )


anchored_map = PressureAligner.map


def fit_aligner_from_panel(
    panel: ZoneHourPanel, source_pressures, train_end: int | None = None
) -> PressureAligner:
    """Fit the aligner on training-split s_raw only (frozen thereafter)."""
    t_end = train_end if train_end is not None else panel.n_hours
    return PressureAligner.fit(panel.s_raw[:t_end].ravel(), source_pressures)


def micro_pressures(records, p_cap: float) -> np.ndarray:
    """Pressure samples from telemetry requests, for fitting the source CDF."""
    return np.array([r.p_req / p_cap for r in records], dtype=float)


def inject_panel(panel: ZoneHourPanel, lut: DeliverabilityLut, aligner: PressureAligner) -> ZoneHourPanel:
    """Fill s_mapped and slr = 1 - LUT(temperature, s_mapped) for every zone-hour."""
    s_mapped = aligner.map(panel.s_raw)
    eta = lut_query(lut, panel.temp_c, s_mapped)
    slr = 1.0 - eta
    return panel.with_injection(s_mapped=s_mapped, slr=slr)


def baseline_a0(s_raw):
    """Non-injected inverse-pressure rule: slr = 1 - min(1, 1/s); 0 at s = 0."""
    s_arr = np.asarray(s_raw, dtype=float)
    with np.errstate(divide="ignore"):
        eta = np.where(s_arr > 0, np.minimum(1.0, 1.0 / np.where(s_arr > 0, s_arr, 1.0)), 1.0)
    slr = 1.0 - eta
    if np.isscalar(s_raw):
        return float(slr)
    return slr


def inject_panel_a0(panel: ZoneHourPanel) -> ZoneHourPanel:
    """Ablation arm: no alignment, inverse-pressure slr; s_mapped kept as s_raw."""
    return panel.with_injection(s_mapped=panel.s_raw.copy(), slr=baseline_a0(panel.s_raw))
