"""Backlog simulation under stress shocks and policy interventions, resilience
metrics, parameter sweeps, and the linear recoverability-boundary fit.

Scenario JSON mirrors ScenarioSpec field-for-field; unknown keys are rejected.
Sweep CSV schema: m,epsilon,policy,delta_auc,delta_rt,censored,peak,ens.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import simulate_backlog
from .panel import PanelError

POLICY_KINDS = ("none", "price", "capboost", "hybrid")
SWEEP_MULTIPLIERS = (1.2, 1.5, 1.8, 2.0)
SWEEP_ELASTICITIES = (-0.1, -0.2, -0.3, -0.4, -0.5)


@dataclass(frozen=True)
class PolicySpec:
    kind: str = "none"
    delta_p: float = 0.5
    elasticity: float = -0.2
    boost_frac: float = 0.3
    top_k: int = 30

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise PanelError(f"unknown policy kind {self.kind!r}, want one of {POLICY_KINDS}")
        if self.elasticity > 0:
            raise PanelError("elasticity must be <= 0")
        if self.boost_frac < 0 or self.top_k < 0:
            raise PanelError("boost_frac and top_k must be non-negative")

    @property
    def shapes_arrivals(self) -> bool:
        return self.kind in ("price", "hybrid")

    @property
    def boosts_capacity(self) -> bool:
        return self.kind in ("capboost", "hybrid")


@dataclass(frozen=True)
class ScenarioSpec:
    multiplier: float = 1.5
    shock_start: int = 96
    shock_end: int = 144
    horizon: int = 792
    policy: PolicySpec = field(default_factory=PolicySpec)
    balk_threshold: float = 200.0
    balk_rate: float = 0.05
    recovery_theta_frac: float = 0.01
    recovery_hold: int = 24
    price_always_on: bool = False

    def __post_init__(self):
        if not (0 <= self.shock_start < self.shock_end <= self.horizon):
            raise PanelError("need 0 <= shock_start < shock_end <= horizon")
        if not (0 <= self.balk_rate < 1):
            raise PanelError("balk_rate must be in [0, 1)")
        if self.multiplier < 1:
            raise PanelError("stress multiplier must be >= 1")

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        policy_data = data.pop("policy", {})
        known = {f.name for f in dataclasses.fields(cls)} - {"policy"}
        unknown = set(data) - known
        if unknown:
            raise PanelError(f"unknown scenario keys: {sorted(unknown)}")
        p_known = {f.name for f in dataclasses.fields(PolicySpec)}
        p_unknown = set(policy_data) - p_known
        if p_unknown:
            raise PanelError(f"unknown policy keys: {sorted(p_unknown)}")
        return cls(policy=PolicySpec(**policy_data), **data)


@dataclass(frozen=True)
class BacklogTrajectory:
    """Flows per hour plus opening backlog per hour (backlog has T+1 rows)."""

    backlog: np.ndarray
    arrivals_eff: np.ndarray
    served: np.ndarray
    lost: np.ndarray

    @property
    def horizon(self) -> int:
        return self.arrivals_eff.shape[0]


@dataclass(frozen=True)
class ResilienceReport:
    delta_auc: float
    delta_rt: float
    censored: bool
    peak: float
    ens: float
    policy: str = "none"
    multiplier: float = 1.0


def apply_price(arrivals, spec: PolicySpec, in_shock: bool):
    """Arrival shaping A * max(0, 1 + elasticity * delta_p) inside the shock window."""
    if not in_shock:
        return arrivals
    return np.maximum(0.0, arrivals * (1.0 + spec.elasticity * spec.delta_p))


def apply_capboost(capacity: np.ndarray, risk_scores: np.ndarray, spec: PolicySpec) -> np.ndarray:
    """Boost the top-k risk zones' capacity by (1 + boost_frac); ties break by
    zone index ascending."""
    if len(risk_scores) != len(capacity):
        raise PanelError("risk scores required for every zone")
    boosted = capacity.astype(float).copy()
    k = min(spec.top_k, len(capacity))
    if k == 0 or spec.boost_frac == 0:
        return boosted
    # stable sort on (-score, index): equal scores favor lower zone index
    order = np.argsort(-risk_scores, kind="stable")
    boosted[order[:k]] *= 1.0 + spec.boost_frac
    return boosted


def build_flows(vol_hat: np.ndarray, slr_hat: np.ndarray, capacity: np.ndarray,
                scenario: ScenarioSpec, risk_scores: np.ndarray | None = None):
    """Arrival and service grids (T, Z) for one scenario, pre-balking.

    Pipeline per hour: stress multiplier inside the shock window, then price
    shaping, then capacity boost (persisting from shock start to horizon end).
    """
    T = scenario.horizon
    if vol_hat.shape[0] < T or slr_hat.shape[0] < T:
        raise PanelError(f"forecast series shorter than horizon {T}")
    vol_hat, slr_hat = vol_hat[:T], slr_hat[:T]
    hours = np.arange(T)
    in_shock = (hours >= scenario.shock_start) & (hours < scenario.shock_end)

    m_t = np.where(in_shock, scenario.multiplier, 1.0)
    arrivals = vol_hat * m_t[:, None]
    pol = scenario.policy
    if pol.shapes_arrivals:
        factor = max(0.0, 1.0 + pol.elasticity * pol.delta_p)
        shaped = np.where(in_shock[:, None] | scenario.price_always_on, factor, 1.0)
        arrivals = np.maximum(0.0, arrivals * shaped)

    cap = np.broadcast_to(capacity[None, :], (T, len(capacity))).copy()
    if pol.boosts_capacity and pol.top_k > 0:
        if risk_scores is None:
            raise PanelError("capacity-boost policy requires risk scores")
        boosted = apply_capboost(capacity, risk_scores, pol)
        cap[scenario.shock_start :] = boosted[None, :]
    service = cap * (1.0 - slr_hat)
    return arrivals, service


def simulate(scenario: ScenarioSpec, vol_hat: np.ndarray, slr_hat: np.ndarray,
             capacity: np.ndarray, risk_scores: np.ndarray | None = None) -> BacklogTrajectory:
    """Fold the hourly backlog recursion from an empty queue."""
    arrivals, service = build_flows(vol_hat, slr_hat, capacity, scenario, risk_scores)
    if not (np.all(np.isfinite(arrivals)) and np.all(np.isfinite(service))):
        raise PanelError("non-finite arrivals or service")
    backlog, arrivals_eff, served, lost = simulate_backlog(
        arrivals, service, scenario.balk_threshold, scenario.balk_rate
    )
    return BacklogTrajectory(backlog=backlog, arrivals_eff=arrivals_eff, served=served, lost=lost)


def baseline_scenario(scenario: ScenarioSpec) -> ScenarioSpec:
    """No-shock, no-policy counterpart sharing all other parameters."""
    return dataclasses.replace(scenario, multiplier=1.0, policy=PolicySpec(kind="none"))


def resilience_metrics(scenario_traj: BacklogTrajectory, baseline_traj: BacklogTrajectory,
                       scenario: ScenarioSpec) -> ResilienceReport:
    """Excess-backlog area, recovery time (zone-aggregated, censoring at the
    horizon), per-cell peak, and energy not served over the full horizon."""
    if scenario_traj.backlog.shape != baseline_traj.backlog.shape:
        raise PanelError("trajectory shape mismatch")
    delta = np.maximum(0.0, scenario_traj.backlog - baseline_traj.backlog)[1:]  # (T, Z), end-of-hour
    delta_auc = float(delta.sum())
    peak = float(delta.max())
    ens = float(scenario_traj.lost.sum())

    agg = delta.sum(axis=1)
    theta = scenario.recovery_theta_frac * float(agg.max())
    t_end, h = scenario.shock_end, scenario.recovery_hold
    T = len(agg)
    delta_rt, censored = float(T - t_end), True
    # Scan starts at the shock end itself so a scenario already at baseline
    # reports a recovery time of zero; the hold window clips at the horizon.
    for t in range(t_end, T):
        if np.all(agg[t : t + h + 1] <= theta):
            delta_rt, censored = float(t - t_end), False
            break
    return ResilienceReport(
        delta_auc=delta_auc,
        delta_rt=delta_rt,
        censored=censored,
        peak=peak,
        ens=ens,
        policy=scenario.policy.kind,
        multiplier=scenario.multiplier,
    )


def run_scenario(scenario: ScenarioSpec, vol_hat, slr_hat, capacity,
                 risk_scores=None, baseline_traj: BacklogTrajectory | None = None):
    """Simulate one scenario against its no-shock baseline; returns (report, traj, baseline)."""
    if baseline_traj is None:
        baseline_traj = simulate(baseline_scenario(scenario), vol_hat, slr_hat, capacity)
    traj = simulate(scenario, vol_hat, slr_hat, capacity, risk_scores)
    return resilience_metrics(traj, baseline_traj, scenario), traj, baseline_traj


def run_policy_suite(vol_hat, slr_hat, capacity, risk_scores,
                     scenario: ScenarioSpec | None = None) -> dict[str, ResilienceReport]:
    """The four-policy comparison (none/price/capboost/hybrid) against one
    shared no-shock baseline on identical forecasts."""
    base = scenario or ScenarioSpec()
    baseline_traj = simulate(baseline_scenario(base), vol_hat, slr_hat, capacity)
    reports = {}
    for kind in POLICY_KINDS:
        scen = dataclasses.replace(base, policy=dataclasses.replace(base.policy, kind=kind))
        traj = simulate(scen, vol_hat, slr_hat, capacity, risk_scores)
        reports[kind] = resilience_metrics(traj, baseline_traj, scen)
    return reports


def run_policy_suite_trajectories(vol_hat, slr_hat, capacity, risk_scores,
                                  scenario: ScenarioSpec | None = None):
    """Like run_policy_suite but also returns trajectories (for grid coupling)."""
    base = scenario or ScenarioSpec()
    baseline_traj = simulate(baseline_scenario(base), vol_hat, slr_hat, capacity)
    out = {}
    for kind in POLICY_KINDS:
        scen = dataclasses.replace(base, policy=dataclasses.replace(base.policy, kind=kind))
        traj = simulate(scen, vol_hat, slr_hat, capacity, risk_scores)
        out[kind] = (resilience_metrics(traj, baseline_traj, scen), traj)
    return out, baseline_traj


@dataclass(frozen=True)
class SweepCell:
    multiplier: float
    elasticity: float
    report: ResilienceReport


def sweep_cells(vol_hat, slr_hat, capacity, risk_scores,
                multipliers=SWEEP_MULTIPLIERS, elasticities=SWEEP_ELASTICITIES,
                policy_kind: str = "price", scenario: ScenarioSpec | None = None) -> list[SweepCell]:
    """One report per (multiplier, elasticity) cell; cells are independent."""
    if len(multipliers) == 0 or len(elasticities) == 0:
        raise PanelError("sweep needs at least one multiplier and one elasticity")
    base = scenario or ScenarioSpec()
    cells = []
    for m in multipliers:
        for eps in elasticities:
            scen = dataclasses.replace(
                base,
                multiplier=m,
                policy=dataclasses.replace(base.policy, kind=policy_kind, elasticity=eps),
            )
            report, _, _ = run_scenario(scen, vol_hat, slr_hat, capacity, risk_scores)
            cells.append(SweepCell(multiplier=m, elasticity=eps, report=report))
    return cells


def fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares line y = a + b*x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2 or len(set(x.tolist())) < 2:
        raise PanelError("line fit needs at least 2 distinct points")
    b, a = np.polyfit(x, y, 1)
    return float(a), float(b)


def boundary_points(cells: list[SweepCell]) -> tuple[list[float], list[float], list[float]]:
    """Per elasticity column, the largest tested multiplier with uncensored
    recovery. Columns with no recoverable cell are excluded and reported."""
    by_eps: dict[float, list[SweepCell]] = {}
    for c in cells:
        by_eps.setdefault(c.elasticity, []).append(c)
    eps_out, m_crit, excluded = [], [], []
    for eps in sorted(by_eps):
        recoverable = [c.multiplier for c in by_eps[eps] if not c.report.censored]
        if recoverable:
            eps_out.append(eps)
            m_crit.append(max(recoverable))
        else:
            excluded.append(eps)
    return eps_out, m_crit, excluded


def fit_boundary(cells: list[SweepCell]) -> dict:
    """Linear recoverability boundary m_crit(eps) ~ a + b*eps from sweep cells."""
    eps, m_crit, excluded = boundary_points(cells)
    out: dict = {
        "elasticities": eps,
        "m_crit": m_crit,
        "excluded_columns": excluded,
        "fit": None,
        "warning": None,
    }
    if len(eps) < 2:
        out["warning"] = "fewer than 2 recoverable elasticity columns: fit refused"
        return out
    n_censored = sum(1 for c in cells if c.report.censored)
    if n_censored == 0:
        out["warning"] = "all cells recoverable: boundary lies outside the tested range"
    elif n_censored == len(cells):
        out["warning"] = "all cells blocked: boundary lies outside the tested range"
    a, b = fit_line(np.array(eps), np.array(m_crit))
    out["fit"] = {"a": a, "b": b}
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def report_to_dict(r: ResilienceReport) -> dict:
    return dataclasses.asdict(r)


def save_sweep_csv(cells: list[SweepCell], path: str | Path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "epsilon", "policy", "delta_auc", "delta_rt", "censored", "peak", "ens"])
        for c in cells:
            r = c.report
            writer.writerow(
                [repr(c.multiplier), repr(c.elasticity), r.policy,
                 repr(r.delta_auc), repr(r.delta_rt), int(r.censored), repr(r.peak), repr(r.ens)]
            )


def load_scenario_json(path: str | Path) -> ScenarioSpec:
    with open(path) as fh:
        return ScenarioSpec.from_json_dict(json.load(fh))
