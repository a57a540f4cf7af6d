import json

import numpy as np
import pytest

from evresil import gridcouple, resilience
from evresil.gridcouple import BaseProfileSpec, GridConfig
from evresil.panel import PanelError
from evresil.resilience import BacklogTrajectory


def traj_from_served(served):
    served = np.asarray(served, dtype=float)
    T, Z = served.shape
    return BacklogTrajectory(
        backlog=np.zeros((T + 1, Z)), arrivals_eff=served.copy(),
        served=served, lost=np.zeros((T, Z)))


class TestBaseProfile:
    def test_two_peaks(self):
        spec = BaseProfileSpec()
        t = np.linspace(0, 24, 2400, endpoint=False)
        p = gridcouple.base_profile(t, spec)
        morning = p[(t > 7) & (t < 11)].max()
        midday = p[(t > 12) & (t < 15)].max()
        evening = p[(t > 17.5) & (t < 21.5)].max()
        assert morning > midday and evening > midday

    def test_24h_periodic(self):
        spec = BaseProfileSpec()
        t = np.linspace(0, 24, 97)
        np.testing.assert_allclose(
            gridcouple.base_profile(t, spec), gridcouple.base_profile(t + 24.0, spec))

    def test_positive_everywhere(self):
        p = gridcouple.base_profile(np.arange(0, 48, 0.5), BaseProfileSpec())
        assert np.all(p > 0)


class TestGridConfig:
    def test_invalid_capacity_rejected(self):
        with pytest.raises(PanelError):
            GridConfig(transformer_capacity_kw=0.0)

    def test_invalid_threshold_rejected(self):
        with pytest.raises(PanelError):
            GridConfig(transformer_capacity_kw=100.0, stress_threshold=1.5)

    def test_default_config_peak_loading(self):
        cfg = gridcouple.default_grid_config(1000.0)
        t = np.linspace(0, 24, 2400, endpoint=False)
        peak = gridcouple.base_profile(t, cfg.base_profile_spec).max()
        assert peak / cfg.transformer_capacity_kw == pytest.approx(0.7, rel=1e-3)


class TestEvLoad:
    def test_zero_demand_zero_load(self):
        t = traj_from_served(np.zeros((5, 2)))
        np.testing.assert_array_equal(gridcouple.ev_load(t), 0.0)

    def test_unit_identity(self):
        t = traj_from_served([[50.0]])
        np.testing.assert_allclose(gridcouple.ev_load(t), [50.0])

    def test_delivered_never_exceeds_capacity_rate(self, forecast_series):
        zp, slr_hat, vol_hat, risk = forecast_series
        scen = resilience.ScenarioSpec(horizon=min(300, len(slr_hat)))
        _, traj, _ = resilience.run_scenario(scen, vol_hat, slr_hat, zp.capacity, risk)
        arrivals, service = resilience.build_flows(
            vol_hat, slr_hat, zp.capacity, scen, risk)
        delivered = gridcouple.ev_load(traj, mode="delivered")
        cap_rate = gridcouple.ev_load(traj, mode="capacity_rate", service=service)
        assert np.all(delivered <= cap_rate + 1e-9)


class TestStressHours:
    def test_fixture(self):
        assert gridcouple.stress_hours(np.array([0.7, 0.85, 0.9, 0.75])) == 2.0

    def test_strictly_above(self):
        assert gridcouple.stress_hours(np.array([0.8, 0.8])) == 0.0

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            lam = rng.uniform(0, 1.2, size=rng.integers(1, 60))
            expected = float(sum(1 for v in lam if v > 0.8))
            assert gridcouple.stress_hours(lam) == expected


class TestGridReport:
    def make_trajs(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(20, 60, size=(48, 3))
        return {
            "none": traj_from_served(base * 1.6),
            "price": traj_from_served(base * 0.8),
            "capboost": traj_from_served(base * 1.6),
            "hybrid": traj_from_served(base * 0.8),
        }

    def test_delta_sign_convention(self):
        trajs = self.make_trajs()
        cfg = gridcouple.default_grid_config(150.0)
        report = gridcouple.grid_report(trajs, cfg)
        assert report["none"]["delta_stress_hours"] == 0.0
        # lighter EV load under price -> fewer stress hours -> positive relief
        assert report["price"]["delta_stress_hours"] >= report["capboost"]["delta_stress_hours"]

    def test_report_round_trip(self, tmp_path):
        report = gridcouple.grid_report(self.make_trajs(), gridcouple.default_grid_config(150.0))
        p = tmp_path / "grid.json"
        gridcouple.save_grid_report_json(report, p)
        assert json.loads(p.read_text()) == report


class TestLoadSeriesCsv:
    def test_columns(self, tmp_path):
        series = gridcouple.load_series(
            traj_from_served(np.full((24, 2), 10.0)), gridcouple.default_grid_config(500.0))
        p = tmp_path / "load.csv"
        gridcouple.save_load_series_csv(series, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "hour,p_base_kw,p_ev_kw,p_total_kw,lambda"
        assert len(lines) == 25
