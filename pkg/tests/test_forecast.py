import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evresil import forecast
from evresil.panel import PanelError


def make_graph(n=4, seed=0, radius=5.0):
    rng = np.random.default_rng(seed)
    return forecast.build_graph(rng.uniform(0, 3, size=(n, 2)), radius_km=radius)


class TestGraph:
    def test_normalized_adjacency_symmetric(self):
        g = make_graph(6)
        np.testing.assert_allclose(g.norm_adjacency, g.norm_adjacency.T)

    def test_far_apart_zones_only_self_loops(self):
        coords = np.array([[0.0, 0.0], [100.0, 0.0]])
        g = forecast.build_graph(coords, radius_km=5.0)
        np.testing.assert_allclose(g.norm_adjacency, np.eye(2))

    def test_single_zone_identity(self):
        g = forecast.build_graph(np.zeros((1, 2)))
        np.testing.assert_allclose(g.norm_adjacency, [[1.0]])


class TestTailWeight:
    def test_value_at_three(self):
        assert forecast.tail_weight(3.0, forecast.TailLossConfig()) == 19.0

    def test_baseline_at_zero(self):
        assert forecast.tail_weight(0.0, forecast.TailLossConfig()) == 1.0

    @given(st.floats(0, 3), st.floats(0.001, 3))
    def test_monotone_in_pressure(self, a, b):
        cfg = forecast.TailLossConfig()
        lo, hi = min(a, b), max(a, b)
        assert forecast.tail_weight(lo, cfg) <= forecast.tail_weight(hi, cfg)


class TestForward:
    def test_outputs_in_range(self):
        g = make_graph(4)
        params = forecast.init_params(0, hidden=3)
        xb = np.random.default_rng(0).normal(size=(5, forecast.LOOKBACK, 4, forecast.N_FEATURES))
        slr, vol = forecast.forward(params, xb, g)
        assert slr.shape == (5, 4) and vol.shape == (5, 4)
        assert np.all((slr > 0) & (slr < 1))

    def test_deterministic(self):
        g = make_graph(4)
        params = forecast.init_params(0, hidden=3)
        xb = np.random.default_rng(0).normal(size=(2, 6, 4, forecast.N_FEATURES))
        a = forecast.forward(params, xb, g)
        b = forecast.forward(params, xb, g)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


def finite_difference_check(params, xb, y_slr, y_vol, w, graph, cfg, rng, per_array=6):
    """Worst relative error between analytic gradients and central differences."""
    _, grads = forecast.loss_and_grads(params, xb, y_slr, y_vol, w, graph, cfg)
    worst = 0.0
    for name, arr in params.arrays.items():
        flat = arr.reshape(-1)
        gf = np.asarray(grads[name]).reshape(flat.shape)
        idxs = range(flat.size) if flat.size <= per_array else rng.choice(
            flat.size, per_array, replace=False)
        for i in idxs:
            eps = 1e-5
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = forecast.loss_and_grads(params, xb, y_slr, y_vol, w, graph, cfg)
            flat[i] = orig - eps
            lm, _ = forecast.loss_and_grads(params, xb, y_slr, y_vol, w, graph, cfg)
            flat[i] = orig
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(gf[i]), 1e-6)
            worst = max(worst, abs(fd - gf[i]) / denom)
    return worst


def lively_params(hidden, seed):
    """Random parameters scaled so no ReLU unit is dead (a dead trunk would
    make the finite-difference comparison vacuous)."""
    params = forecast.init_params(seed, hidden=hidden)
    rng = np.random.default_rng(seed + 1)
    for k, v in params.arrays.items():
        params.arrays[k] = rng.normal(0.0, 0.4, size=v.shape)
    return params


class TestGradients:
    def test_matches_central_differences_small(self):
        rng = np.random.default_rng(3)
        Z, H, L, B = 2, 2, 3, 4
        graph = forecast.build_graph(rng.uniform(0, 1, size=(Z, 2)))
        params = lively_params(H, 11)
        xb = rng.normal(size=(B, L, Z, forecast.N_FEATURES))
        y_slr = rng.uniform(0, 1, size=(B, Z))
        y_vol = rng.normal(size=(B, Z))
        w = 1.0 + rng.uniform(0, 2, size=(B, Z))
        worst = finite_difference_check(
            params, xb, y_slr, y_vol, w, graph, forecast.TailLossConfig(), rng, per_array=10)
        assert worst <= 1e-4

    def test_gradients_cover_every_parameter(self):
        rng = np.random.default_rng(4)
        graph = make_graph(3)
        params = lively_params(3, 5)
        xb = rng.normal(size=(2, 4, 3, forecast.N_FEATURES))
        _, grads = forecast.loss_and_grads(
            params, xb, rng.uniform(0, 1, (2, 3)), rng.normal(size=(2, 3)),
            np.ones((2, 3)), graph, forecast.TailLossConfig())
        assert set(grads) == set(params.arrays)
        assert any(np.any(np.asarray(g) != 0) for g in grads.values())


class TestRiskScore:
    def test_identical_zones(self):
        slr = np.full((50, 3), 0.2)
        vol = np.full((50, 3), 10.0)
        scores = forecast.risk_score(slr, vol)
        np.testing.assert_allclose(scores, 0.6 * 0.2 + 0.4 * 1.0)

    def test_zero_loss_fallback(self):
        slr = np.tile([0.1, 0.3], (50, 1))
        vol = np.zeros((50, 2))
        scores = forecast.risk_score(slr, vol * 0.0)
        np.testing.assert_allclose(scores, 0.6 * np.array([0.1, 0.3]))

    def test_riskier_zone_scores_higher(self):
        rng = np.random.default_rng(0)
        slr = rng.uniform(0.1, 0.2, size=(100, 3))
        vol = rng.uniform(5, 10, size=(100, 3))
        slr[:, 2] += 0.5
        scores = forecast.risk_score(slr, vol)
        assert scores[2] > scores[0] and scores[2] > scores[1]


class TestEvalAccuracy:
    def test_perfect_prediction(self):
        x = np.random.default_rng(0).uniform(1, 5, size=(20, 2))
        m = forecast.eval_accuracy(x, x)
        assert m["rmse"] == 0.0 and m["mae"] == 0.0 and m["mape"] == 0.0

    def test_mape_skips_zero_truth(self):
        truth = np.array([[0.0], [10.0]])
        pred = np.array([[1.0], [11.0]])
        m = forecast.eval_accuracy(pred, truth)
        assert m["mape"] == pytest.approx(10.0)
        assert m["mape_skipped"] == 1

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        truth = rng.uniform(0, 10, size=(30, 2))
        pred = truth + rng.normal(0, 1, size=(30, 2))
        m = forecast.eval_accuracy(pred, truth)
        err = (pred - truth).ravel()
        assert m["rmse"] == pytest.approx(float(np.sqrt(np.mean(err**2))))
        assert m["mae"] == pytest.approx(float(np.mean(np.abs(err))))


class TestStressResponse:
    def test_perfectly_monotone_predictor(self):
        resp = forecast.stress_response(lambda m: np.full(3, 0.1 * m))
        assert resp["spearman_rho"] == 1.0
        assert resp["monotone"] is True
        assert resp["pct_zones_worse"] == 1.0

    def test_requires_two_multipliers(self):
        with pytest.raises(PanelError):
            forecast.stress_response(lambda m: np.zeros(2), multipliers=[1.0])

    def test_injection_layer_rho_is_exactly_one(self, synth_panel, lut, aligner):
        resp = forecast.stress_response(
            forecast.injection_zone_mean_slr(synth_panel, lut, aligner))
        assert resp["spearman_rho"] == 1.0
        assert resp["tail_amplification"] > 0


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = forecast.init_params(0, hidden=3)
        stats = forecast.NormStats(1.0, 2.0, 3.0, 4.0)
        p = tmp_path / "model.json"
        forecast.save_checkpoint(p, params, stats, 42)
        params2, stats2, seed = forecast.load_checkpoint(p)
        assert seed == 42 and stats2 == stats
        for k in params.arrays:
            np.testing.assert_array_equal(params.arrays[k], params2.arrays[k])


class TestPersistence:
    def test_volume_is_previous_day(self, injected_panel, aligner, lut):
        hours = np.arange(24, injected_panel.n_hours)
        slr_hat, vol_hat = forecast.persistence_forecast(injected_panel, aligner, lut, hours)
        np.testing.assert_array_equal(vol_hat, injected_panel.demand[hours - 24])
        assert np.all((slr_hat >= 0) & (slr_hat <= 1))

    def test_short_history_uses_previous_hour(self, injected_panel, aligner, lut):
        slr_hat, vol_hat = forecast.persistence_forecast(
            injected_panel, aligner, lut, np.array([3]))
        np.testing.assert_array_equal(vol_hat[0], injected_panel.demand[2])

    def test_rejects_hour_zero(self, injected_panel, aligner, lut):
        with pytest.raises(PanelError):
            forecast.persistence_forecast(injected_panel, aligner, lut, np.array([0]))
