import numpy as np
import pytest
from fastapi.testclient import TestClient

from evresil import resilience, service


@pytest.fixture(scope="module")
def ctx(injected_panel, lut, aligner):
    return service.build_context_from_panel(injected_panel, lut, aligner)


@pytest.fixture(scope="module")
def client(ctx):
    return TestClient(service.build_app(context=ctx))


@pytest.fixture(scope="module")
def horizon(ctx):
    return int(ctx.slr_hat.shape[0])


class TestHealthAndContext:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200 and r.json()["context_loaded"] is True

    def test_context_metadata(self, client, injected_panel):
        r = client.get("/api/context")
        body = r.json()
        assert body["n_zones"] == injected_panel.n_zones
        assert body["n_hours"] == injected_panel.n_hours
        assert body["defaults"]["multiplier_choices"] == [1.2, 1.5, 1.8, 2.0]
        assert set(body["defaults"]["policy_kinds"]) == set(resilience.POLICY_KINDS)

    def test_503_before_load(self):
        bare = TestClient(service.build_app())
        assert bare.get("/api/context").status_code == 503
        assert bare.post("/api/scenario", json={}).status_code == 503
        assert bare.get("/healthz").json()["context_loaded"] is False


class TestScenarioEndpoint:
    def test_null_shock_zero_deltas(self, client, horizon):
        r = client.post("/api/scenario", json={"multiplier": 1.0, "horizon": horizon})
        assert r.status_code == 200
        rep = r.json()["report"]
        assert rep["delta_auc"] == 0.0 and rep["peak"] == 0.0 and rep["delta_rt"] == 0.0

    def test_hybrid_beats_no_policy(self, client, horizon):
        none = client.post("/api/scenario", json={
            "multiplier": 1.5, "horizon": horizon}).json()["report"]
        hybrid = client.post("/api/scenario", json={
            "multiplier": 1.5, "horizon": horizon,
            "policy": {"kind": "hybrid"}}).json()["report"]
        assert hybrid["delta_auc"] <= none["delta_auc"]

    def test_deterministic_responses(self, client, horizon):
        body = {"multiplier": 1.5, "horizon": horizon, "policy": {"kind": "price"}}
        a = client.post("/api/scenario", json=body)
        b = client.post("/api/scenario", json=body)
        assert a.content == b.content

    def test_malformed_elasticity_names_field(self, client):
        r = client.post("/api/scenario", json={"policy": {"elasticity": "abc"}})
        assert r.status_code == 400
        assert r.json()["field"] == "policy.elasticity"

    def test_unknown_key_rejected(self, client):
        r = client.post("/api/scenario", json={"bogus": 1})
        assert r.status_code == 400

    def test_stale_context_version(self, client):
        r = client.post("/api/scenario", json={"context_version": "not-current"})
        assert r.status_code == 409

    def test_current_version_accepted(self, client, ctx, horizon):
        r = client.post("/api/scenario", json={
            "context_version": ctx.version, "horizon": horizon})
        assert r.status_code == 200

    def test_trajectory_and_load_series_present(self, client, horizon):
        body = client.post("/api/scenario", json={"horizon": horizon}).json()
        assert set(body["trajectory"]) == {"backlog", "served", "lost"}
        assert len(body["load_series"]["p_total_kw"]) == horizon


class TestSweepEndpoint:
    def test_default_grid(self, client, horizon):
        r = client.post("/api/sweep", json={
            "policy": "price", "scenario": {"horizon": horizon}})
        assert r.status_code == 200
        body = r.json()
        assert len(body["cells"]) == 20
        assert "boundary" in body

    def test_cap_enforced(self, client):
        r = client.post("/api/sweep", json={
            "multipliers": list(np.linspace(1.0, 2.0, 13)),
            "elasticities": list(np.linspace(-0.5, -0.1, 5)),
        })
        assert r.status_code == 413

    def test_single_cell_fit_refused(self, client, horizon):
        r = client.post("/api/sweep", json={
            "multipliers": [1.5], "elasticities": [-0.2],
            "scenario": {"horizon": horizon}})
        assert r.status_code == 200
        body = r.json()
        assert len(body["cells"]) == 1
        assert body["boundary"]["fit"] is None
        assert body["boundary"]["warning"]

    def test_repeated_request_identical(self, client, horizon):
        body = {"multipliers": [1.2, 1.5], "elasticities": [-0.2, -0.4],
                "scenario": {"horizon": horizon}}
        a = client.post("/api/sweep", json=body)
        b = client.post("/api/sweep", json=body)
        assert a.content == b.content

    def test_bad_policy_rejected(self, client):
        r = client.post("/api/sweep", json={"policy": "nonsense"})
        assert r.status_code == 400 and r.json()["field"] == "policy"


class TestDownsampling:
    def test_short_series_untouched(self):
        idx, vals = service.downsample_series(np.arange(10.0))
        assert idx == list(range(10)) and vals == list(np.arange(10.0))

    def test_long_series_capped(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, size=5000)
        idx, vals = service.downsample_series(x, cap=100)
        assert len(idx) <= 102  # stride points plus forced last and max

    def test_first_last_max_preserved(self):
        x = np.zeros(5000)
        x[3333] = 7.0
        idx, vals = service.downsample_series(x, cap=50)
        assert idx[0] == 0 and idx[-1] == 4999
        assert 3333 in idx and max(vals) == 7.0
