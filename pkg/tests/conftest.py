import numpy as np
import pytest

from evresil import deliverability, injection, panel


@pytest.fixture(scope="session")
def synth_panel():
    return panel.generate_synthetic_panel(panel.SynthPanelSpec(), seed=7)


@pytest.fixture(scope="session")
def synth_telemetry():
    return panel.generate_synthetic_telemetry(panel.SynthTelemetrySpec(noise=0.02), seed=7)


@pytest.fixture(scope="session")
def lut(synth_telemetry):
    return deliverability.fit_lut(synth_telemetry, panel.StationConfig())


@pytest.fixture(scope="session")
def aligner(synth_panel, synth_telemetry):
    split = panel.SplitIndex.from_ratios(synth_panel.n_hours)
    src = injection.micro_pressures(synth_telemetry, panel.StationConfig().p_cap)
    return injection.fit_aligner_from_panel(synth_panel, src, split.train_end)


@pytest.fixture(scope="session")
def injected_panel(synth_panel, lut, aligner):
    return injection.inject_panel(synth_panel, lut, aligner)


@pytest.fixture(scope="session")
def forecast_series(injected_panel, aligner, lut):
    from evresil import forecast

    zp = injected_panel
    hours = np.arange(24, zp.n_hours)
    slr_hat, vol_hat = forecast.persistence_forecast(zp, aligner, lut, hours)
    risk = forecast.risk_score(slr_hat, vol_hat)
    return zp, slr_hat, vol_hat, risk
