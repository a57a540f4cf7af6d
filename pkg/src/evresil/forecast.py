"""Dual-head spatio-temporal graph forecaster with hand-rolled gradients.

Architecture: two graph-convolution layers (symmetric-normalized adjacency
with self-loops, ReLU), a gated recurrent unit over the 24-hour lookback, and
two small feed-forward heads: a logistic-squashed service-loss head and a
linear log-volume head. Gradients are exact reverse-mode derivations of the
forward pass, verified against finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .panel import PanelError, SplitIndex, ZoneHourPanel

LOOKBACK = 24
N_FEATURES = 8
GRAPH_RADIUS_KM = 5.0
DEFAULT_MULTIPLIERS = (1.0, 1.2, 1.5, 2.0)


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZoneGraph:
    adjacency: np.ndarray
    norm_adjacency: np.ndarray
    radius_km: float


def build_graph(coords: np.ndarray, radius_km: float = GRAPH_RADIUS_KM) -> ZoneGraph:
    """Connect zones within the radius, add self-loops, symmetric-normalize."""
    coords = np.asarray(coords, dtype=float)
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    adj = ((d <= radius_km) & ~np.eye(len(coords), dtype=bool)).astype(float)
    a_tilde = adj + np.eye(len(coords))
    deg = a_tilde.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    norm = d_inv_sqrt[:, None] * a_tilde * d_inv_sqrt[None, :]
    return ZoneGraph(adjacency=adj, norm_adjacency=norm, radius_km=radius_km)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    """Training-split standardization statistics (z-score for T and capacity)."""

    temp_mean: float
    temp_std: float
    cap_mean: float
    cap_std: float

    @classmethod
    def fit(cls, panel: ZoneHourPanel, train_end: int) -> "NormStats":
        temp = panel.temp_c[:train_end]
        return cls(
            temp_mean=float(temp.mean()),
            temp_std=float(max(temp.std(), 1e-9)),
            cap_mean=float(panel.capacity.mean()),
            cap_std=float(max(panel.capacity.std(), 1e-9)),
        )


def build_features(panel: ZoneHourPanel, stats: NormStats) -> np.ndarray:
    """Full-panel feature tensor (T, Z, 8):
    [log1p(V), T_std, s_mapped, C_norm, h_sin, h_cos, d_sin, d_cos]."""
    if panel.s_mapped is None:
        raise PanelError("panel must be injected (s_mapped present) before featurizing")
    T, Z = panel.n_hours, panel.n_zones
    hours = np.arange(T)
    h_phase = 2 * np.pi * (hours % 24) / 24.0
    d_phase = 2 * np.pi * ((hours // 24) % 7) / 7.0
    x = np.empty((T, Z, N_FEATURES))
    x[:, :, 0] = np.log1p(panel.demand)
    x[:, :, 1] = (panel.temp_c - stats.temp_mean) / stats.temp_std
    x[:, :, 2] = panel.s_mapped
    x[:, :, 3] = ((panel.capacity - stats.cap_mean) / stats.cap_std)[None, :]
    x[:, :, 4] = np.sin(h_phase)[:, None]
    x[:, :, 5] = np.cos(h_phase)[:, None]
    x[:, :, 6] = np.sin(d_phase)[:, None]
    x[:, :, 7] = np.cos(d_phase)[:, None]
    return x


def featurize(panel: ZoneHourPanel, t: int, stats: NormStats) -> np.ndarray:
    """Lookback window (24, Z, 8) covering hours [t-23, t]."""
    if t < LOOKBACK - 1:
        raise PanelError(f"t={t} has insufficient history (lookback {LOOKBACK})")
    return build_features(panel, stats)[t - LOOKBACK + 1 : t + 1]


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

PARAM_SHAPES = {
    "w0": ("F", "H"),
    "w1": ("H", "H"),
    "wz": ("H", "H"), "uz": ("H", "H"), "bz": ("H",),
    "wr": ("H", "H"), "ur": ("H", "H"), "br": ("H",),
    "wh": ("H", "H"), "uh": ("H", "H"), "bh": ("H",),
    "ws": ("H", "H"), "bs": ("H",), "vs": ("H",), "cs": (),
    "wv": ("H", "H"), "bv": ("H",), "vv": ("H",), "cv": (),
}


@dataclass
class ModelParams:
    hidden: int
    n_features: int
    arrays: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.hidden, self.n_features, {k: v.copy() for k, v in self.arrays.items()})

    def check_finite(self) -> None:
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise PanelError(f"non-finite parameter array {k!r}")


def init_params(seed: int, hidden: int = 16, n_features: int = N_FEATURES) -> ModelParams:
    rng = np.random.default_rng(seed)
    dims = {"F": n_features, "H": hidden}
    arrays = {}
    for name, shape_spec in PARAM_SHAPES.items():
        shape = tuple(dims[s] for s in shape_spec)
        if name.startswith("b") or name.startswith("c"):
            arrays[name] = np.zeros(shape)
        else:
            scale = 1.0 / np.sqrt(max(shape[0] if shape else 1, 1))
            arrays[name] = rng.uniform(-scale, scale, size=shape)
    return ModelParams(hidden=hidden, n_features=n_features, arrays=arrays)


def _sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def forward(params: ModelParams, xb: np.ndarray, graph: ZoneGraph, want_cache: bool = False):
    """Batched forward pass.

    xb: (B, L, Z, F) -> slr (B, Z) in [0, 1] and log-volume vol (B, Z).
    """
    p = params.arrays
    A = graph.norm_adjacency
    B, L, Z, F = xb.shape
    H = params.hidden
    # Both graph convolutions are per-step independent, so they run batched
    # over every step at once; only the recurrence is sequential.
    ax = np.einsum("ij,bljf->blif", A, xb)
    pre1 = ax @ p["w0"]
    g1 = np.maximum(pre1, 0.0)
    ag = np.einsum("ij,bljh->blih", A, g1)
    pre2 = ag @ p["w1"]
    g2 = np.maximum(pre2, 0.0)

    h = np.zeros((B, Z, H))
    steps = []
    for t in range(L):
        x = g2[:, t]
        zg = _sigmoid(x @ p["wz"] + h @ p["uz"] + p["bz"])
        rg = _sigmoid(x @ p["wr"] + h @ p["ur"] + p["br"])
        cg = np.tanh(x @ p["wh"] + (rg * h) @ p["uh"] + p["bh"])
        h_new = (1.0 - zg) * h + zg * cg
        if want_cache:
            steps.append((h, zg, rg, cg))
        h = h_new
    if not np.all(np.isfinite(h)):
        raise PanelError("non-finite activations in recurrent layer")
    hs = np.tanh(h @ p["ws"] + p["bs"])
    slr_pre = hs @ p["vs"] + p["cs"]
    slr = _sigmoid(slr_pre)
    hv = np.tanh(h @ p["wv"] + p["bv"])
    vol = hv @ p["vv"] + p["cv"]
    if not (np.all(np.isfinite(slr)) and np.all(np.isfinite(vol))):
        raise PanelError("non-finite activations in output heads")
    if want_cache:
        cache = {
            "steps": steps, "h_final": h, "hs": hs, "slr": slr, "hv": hv,
            "ax": ax, "pre1": pre1, "ag": ag, "pre2": pre2, "g2": g2,
        }
        return slr, vol, cache
    return slr, vol


@dataclass(frozen=True)
class TailLossConfig:
    alpha: float = 2.0
    beta_exp: float = 2.0
    w_slr: float = 1.0
    w_vol: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta_exp <= 0:
            raise PanelError("alpha must be >= 0 and beta_exp > 0")


def tail_weight(s_mapped, cfg: TailLossConfig):
    """Loss reweighting 1 + alpha * s^beta emphasizing high-pressure samples."""
    s_arr = np.asarray(s_mapped, dtype=float)
    w = 1.0 + cfg.alpha * s_arr ** cfg.beta_exp
    if np.isscalar(s_mapped):
        return float(w)
    return w


def loss_value(slr, vol, y_slr, y_vol, w, cfg: TailLossConfig) -> float:
    """Tail-weighted squared-error loss combining both heads."""
    l_slr = np.mean(w * (slr - y_slr) ** 2)
    l_vol = np.mean(w * (vol - y_vol) ** 2)
    return float(cfg.w_slr * l_slr + cfg.w_vol * l_vol)


def loss_and_grads(params: ModelParams, xb, y_slr, y_vol, w, graph: ZoneGraph, cfg: TailLossConfig):
    """Loss plus exact gradients for every parameter array."""
    p = params.arrays
    A = graph.norm_adjacency
    slr, vol, cache = forward(params, xb, graph, want_cache=True)
    n = slr.size
    loss = loss_value(slr, vol, y_slr, y_vol, w, cfg)

    g = {k: np.zeros_like(v) for k, v in p.items()}
    dslr = cfg.w_slr * w * 2.0 * (slr - y_slr) / n
    dvol = cfg.w_vol * w * 2.0 * (vol - y_vol) / n

    h_final, hs, hv = cache["h_final"], cache["hs"], cache["hv"]
    # SLR head
    dslr_pre = dslr * slr * (1.0 - slr)
    g["vs"] += np.einsum("bzh,bz->h", hs, dslr_pre)
    g["cs"] += dslr_pre.sum()
    dhs_pre = dslr_pre[..., None] * p["vs"] * (1.0 - hs ** 2)
    g["ws"] += np.einsum("bzh,bzk->hk", h_final, dhs_pre)
    g["bs"] += dhs_pre.sum(axis=(0, 1))
    dh = dhs_pre @ p["ws"].T
    # Volume head
    g["vv"] += np.einsum("bzh,bz->h", hv, dvol)
    g["cv"] += dvol.sum()
    dhv_pre = dvol[..., None] * p["vv"] * (1.0 - hv ** 2)
    g["wv"] += np.einsum("bzh,bzk->hk", h_final, dhv_pre)
    g["bv"] += dhv_pre.sum(axis=(0, 1))
    dh += dhv_pre @ p["wv"].T

    g2 = cache["g2"]
    dg2 = np.zeros_like(g2)
    for t in range(len(cache["steps"]) - 1, -1, -1):
        h_prev, zg, rg, cg = cache["steps"][t]
        x = g2[:, t]
        dzg = dh * (cg - h_prev)
        dcg = dh * zg
        dh_prev = dh * (1.0 - zg)

        dcg_pre = dcg * (1.0 - cg ** 2)
        g["wh"] += np.einsum("bzh,bzk->hk", x, dcg_pre)
        g["uh"] += np.einsum("bzh,bzk->hk", rg * h_prev, dcg_pre)
        g["bh"] += dcg_pre.sum(axis=(0, 1))
        d_rh = dcg_pre @ p["uh"].T
        drg = d_rh * h_prev
        dh_prev += d_rh * rg

        drg_pre = drg * rg * (1.0 - rg)
        g["wr"] += np.einsum("bzh,bzk->hk", x, drg_pre)
        g["ur"] += np.einsum("bzh,bzk->hk", h_prev, drg_pre)
        g["br"] += drg_pre.sum(axis=(0, 1))
        dh_prev += drg_pre @ p["ur"].T

        dzg_pre = dzg * zg * (1.0 - zg)
        g["wz"] += np.einsum("bzh,bzk->hk", x, dzg_pre)
        g["uz"] += np.einsum("bzh,bzk->hk", h_prev, dzg_pre)
        g["bz"] += dzg_pre.sum(axis=(0, 1))
        dh_prev += dzg_pre @ p["uz"].T

        dg2[:, t] = dcg_pre @ p["wh"].T + drg_pre @ p["wr"].T + dzg_pre @ p["wz"].T
        dh = dh_prev

    # Graph-convolution backward, batched over every step at once.
    dpre2 = dg2 * (cache["pre2"] > 0)
    g["w1"] += np.einsum("blzh,blzk->hk", cache["ag"], dpre2)
    dg1 = np.einsum("ij,bljh->blih", A, dpre2 @ p["w1"].T)
    dpre1 = dg1 * (cache["pre1"] > 0)
    g["w0"] += np.einsum("blzf,blzh->fh", cache["ax"], dpre1)

    return loss, g


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    epochs: int = 100
    seed: int = 42
    hidden: int = 16
    max_train_windows: int | None = None


def _windows(features: np.ndarray, hours: np.ndarray) -> np.ndarray:
    return np.stack([features[t - LOOKBACK + 1 : t + 1] for t in hours])


def build_dataset(panel: ZoneHourPanel, stats: NormStats, hours: np.ndarray, cfg: TailLossConfig):
    """Windows ending at each hour t, with targets and tail weights at t+1."""
    features = build_features(panel, stats)
    xb = _windows(features, hours)
    y_slr = panel.slr[hours + 1]
    y_vol = np.log1p(panel.demand[hours + 1])
    w = tail_weight(panel.s_mapped[hours + 1], cfg)
    return xb, y_slr, y_vol, w


def train(
    panel: ZoneHourPanel,
    graph: ZoneGraph,
    split: SplitIndex,
    loss_cfg: TailLossConfig | None = None,
    train_cfg: TrainConfig | None = None,
):
    """Full-batch gradient descent on the training split.

    Returns (params, stats, log) where log is a list of per-epoch dicts.
    Deterministic for a fixed seed; aborts if the loss goes non-finite.
    """
    loss_cfg = loss_cfg or TailLossConfig()
    train_cfg = train_cfg or TrainConfig()
    if panel.slr is None:
        raise PanelError("panel must be injected before training")
    stats = NormStats.fit(panel, split.train_end)

    train_hours = np.arange(LOOKBACK - 1, split.train_end - 1)
    valid_hours = np.arange(split.train_end, split.valid_end - 1)
    if train_cfg.max_train_windows and len(train_hours) > train_cfg.max_train_windows:
        rng = np.random.default_rng(train_cfg.seed)
        train_hours = np.sort(rng.choice(train_hours, train_cfg.max_train_windows, replace=False))

    xb, y_slr, y_vol, w = build_dataset(panel, stats, train_hours, loss_cfg)
    xv, yv_slr, yv_vol, wv = build_dataset(panel, stats, valid_hours, loss_cfg)

    params = init_params(train_cfg.seed, hidden=train_cfg.hidden)
    # Head biases start at the training-target base rates so neither head's
    # initial error dominates the shared trunk's gradients.
    mean_slr = float(np.clip(y_slr.mean(), 1e-4, 1 - 1e-4))
    params.arrays["cs"] = np.array(np.log(mean_slr / (1.0 - mean_slr)))
    params.arrays["cv"] = np.array(float(y_vol.mean()))
    log = []
    for epoch in range(train_cfg.epochs):
        loss, grads = loss_and_grads(params, xb, y_slr, y_vol, w, graph, loss_cfg)
        if not np.isfinite(loss):
            raise PanelError(f"training diverged (non-finite loss) at epoch {epoch}")
        for k in params.arrays:
            params.arrays[k] -= train_cfg.learning_rate * grads[k]
        vs, vv = forward(params, xv, graph)
        log.append(
            {
                "epoch": epoch,
                "train_loss": loss,
                "valid_loss": loss_value(vs, vv, yv_slr, yv_vol, wv, loss_cfg),
                "valid_slr_rmse": float(np.sqrt(np.mean((vs - yv_slr) ** 2))),
                "valid_vol_mae": float(np.mean(np.abs(vv - yv_vol))),
            }
        )
    params.check_finite()
    return params, stats, log


def predict(params: ModelParams, graph: ZoneGraph, panel: ZoneHourPanel, stats: NormStats, hours: np.ndarray, chunk: int = 128):
    """Predict (slr_hat, vol_hat_kwh) for windows ending at each hour (targets are hour+1)."""
    features = build_features(panel, stats)
    slr_out, vol_out = [], []
    for i in range(0, len(hours), chunk):
        xb = _windows(features, hours[i : i + chunk])
        slr, logvol = forward(params, xb, graph)
        slr_out.append(slr)
        vol_out.append(np.clip(np.expm1(logvol), 0.0, None))
    return np.concatenate(slr_out), np.concatenate(vol_out)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: ModelParams, stats: NormStats, seed: int) -> None:
    payload = {
        "hidden": params.hidden,
        "n_features": params.n_features,
        "seed": seed,
        "stats": vars(stats),
        "arrays": {k: v.tolist() for k, v in sorted(params.arrays.items())},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path):
    with open(path) as fh:
        data = json.load(fh)
    params = ModelParams(
        hidden=data["hidden"],
        n_features=data["n_features"],
        arrays={k: np.asarray(v, dtype=float) for k, v in data["arrays"].items()},
    )
    return params, NormStats(**data["stats"]), data["seed"]


# ---------------------------------------------------------------------------
# Scores and diagnostics
# ---------------------------------------------------------------------------

def risk_score(slr_hat: np.ndarray, vol_hat: np.ndarray) -> np.ndarray:
    """Per-zone priority: 0.6 * p95 SLR + 0.4 * p95 predicted lost energy,
    median-normalized; falls back to the SLR term when no loss is predicted."""
    slr_p95 = np.percentile(slr_hat, 95, axis=0)
    lost_p95 = np.percentile(vol_hat * slr_hat, 95, axis=0)
    med = np.median(lost_p95)
    if med <= 0:
        return 0.6 * slr_p95
    return 0.6 * slr_p95 + 0.4 * lost_p95 / med


def eval_accuracy(pred: np.ndarray, truth: np.ndarray) -> dict:
    """RMSE/MAE/MAPE plus peak-hour MAPE (truth above its per-zone 75th percentile)."""
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.size == 0 or pred.shape != truth.shape:
        raise PanelError("empty or mismatched series")
    err = pred - truth
    nonzero = truth != 0
    mape = float(np.mean(np.abs(err[nonzero] / truth[nonzero])) * 100) if nonzero.any() else float("nan")
    if truth.ndim == 2:
        peak_mask = truth > np.percentile(truth, 75, axis=0)[None, :]
    else:
        peak_mask = truth > np.percentile(truth, 75)
    peak_mask &= nonzero
    peak_mape = float(np.mean(np.abs(err[peak_mask] / truth[peak_mask])) * 100) if peak_mask.any() else float("nan")
    return {
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mae": float(np.mean(np.abs(err))),
        "mape": mape,
        "mape_skipped": int((~nonzero).sum()),
        "peak_mape": peak_mape,
    }


def stress_response(zone_mean_slr_fn, multipliers=DEFAULT_MULTIPLIERS) -> dict:
    """Stress-sensitivity diagnostics for any predictor.

    zone_mean_slr_fn(m) must return per-zone mean SLR under demand scaled by m.
    Reports Spearman rho of (multiplier, panel-mean SLR), a strict-monotonicity
    flag, tail amplification (mean at max over mean at 1x, minus 1), and the
    zone fraction with higher mean SLR at the top multiplier than at 1x.
    """
    multipliers = list(multipliers)
    if len(multipliers) < 2:
        raise PanelError("need at least 2 multipliers")
    per_zone = np.stack([np.asarray(zone_mean_slr_fn(m), dtype=float) for m in multipliers])
    means = per_zone.mean(axis=1)
    rho = float(spearmanr(multipliers, means).statistic)
    i_lo = multipliers.index(min(multipliers))
    i_hi = multipliers.index(max(multipliers))
    base = means[i_lo]
    tail_amp = float(means[i_hi] / base - 1.0) if base > 0 else float("inf")
    return {
        "multipliers": multipliers,
        "mean_slr": means.tolist(),
        "spearman_rho": rho,
        "monotone": bool(np.all(np.diff(means) > 0)),
        "tail_amplification": tail_amp,
        "pct_zones_worse": float(np.mean(per_zone[i_hi] > per_zone[i_lo])),
    }


def injection_zone_mean_slr(panel: ZoneHourPanel, lut, aligner):
    """Stress-curve hook for the injection layer itself (the A1 arm)."""
    from .injection import inject_panel

    def fn(m: float) -> np.ndarray:
        scaled = inject_panel(panel.with_demand_scaled(m), lut, aligner)
        return scaled.slr.mean(axis=0)

    return fn


def a0_zone_mean_slr(panel: ZoneHourPanel):
    """Stress-curve hook for the non-injected inverse-pressure rule."""
    from .injection import baseline_a0

    def fn(m: float) -> np.ndarray:
        return baseline_a0(panel.s_raw * m).mean(axis=0)

    return fn


def model_zone_mean_slr(params: ModelParams, graph: ZoneGraph, stats: NormStats,
                        panel: ZoneHourPanel, lut, aligner, hours: np.ndarray):
    """Stress-curve hook for a trained model: demand scaling propagates through
    re-injection and re-featurization end to end."""
    from .injection import inject_panel

    def fn(m: float) -> np.ndarray:
        scaled = inject_panel(panel.with_demand_scaled(m), lut, aligner)
        slr_hat, _ = predict(params, graph, scaled, stats, hours)
        return slr_hat.mean(axis=0)

    return fn


# ---------------------------------------------------------------------------
# Persistence baseline (no-training forecast path)
# ---------------------------------------------------------------------------

def persistence_forecast(panel: ZoneHourPanel, aligner, lut, hours: np.ndarray):
    """Same-hour-previous-day volume forecast (previous hour when history is
    short), with SLR recomputed from the forecast pressure through the frozen
    aligner and LUT."""
    from .deliverability import lut_query

    hours = np.asarray(hours)
    if np.any(hours < 1):
        raise PanelError("persistence forecast needs at least one hour of history")
    src = np.where(hours >= 24, hours - 24, hours - 1)
    vol_hat = panel.demand[src]
    s_raw_f = vol_hat / (panel.capacity[None, :] * panel.delta_t)
    s_mapped_f = aligner.map(s_raw_f)
    slr_hat = 1.0 - lut_query(lut, panel.temp_c[hours], s_mapped_f)
    return slr_hat, vol_hat
