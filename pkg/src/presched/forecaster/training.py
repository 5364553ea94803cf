"""Windowing, chronological splits, the training loop and rolling prediction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from presched.forecaster.model import (
    GraphContext,
    ModelConfig,
    init_params,
    reconstruction,
    tdtgcn_forward,
    trainable,
)
from presched.numerics import autodiff as ad
from presched.numerics.optim import AdamState, adam_step
from presched.rng import substream


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)  # train, val, test
    recon_weight: float = 0.1
    max_batches_per_epoch: int | None = None
    pca_fit_windows: int = 64

    def __post_init__(self) -> None:
        self.split = tuple(float(s) for s in self.split)
        if len(self.split) != 3 or any(s <= 0 for s in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split must be three positive fractions summing to 1")
        if self.lr <= 0 or self.weight_decay < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training hyperparameters")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


@dataclass
class ForecastModel:
    config: ModelConfig
    graph: GraphContext
    params: dict[str, np.ndarray]

    def copy(self) -> "ForecastModel":
        return ForecastModel(self.config, self.graph, {k: v.copy() for k, v in self.params.items()})


@dataclass
class TrainResult:
    model: ForecastModel
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


@dataclass
class Prediction:
    values: np.ndarray  # (nodes, O, F)
    confidence: np.ndarray  # (nodes, O)
    enscore: float

    @property
    def horizon(self) -> int:
        return self.values.shape[1]


def chronological_split(n_frames: int, split=(0.7, 0.1, 0.2)) -> list[tuple[int, int]]:
    """Frame ranges ``[(0, a), (a, b), (b, T)]`` for train, validation and test."""
    a = int(round(n_frames * split[0]))
    b = int(round(n_frames * (split[0] + split[1])))
    return [(0, a), (a, b), (b, n_frames)]


def window_starts(lo: int, hi: int, window: int, horizon: int) -> np.ndarray:
    return np.arange(lo, hi - window - horizon + 1)


def make_windows(data: np.ndarray, starts, window: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """``(N, nodes, window, F)`` inputs and ``(N, nodes, horizon, F)`` targets."""
    data = np.asarray(data, dtype=np.float64)
    x = np.stack([data[:, s : s + window] for s in starts])
    y = np.stack([data[:, s + window : s + window + horizon] for s in starts])
    return x, y


def conf_threshold(train_data: np.ndarray, q: float = 75.0) -> float:
    nz = np.asarray(train_data)[np.asarray(train_data) > 0]
    return float(np.percentile(nz, q)) if nz.size else 1.0


def new_model(config: ModelConfig, graph: GraphContext, train_data: np.ndarray, seed: int) -> ForecastModel:
    rng = substream(seed, "model-init")
    config = replace(config, tau_conf=conf_threshold(train_data))
    params = init_params(config, graph, rng, sample=np.asarray(train_data).reshape(-1, config.n_features))
    return ForecastModel(config, graph, params)


def fit_pca_buffers(model: ForecastModel, x: np.ndarray) -> None:
    """Fit and freeze the hetero-branch PCA bases on a batch of windows."""
    tdtgcn_forward(x, model.params, model.config, model.graph, fit_pca_buffers=True)


def batch_loss(model: ForecastModel, params: Mapping, x, y, train: bool, rng, recon_weight: float) -> ad.Var:
    pred = tdtgcn_forward(x, params, model.config, model.graph, train=train, rng=rng)
    loss = ad.mean(ad.absolute(ad.sub(pred, y)))
    if recon_weight > 0:
        rec = reconstruction(x, params)
        loss = ad.add(loss, ad.mul(ad.mean(ad.absolute(ad.sub(rec, x))), recon_weight))
    return loss


def forecast(model: ForecastModel, x, batch_size: int = 256) -> np.ndarray:
    """Evaluation-mode forecasts for a stack of windows."""
    x = np.asarray(x, dtype=np.float64)
    outs = [
        tdtgcn_forward(x[i : i + batch_size], model.params, model.config, model.graph).value
        for i in range(0, len(x), batch_size)
    ]
    return np.concatenate(outs, axis=0)


def _mae(model: ForecastModel, x, y) -> float:
    return float(np.mean(np.abs(forecast(model, x) - y)))


def train(model: ForecastModel, data, cfg: TrainConfig) -> TrainResult:
    """Minibatch Adam on MAE with best-validation selection.

    ``data`` is the full ``(nodes, T, F)`` series; the chronological split is
    applied here. The returned model holds the parameters of the epoch with
    the lowest validation MAE (the initial parameters when ``epochs == 0``).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    conf = model.config
    w, o = conf.input_window, conf.horizon
    if data.shape[0] != conf.n_sectors:
        raise ValueError(f"invalid-input: data has {data.shape[0]} sectors, model {conf.n_sectors}")
    if data.shape[1] < w + o:
        raise ValueError(f"invalid-input: need at least {w + o} frames, got {data.shape[1]}")
    result = TrainResult(model.copy())
    if cfg.epochs == 0:
        return result
    (t0, t1), (v0, v1), _ = chronological_split(data.shape[1], cfg.split)
    train_starts = window_starts(t0, t1, w, o)
    val_starts = window_starts(v0, v1, w, o)
    if len(train_starts) == 0:
        raise ValueError("invalid-input: training segment shorter than one window")
    if len(val_starts) == 0:
        val_starts = train_starts[-1:]
    xtr, ytr = make_windows(data, train_starts, w, o)
    xva, yva = make_windows(data, val_starts, w, o)

    shuffle_rng = substream(cfg.seed, "batch-order")
    dropout_rng = substream(cfg.seed, "dropout")
    current = model.copy()
    pca_idx = np.linspace(0, len(xtr) - 1, min(cfg.pca_fit_windows, len(xtr))).astype(int)
    fit_pca_buffers(current, xtr[pca_idx])
    best = current.copy()
    best_val = _mae(current, xva, yva)
    state = AdamState()
    keys = trainable(current.params)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(xtr))
        batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if cfg.max_batches_per_epoch is not None:
            batches = batches[: cfg.max_batches_per_epoch]
        total, count = 0.0, 0
        for idx in batches:
            tape = {k: (ad.param(v) if k in keys else v) for k, v in current.params.items()}
            loss = batch_loss(current, tape, xtr[idx], ytr[idx], True, dropout_rng, cfg.recon_weight)
            loss.backward()
            grads = {k: tape[k].grad for k in keys}
            current.params, state = adam_step(current.params, grads, state, cfg.lr, cfg.weight_decay)
            total += loss.value.item() * len(idx)
            count += len(idx)
        result.train_loss.append(total / count)
        val = _mae(current, xva, yva)
        result.val_loss.append(val)
        if val < best_val:
            best_val, best = val, current.copy()
            result.best_epoch = epoch
    result.model = best
    return result


def normalized_entropy(recent: np.ndarray) -> float:
    """Shannon entropy of the sector share of recent tasks, divided by ``log(nodes)``.

    No recent tasks (or a single sector) gives 0.
    """
    recent = np.asarray(recent, dtype=np.float64)
    totals = recent.reshape(recent.shape[0], -1).sum(axis=1)
    mass = totals.sum()
    n = totals.size
    if mass <= 0 or n < 2:
        return 0.0
    p = totals[totals > 0] / mass
    return float(min(1.0, max(0.0, -(p * np.log(p)).sum() / np.log(n))))


def confidence(values: np.ndarray, tau_conf: float) -> np.ndarray:
    """``min(1, x / tau_conf)`` per cell, summed over features."""
    if tau_conf <= 0:
        raise ValueError("tau_conf must be positive")
    v = np.asarray(values, dtype=np.float64)
    cell = v.sum(axis=-1) if v.ndim == 3 else v
    return np.clip(cell / tau_conf, 0.0, 1.0)


def make_prediction(values: np.ndarray, history: np.ndarray, tau_conf: float, window: int) -> Prediction:
    values = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    return Prediction(values, confidence(values, tau_conf), normalized_entropy(np.asarray(history)[:, -window:]))


def predict(model: ForecastModel, history, horizon: int | None = None) -> Prediction:
    """Forecast the next ``horizon`` frames from the most recent input window."""
    conf = model.config
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 2:
        history = history[:, :, None]
    if history.shape[0] != conf.n_sectors or history.shape[0] != model.graph.n_sectors:
        raise ValueError(f"invalid-input: history has {history.shape[0]} sectors, model {conf.n_sectors}")
    if history.shape[1] < conf.input_window:
        raise ValueError(f"invalid-input: need {conf.input_window} frames of history")
    horizon = conf.horizon if horizon is None else horizon
    if not 1 <= horizon <= conf.horizon:
        raise ValueError(f"horizon must be within 1..{conf.horizon}")
    x = history[:, -conf.input_window :]
    values = tdtgcn_forward(x, model.params, conf, model.graph).value[:, :horizon]
    window = conf.entropy_window or conf.input_window
    return make_prediction(values, history, conf.tau_conf, window)
