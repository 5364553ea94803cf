"""End-to-end forecasting runs: data, training and baseline comparison."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from presched.forecaster.data import PeriodicFlowSpec, synthetic_taskflow
from presched.forecaster.metrics import dominant_period, eval_metrics, historical_average, seasonal_naive
from presched.forecaster.model import GraphContext, ModelConfig
from presched.forecaster.training import (
    ForecastModel,
    TrainConfig,
    chronological_split,
    forecast,
    make_windows,
    new_model,
    train,
    window_starts,
)
from presched.rng import substream
from presched.warehouse import incidence_from_edges

DEFAULT_HORIZONS = (3, 5, 10, 15)


def ring_sector_graph(n: int, chord: int = 3) -> GraphContext:
    """Sectors on a two-way ring plus one-way chords ``i -> i + chord``.

    Even sectors are storage and odd ones picking; ring arcs are aisles and
    chords cross-links. Used when no warehouse map is supplied.
    """
    if n < 2:
        raise ValueError("need at least two sectors")
    arcs = [(i, (i + 1) % n) for i in range(n)] + [((i + 1) % n, i) for i in range(n)]
    if n > chord + 1:
        arcs += [(i, (i + chord) % n) for i in range(n)]
    arcs = list(dict.fromkeys(arcs))
    A = np.zeros((n, n))
    dist = []
    for i, j in arcs:
        hops = min((j - i) % n, (i - j) % n)
        A[i, j] = float(np.exp(-(hops**2) / 4.0))
        dist.append(10.0 * hops)
    node_types = ["storage" if i % 2 == 0 else "picking" for i in range(n)]
    edge_types = ["aisle" if k < 2 * n else "cross" for k in range(len(arcs))]
    return GraphContext(A, incidence_from_edges(n, arcs), arcs, np.array(dist), node_types, edge_types)


@dataclass
class SkillReport:
    horizons: tuple[int, ...]
    model: dict[int, dict[str, float]]
    seasonal_naive: dict[int, dict[str, float]]
    historical_average: dict[int, dict[str, float]]
    period: int
    train_seconds: float
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "horizons": list(self.horizons),
            "model": {str(h): v for h, v in self.model.items()},
            "seasonal_naive": {str(h): v for h, v in self.seasonal_naive.items()},
            "historical_average": {str(h): v for h, v in self.historical_average.items()},
            "period": self.period,
            "train_seconds": self.train_seconds,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
        }


def evaluate(model: ForecastModel, data: np.ndarray, split, horizons=DEFAULT_HORIZONS) -> tuple[dict, dict, dict, int]:
    """Test-segment metrics of the model and both baselines at each horizon.

    Horizons beyond the model's own are skipped. The seasonal period is
    estimated from the training segment only.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    w, o = model.config.input_window, model.config.horizon
    (t0, t1), _, (s0, s1) = chronological_split(data.shape[1], split)
    starts = window_starts(s0, s1, w, o)
    if len(starts) == 0:
        raise ValueError("invalid-input: test segment shorter than one window")
    x, y = make_windows(data, starts, w, o)
    pred = forecast(model, x)
    period = dominant_period(data[:, t0:t1], fallback=max(1, t1 - t0))
    naive = seasonal_naive(data, starts, w, o, period)
    hist = historical_average(data[:, t0:t1], data, starts, w, o, period)
    hs = [h for h in horizons if 1 <= h <= o]
    pick = lambda a, h: a[:, :, h - 1]  # noqa: E731
    return (
        {h: eval_metrics(pick(pred, h), pick(y, h)) for h in hs},
        {h: eval_metrics(pick(naive, h), pick(y, h)) for h in hs},
        {h: eval_metrics(pick(hist, h), pick(y, h)) for h in hs},
        period,
    )


def train_and_evaluate(
    data: np.ndarray,
    graph: GraphContext,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    horizons=DEFAULT_HORIZONS,
) -> tuple[ForecastModel, SkillReport]:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    (t0, t1), _, _ = chronological_split(data.shape[1], train_cfg.split)
    model = new_model(model_cfg, graph, data[:, t0:t1], train_cfg.seed)
    start = time.perf_counter()
    result = train(model, data, train_cfg)
    elapsed = time.perf_counter() - start
    m, sn, ha, period = evaluate(result.model, data, train_cfg.split, horizons)
    report = SkillReport(
        tuple(sorted(m)), m, sn, ha, period, elapsed, result.train_loss, result.val_loss, result.best_epoch
    )
    return result.model, report


def forecast_skill(
    spec: PeriodicFlowSpec | None = None,
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    horizons=DEFAULT_HORIZONS,
) -> tuple[ForecastModel, SkillReport]:
    """Train on synthetic periodic flow over a ring sector graph and compare with baselines."""
    spec = spec or PeriodicFlowSpec()
    train_cfg = train_cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig(n_sectors=spec.n_sectors, horizon=max(horizons))
    flow = synthetic_taskflow(spec, substream(train_cfg.seed, "taskflow"))
    return train_and_evaluate(flow.data, ring_sector_graph(spec.n_sectors), model_cfg, train_cfg, horizons)
