"""Forecast error metrics and the two reference baselines."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from presched.numerics.spectral import fft_topk

UNDEFINED = float("nan")


def eval_metrics(pred, truth) -> dict[str, float]:
    """MAE, RMSE and WMAPE; WMAPE is NaN when the truth has no mass."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    err = pred - truth
    mass = np.abs(truth).sum()
    return {
        "MAE": float(np.mean(np.abs(err))),
        "RMSE": float(np.sqrt(np.mean(err**2))),
        "WMAPE": float(np.abs(err).sum() / mass) if mass > 0 else UNDEFINED,
    }


def horizon_metrics(pred, truth, horizons: Sequence[int]) -> dict[int, dict[str, float]]:
    """Metrics of forecast step ``h`` (1-based) for windows shaped ``(N, nodes, O, F)``."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    out = {}
    for h in horizons:
        if not 1 <= h <= pred.shape[2]:
            raise ValueError(f"horizon {h} outside 1..{pred.shape[2]}")
        out[int(h)] = eval_metrics(pred[:, :, h - 1], truth[:, :, h - 1])
    return out


def dominant_period(series, fallback: int = 1) -> int:
    """Dominant period of a ``(nodes, T[, F])`` series (``fallback`` when aperiodic).

    The FFT peak of the sector-summed series gives a coarse period; the lags
    around ``T / f`` are then scored by mean absolute lag difference and the
    best one kept, since bin resolution alone can be off by one frame.
    """
    x = np.asarray(series, dtype=np.float64)
    x = x.reshape(x.shape[0], x.shape[1], -1)
    agg = x.sum(axis=(0, 2))
    prof = fft_topk(agg - agg.mean(), 1)
    if prof.empty:
        return fallback
    f = prof.components[0][0]
    n = x.shape[1]
    lo, hi = max(1, int(np.floor(n / (f + 1)))), int(np.ceil(n / max(f - 1, 1)))
    candidates = [p for p in range(lo, hi + 1) if p < n]
    if not candidates:
        return prof.periods()[0]
    scores = [np.mean(np.abs(x[:, p:] - x[:, :-p])) for p in candidates]
    return int(candidates[int(np.argmin(scores))])


def seasonal_naive(data, starts, window: int, horizon: int, period: int) -> np.ndarray:
    """Repeat the value one (or more) periods back.

    ``data`` is ``(nodes, T, F)``; each window starts at ``s`` and covers
    ``[s, s + window)``. Step ``h`` predicts frame ``e = s + window + h - 1``
    from ``e - k * period`` with the smallest ``k`` that lands before the
    forecast origin. The whole history before the origin is visible; when the
    lag reaches past frame 0 the last observed value is repeated.
    """
    data = np.asarray(data, dtype=np.float64)
    out = np.empty((len(starts), data.shape[0], horizon, data.shape[2]))
    for i, s in enumerate(starts):
        end = s + window
        for h in range(1, horizon + 1):
            target = end + h - 1
            k = -(-h // period)
            src = target - k * period
            if src < 0:
                src = end - 1
            out[i, :, h - 1] = data[:, src]
    return out


def historical_average(train, data, starts, window: int, horizon: int, period: int) -> np.ndarray:
    """Per-sector mean of the training frames that share the target's phase."""
    train = np.asarray(train, dtype=np.float64)
    phase_mean = np.stack([train[:, p::period].mean(axis=1) for p in range(period)], axis=1)
    out = np.empty((len(starts), train.shape[0], horizon, train.shape[2]))
    for i, s in enumerate(starts):
        for h in range(1, horizon + 1):
            out[i, :, h - 1] = phase_mean[:, (s + window + h - 1) % period]
    return out
