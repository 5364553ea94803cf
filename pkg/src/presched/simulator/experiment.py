"""Policy comparison across prediction horizons on synthetic scenarios."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from presched.simulator.engine import run_scenario
from presched.simulator.scenario import SMALL_MAP, ScenarioConfig, generate_scenario

TREND_HORIZONS = (5, 10, 15)


@dataclass
class TrendRow:
    seed: int
    classic: dict
    pred: dict[int, dict] = field(default_factory=dict)  # horizon -> report
    seconds: dict[str, float] = field(default_factory=dict)

    def err_ratio(self, horizon: int) -> float:
        return self.pred[horizon]["ERR"] / self.classic["ERR"]

    def monotone(self) -> bool:
        errs = [self.pred[h]["ERR"] for h in sorted(self.pred)]
        return all(b <= a for a, b in zip(errs, errs[1:])) and errs[0] <= self.classic["ERR"]

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "classic": {k: self.classic[k] for k in ("ERR", "MPT", "MTR")},
            **{f"pred_h{h}": {k: r[k] for k in ("ERR", "MPT", "MTR")} for h, r in sorted(self.pred.items())},
            "seconds": self.seconds,
        }


def trend_for_seed(seed: int, base: ScenarioConfig | None = None, horizons=TREND_HORIZONS) -> TrendRow:
    """Classic plus oracle-predicted runs at each horizon for one seed."""
    base = base or ScenarioConfig(shape=SMALL_MAP)
    base = dataclasses.replace(base, seed=seed, predictor="oracle")
    runs = {}
    seconds = {}
    for policy, h in [("classic", max(horizons))] + [("pred-enhanced", h) for h in horizons]:
        start = time.perf_counter()
        _, report = run_scenario(generate_scenario(dataclasses.replace(base, policy=policy, horizon=h)))
        key = "classic" if policy == "classic" else f"h{h}"
        seconds[key] = time.perf_counter() - start
        runs[key] = report
    return TrendRow(seed, runs["classic"], {h: runs[f"h{h}"] for h in horizons}, seconds)


def mean_table(rows: list[TrendRow]) -> dict[str, dict[str, float]]:
    out = {"classic": {k: float(np.mean([r.classic[k] for r in rows])) for k in ("ERR", "MPT", "MTR")}}
    for h in rows[0].pred:
        out[f"h{h}"] = {k: float(np.mean([r.pred[h][k] for r in rows])) for k in ("ERR", "MPT", "MTR")}
    return out
