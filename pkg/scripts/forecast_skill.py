"""Train the forecaster on synthetic periodic flow and compare it with seasonal baselines.

Example:
    python3 scripts/forecast_skill.py --epochs 4 --horizon 5 --out runs/skill.json
"""

import argparse
import json
from pathlib import Path

from presched.forecaster.data import PeriodicFlowSpec
from presched.forecaster.experiment import forecast_skill
from presched.forecaster.model import ModelConfig
from presched.forecaster.training import TrainConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sectors", type=int, default=10)
    ap.add_argument("--frames", type=int, default=5000)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--horizon", type=int, default=5, help="model output horizon; metrics at 3, 5, 10, 15 up to it")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    horizons = tuple(h for h in (3, 5, 10, 15) if h <= args.horizon)
    _, rep = forecast_skill(
        PeriodicFlowSpec(n_sectors=args.sectors, n_frames=args.frames),
        ModelConfig(n_sectors=args.sectors, horizon=args.horizon),
        TrainConfig(epochs=args.epochs, seed=args.seed),
        horizons=horizons,
    )
    print(f"period {rep.period}, training {rep.train_seconds:.0f} s, best epoch {rep.best_epoch}")
    print("horizon   model MAE   seasonal-naive MAE   historical-average MAE")
    for h in rep.horizons:
        print(f"{h:7d}   {rep.model[h]['MAE']:9.4f}   {rep.seasonal_naive[h]['MAE']:18.4f}   "
              f"{rep.historical_average[h]['MAE']:22.4f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
