"""Compare classic and oracle-predicted allocation across horizons on the small-map scenario.

Example:
    python3 scripts/scheduling_trend.py --seeds 0 1 2 3 4 --out runs/trend.json
"""

import argparse
import json
from pathlib import Path

from presched.simulator.experiment import TREND_HORIZONS, mean_table, trend_for_seed
from presched.simulator.scenario import SMALL_MAP, ScenarioConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--shape", type=int, nargs=4, default=list(SMALL_MAP), metavar=("NODES", "ARCS", "SECTORS", "TASKS"))
    ap.add_argument("--robots", type=int, default=30)
    ap.add_argument("--cap", type=int, default=30, help="predicted tasks allowed per sector and round")
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    base = ScenarioConfig(shape=tuple(args.shape), robots=args.robots, max_pred_per_sector=args.cap)
    rows = []
    for seed in args.seeds:
        row = trend_for_seed(seed, base, TREND_HORIZONS)
        rows.append(row)
        errs = " ".join(f"h{h} {row.pred[h]['ERR']:.4f}" for h in TREND_HORIZONS)
        print(f"seed {seed}: classic {row.classic['ERR']:.4f} {errs} ratio(h10) {row.err_ratio(10):.3f} "
              f"monotone {row.monotone()} MTR {max(r['MTR'] for r in row.pred.values()):.4f}", flush=True)
    table = mean_table(rows)
    print("\n| policy | ERR | MPT (min) | MTR |\n|---|---|---|---|")
    for key, m in table.items():
        print(f"| {key} | {m['ERR']:.2%} | {m['MPT']:.3f} | {m['MTR']:.2%} |")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps({"rows": [r.summary() for r in rows], "mean": table}, indent=2) + "\n")


if __name__ == "__main__":
    main()
