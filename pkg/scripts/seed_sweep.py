"""Mean MAE of every main method over several seeds, optionally contaminated.

    python3 scripts/seed_sweep.py --seeds 2026 2027 2028 --ratio 0.2
"""

import argparse

import pandas as pd

from genrotda.cli import load_pair
from genrotda.config import ExperimentConfig
from genrotda.panel import inject_contamination, make_split
from genrotda.pipeline import MAIN_METHODS, run_method


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[2026, 2027, 2028])
    ap.add_argument("--ratio", type=float, default=0.0, help="contamination ratio of the unlabeled pool")
    ap.add_argument("--config", help="config file (defaults otherwise)")
    args = ap.parse_args()
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    rows = []
    for seed in args.seeds:
        cfg = base.replace(seed=seed)
        source, target = load_pair(cfg, None, cfg.source_year, cfg.target_year)
        split = inject_contamination(make_split(source, target, cfg.split_config(), seed), args.ratio, seed)
        for m in MAIN_METHODS:
            rows.append({"seed": seed, "method": m.value,
                         "mae": run_method(m, split, cfg.pipeline_config(), seed).report.mae})
        print(f"seed {seed} done", flush=True)
    table = pd.DataFrame(rows).pivot(index="method", columns="seed", values="mae")
    table["mean"] = table.mean(axis=1)
    print(table.sort_values("mean").to_string(float_format=lambda x: f"{x:.4f}"))


if __name__ == "__main__":
    main()
