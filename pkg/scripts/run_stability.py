"""Cross-seed spread of final test accuracy: OAT against the stochastic AT schedule.

    python3 scripts/run_stability.py --seeds 5
"""
import argparse
import dataclasses

import numpy as np

from dtn.config import RunConfig
from dtn.experiments import build_dataset, train_and_evaluate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--first-seed", type=int, default=0)
    args = ap.parse_args()
    base = RunConfig()
    ds = build_dataset(base)
    accs = {"oat": [], "at": []}
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        for arm in accs:
            res = train_and_evaluate(dataclasses.replace(base, schedule=arm, seed=seed), ds)
            accs[arm].append(res.report.mean_accuracy)
            print(f"{arm:>4} seed={seed} {res.report.format()} schedule={res.schedule}", flush=True)
    for arm, a in accs.items():
        print(f"{arm:>4}  mean={np.mean(a):.4f}  std={np.std(a, ddof=1):.4f}  "
              f"range={max(a) - min(a):.4f}")


if __name__ == "__main__":
    main()
