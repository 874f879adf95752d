"""Accuracy against the number of generated features per support, OAT schedule.

    python3 scripts/run_h_sweep.py --seeds 1 --h 0,2,4,16,32,64
"""
import argparse
import dataclasses
import math

from dtn.config import RunConfig, int_list
from dtn.experiments import arm_statistics, h_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--h", default="0,2,4,16,32,64")
    ap.add_argument("--episodes", type=int, default=600)
    args = ap.parse_args()
    cfg = dataclasses.replace(RunConfig(), episodes=args.episodes)
    results = h_sweep(cfg, int_list(args.h, "h"), range(args.seeds),
                      progress=lambda r: print(f"{r.arm:>6} seed={r.seed} {r.report.format()}", flush=True))
    print()
    for arm, (mean, std, n) in arm_statistics(results).items():
        std_text = "n/a" if math.isnan(std) else f"{std:.4f}"
        print(f"{arm:>6}  mean={mean:.4f}  std={std_text}  runs={n}")


if __name__ == "__main__":
    main()
