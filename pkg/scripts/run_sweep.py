"""Run one sample-size sweep and print mean welfare, loss and burns per (algorithm, m)."""
import argparse
from collections import defaultdict

import numpy as np

from pacmarket.harness import EXPERIMENT_FAMILIES, ExperimentConfig, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", choices=EXPERIMENT_FAMILIES, default="unit-demand")
    ap.add_argument("--distribution", default="product:0.5")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--counts", default="5,10,20,40,80,160,320,640,1280,2560,5120")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="also stream records to this CSV")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig(n=args.n, k=args.k, family=args.family,
                           distribution=args.distribution,
                           sample_counts=tuple(int(x) for x in args.counts.split(",")),
                           repetitions=args.reps, eval_trials=2000, seed=args.seed)
    cells = defaultdict(list)
    for r in run_experiment(cfg, out_path=args.out):
        cells[(r.algorithm, r.m)].append(r)

    print(f"{'algo':6s} {'m':>6s} {'welfare':>9s} {'loss':>7s} {'burnt':>6s}")
    for (algo, m), recs in sorted(cells.items()):
        losses = [r.emp_loss for r in recs if r.emp_loss is not None]
        loss = f"{np.mean(losses):7.4f}" if losses else "      -"
        print(f"{algo:6s} {m:6d} {np.mean([r.welfare for r in recs]):9.3f} {loss} "
              f"{np.mean([r.burnt for r in recs]):6.2f}")


if __name__ == "__main__":
    main()
