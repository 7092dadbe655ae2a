"""Compare EPG and SPG on the turntable across seeds.

    python scripts/turntable_experiment.py --seeds 10 --steps 20000 --out runs/turntable

Writes one curve CSV per (method, seed) plus ``summary.csv`` holding the
across-seed median action error at every logged step.
"""
import argparse
import csv
import math
from pathlib import Path

import numpy as np

from fpg.trainer import METHODS, DivergenceError, TrainConfig, run, steps_to_threshold
from fpg.turntable import EnvConfig


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--methods", nargs="+", default=["epg-analytic", "spg-m0"], choices=METHODS)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--actor-lr", type=float, default=TrainConfig.actor_lr)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", default="runs/turntable")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    medians = {}
    for method in args.methods:
        curves = []
        for seed in range(args.seeds):
            cfg = TrainConfig(method=method, steps=args.steps, seed=seed, actor_lr=args.actor_lr)
            try:
                curve = run(EnvConfig(seed=seed), cfg)
            except DivergenceError as exc:
                print(f"{method} seed {seed}: diverged ({exc})")
                continue
            (out / f"curve_{method}_seed{seed}.csv").write_text(curve.to_csv())
            curves.append(curve)
        if not curves:
            continue
        hit = steps_to_threshold(curves, args.threshold)
        medians[method] = (curves[0].column("step"),
                           np.median([c.column("mean_action_error") for c in curves], axis=0))
        hit_txt = f"{hit:.0f}" if math.isfinite(hit) else "never"
        print(f"{method}: {len(curves)}/{args.seeds} seeds finished; median error < {args.threshold} at step {hit_txt}")

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "step", "median_error"])
        for method, (steps, med) in medians.items():
            for s, m in zip(steps, med):
                w.writerow([method, int(s), repr(float(m))])


if __name__ == "__main__":
    main()
