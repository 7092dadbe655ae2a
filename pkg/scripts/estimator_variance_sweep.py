"""Per-coordinate variance of the M=0/1/2 estimators as the policy widens.

    python scripts/estimator_variance_sweep.py --sigmas 0.1 0.3 1 3 --samples 100000
"""
import argparse
import csv
import sys

from fpg.cli import default_variance_case
from fpg.core_math import RngStream
from fpg.estimators import ORDERS, estimator_variance
from fpg.policy import GaussianPolicy


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.1, 0.3, 1.0, 3.0])
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    critic, base = default_variance_case()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["sigma", "order", "coordinate", "mean", "variance"])
    rng = RngStream(args.seed)
    for sigma in args.sigmas:
        policy = GaussianPolicy.isotropic(base.mean, sigma)
        for order, stream in zip(ORDERS, rng.spawn(len(ORDERS))):
            for r in estimator_variance(order, critic, policy, args.samples, stream):
                w.writerow([sigma, order, r.coordinate, f"{r.mean:.6e}", f"{r.variance:.6e}"])


if __name__ == "__main__":
    main()
