#!/usr/bin/env python3
"""Reproduce the noise-calibration comparisons at (epsilon=8, delta=1e-5).

Prints the calibrated sigma for balanced iteration subsampling vs Poisson
subsampling at matched rates, plus the per-batch-normalized baseline the
published table reports (not reproducible from this accounting; see the
decisions ledger).
"""

import argparse

from amplify_acct.accountant import Bis, PoissonGaussian, calibrate_sigma


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epsilon", type=float, default=8.0)
    parser.add_argument("--delta", type=float, default=1e-5)
    args = parser.parse_args()

    bis = calibrate_sigma(Bis(T=2000, k=655, c=1, sigma=1), 1, args.epsilon, args.delta)
    poisson = calibrate_sigma(PoissonGaussian(c=1, sigma=1, gamma=655 / 2000), 2000, args.epsilon, args.delta)
    print(f"balanced subsampling T=2000 k=655 : sigma = {bis.sigma:.4f}")
    print(f"poisson gamma=0.3275, 2000 rounds : sigma = {poisson.sigma:.4f}")
    print(f"relative difference               : {abs(bis.sigma - poisson.sigma) / poisson.sigma * 100:.3f}%")

    baseline = calibrate_sigma(PoissonGaussian(c=1, sigma=1, gamma=0.1), 1000, args.epsilon, args.delta)
    print(f"poisson gamma=0.1, 1000 rounds    : sigma = {baseline.sigma:.4f}"
          f"  (per expected batch of 2500: {baseline.sigma / 2500:.4e})")


if __name__ == "__main__":
    main()
