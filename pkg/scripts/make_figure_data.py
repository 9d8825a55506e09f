#!/usr/bin/env python3
"""Emit the CSV data behind the four comparison-figure regimes.

Writes, under --out-dir (default out/):

  model_split_curves.csv   per-order epsilon for 2/4/6/8-way splits vs the
                           unamplified Gaussian baseline
  bis_vs_poisson_large.csv T=1000, k=100, sigma=2 (near-identical regime)
  bis_vs_poisson_small.csv T=10, k=4, sigma=2 (divergent regime)
  delta_vs_iterations.csv  delta at epsilon=10 as iterations grow,
                           balanced subsampling (joint and epoch-composed)
                           vs Poisson at gamma=0.4, sigma=2

Plot them with any external tool; this package deliberately has no
plotting dependency.
"""

import argparse
import os

from amplify_acct.accountant import (
    Bis,
    Gaussian,
    ModelSplit,
    PoissonGaussian,
    bis_epoch_composition,
    mechanism_label,
    rdp_curve,
    scale_curve,
    to_delta,
)


def write_curves(path, labeled_curves):
    with open(path, "w") as fh:
        fh.write("alpha,epsilon,mechanism,mode,provenance\n")
        for label, mode, curve in labeled_curves:
            for alpha, eps, prov in zip(curve.orders, curve.epsilons, curve.provenance):
                fh.write(f"{alpha},{eps:.12g},{label},{mode},{prov}\n")
    print(f"wrote {path}")


def model_split_curves(out_dir):
    rows = []
    baseline = rdp_curve(Gaussian(c=1, sigma=2))
    rows.append((mechanism_label(Gaussian(c=1, sigma=2)), "exact", baseline))
    for d in (2, 4, 6, 8):
        spec = ModelSplit(d=d, c=1, sigma=2)
        rows.append((mechanism_label(spec), "tight", rdp_curve(spec)))
    write_curves(os.path.join(out_dir, "model_split_curves.csv"), rows)


def bis_vs_poisson(out_dir, T, k, sigma, name):
    bis = Bis(T=T, k=k, c=1, sigma=sigma)
    poisson = PoissonGaussian(c=1, sigma=sigma, gamma=k / T)
    rows = [
        (mechanism_label(bis), "tight", rdp_curve(bis, mode="tight")),
        (mechanism_label(bis), "loose", rdp_curve(bis, mode="loose")),
        (mechanism_label(poisson) + f"x{T}", "exact", scale_curve(rdp_curve(poisson), T)),
    ]
    write_curves(os.path.join(out_dir, name), rows)


def delta_vs_iterations(out_dir, sigma=2.0, gamma=0.4, epsilon=10.0, epoch_T=10):
    epoch_k = int(round(gamma * epoch_T))
    path = os.path.join(out_dir, "delta_vs_iterations.csv")
    with open(path, "w") as fh:
        fh.write("iterations,delta,method\n")
        for T in range(5, 121, 5):
            k = int(round(gamma * T))
            joint = to_delta(rdp_curve(Bis(T=T, k=k, c=1, sigma=sigma)), epsilon)
            fh.write(f"{T},{joint:.12g},bis-joint\n")
            if T % epoch_T == 0:
                composed = to_delta(
                    bis_epoch_composition(epoch_T, epoch_k, T // epoch_T, 1.0, sigma), epsilon
                )
                fh.write(f"{T},{composed:.12g},bis-epochs\n")
            poisson = to_delta(scale_curve(rdp_curve(PoissonGaussian(c=1, sigma=sigma, gamma=gamma)), T), epsilon)
            fh.write(f"{T},{poisson:.12g},poisson-rdp\n")
    print(f"wrote {path}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out")
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    model_split_curves(args.out_dir)
    bis_vs_poisson(args.out_dir, 1000, 100, 2.0, "bis_vs_poisson_large.csv")
    bis_vs_poisson(args.out_dir, 10, 4, 2.0, "bis_vs_poisson_small.csv")
    delta_vs_iterations(args.out_dir)


if __name__ == "__main__":
    main()
