"""Minimal unique window length versus chain length and dark fraction, as CSV."""
import argparse

import numpy as np

from ringqc.tracking import entropy_floor, window_length_distribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 10_000])
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.05, 0.1, 0.3, 0.5])
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    print("n_ions,dark_fraction,entropy_floor,mean_window,max_window")
    for n in args.sizes:
        for f in args.fractions:
            lengths = [L for L in window_length_distribution(n, f, range(args.seeds)) if L is not None]
            print(f"{n},{f},{entropy_floor(n, f):.3f},{np.mean(lengths):.2f},{max(lengths)}")


if __name__ == "__main__":
    main()
