"""Normal-mode frequencies of a small crystal, grouped by branch, as CSV."""
import argparse

from ringqc.crystal import TrapPotential, phonon_modes, solve_equilibrium
from ringqc.physcore import TWO_PI, load_species


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--species", default="Ca-40")
    ap.add_argument("--n-ions", type=int, default=10)
    ap.add_argument("--axial-khz", type=float, default=1000.0)
    ap.add_argument("--transverse-khz", type=float, nargs=2, default=[5000.0, 5200.0])
    args = ap.parse_args()
    sp = load_species(args.species)
    wx, wy = (TWO_PI * 1e3 * f for f in args.transverse_khz)
    trap = TrapPotential(wx, wy, TWO_PI * 1e3 * args.axial_khz, sp.mass)
    spec = phonon_modes(solve_equilibrium(trap, args.n_ions))
    print("branch,freq_kHz")
    for branch in ("axial", "x", "y"):
        for w in sorted(spec.branch(branch)):
            print(f"{branch},{w / TWO_PI / 1e3:.6f}")


if __name__ == "__main__":
    main()
