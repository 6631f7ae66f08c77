"""Steady velocity set by a split counter-propagating pair, from the force zero and from simulation."""
import argparse
import math

from scipy.optimize import brentq

from ringqc import dynamics as D
from ringqc.budget import doppler_control_velocity
from ringqc.physcore import PALLAS, TWO_PI, load_species


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--species", default="Ca-40")
    ap.add_argument("--splits-mhz", type=float, nargs="+", default=[0.0, 5.0, 10.0, 20.0])
    ap.add_argument("--simulate", action="store_true", help="also run a short ensemble simulation")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sp = load_species(args.species)
    gamma, lam = sp.require("cooling_linewidth"), sp.require("cooling_wavelength")
    dt = 0.9 * D.max_stable_dt(PALLAS, gamma)
    print("split_MHz,target_m_s,force_zero_m_s,simulated_m_s")
    for split_mhz in args.splits_mhz:
        split = TWO_PI * 1e6 * split_mhz
        beams = D.counter_propagating_pair(lam, -0.5 * gamma, split, 0.5)
        target = doppler_control_velocity(split, lam)
        width = 3 * gamma * lam / TWO_PI
        zero = brentq(lambda v: D.net_force_along(beams, v, gamma), target - width, target + width)
        sim = float("nan")
        if args.simulate:
            tau = D.damping_time(beams, sp.mass, gamma, v0=target)
            st = D.initial_state(PALLAS, sp, 16, seed=args.seed, velocity=0.0)
            hist = D.run(st, beams, None, PALLAS, dt, math.ceil(16 * tau / dt), sample_every=200)
            sim = D.estimate_temperatures(hist, sp.mass, burn_in=5 * tau, cooling_time=tau)[2]
        print(f"{split_mhz},{target:.6f},{zero:.6f},{sim:.6f}")


if __name__ == "__main__":
    main()
