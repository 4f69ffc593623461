"""Decay rate of the one-point harmonic measure under the two mass scalings.

Along the positive axis the massive harmonic measure decays like e^{-κx}.
With Θ = mδ/2 the fitted κ should sit near 2|m|; with β = β_c - mδ/2 it comes
out smaller by about √2.  Prints one line per (mode, δ).
"""

import argparse
import math

import numpy as np

from massive_sholo import massive_walk as mw
from massive_sholo.lattice_geometry import MassParams


def decay_rate(p: MassParams, x_lo: float = 1.0, x_hi: float = 3.0) -> float:
    """Least-squares slope of -log hm on [x_lo, x_hi] (physical units)."""
    m = abs(p.scaling_mass)
    hm = mw.one_point_hm(max(8.0 / m, x_hi + 4.0 / m), p)
    xs, ys = [], []
    for k in range(int(x_lo / (2 * p.delta)), int(x_hi / (2 * p.delta)) + 1):
        X = 4 * k  # walk sites on the positive axis, in half-units
        v = hm((X, 0)) if hm.graph.index((X, 0)) is not None else 0.0
        if v > 0:
            xs.append(X * p.delta / 2)
            ys.append(-math.log(v * math.sqrt(X * p.delta / 2)))
    return float(np.polyfit(xs, ys, 1)[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, default=-1.0)
    ap.add_argument("--ks", type=int, nargs="+", default=[3, 4, 5])
    args = ap.parse_args(argv)
    for mode in ("theta", "beta"):
        for k in args.ks:
            d = 2.0 ** -k
            p = MassParams.from_scaling_mass(args.m, d) if mode == "theta" else MassParams.from_mass(args.m, d)
            kappa = decay_rate(p)
            print(f"{mode:5s} delta=2^-{k}  Theta={p.Theta:+.6f}  kappa={kappa:.4f}  "
                  f"kappa/(2|m|)={kappa / (2 * abs(args.m)):.4f}")


if __name__ == "__main__":
    main()
