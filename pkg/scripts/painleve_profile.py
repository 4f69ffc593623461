"""Tabulate the full-plane Painlevé solution and the short-distance approach.

Prints the tail amplitude, a coarse table of h0, B0 = tanh h0, A0, C0 and the
normalised two-point function, then the normalisation gap for a|m| = 10^-k.
"""

import argparse

from massive_sholo import painleve_isomonodromy as pv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=float, default=-1.0)
    ap.add_argument("--nodes", type=int, default=4000)
    args = ap.parse_args(argv)
    lam = pv.shoot_connection()
    sol = pv.solve_h0(-12.0, -1e-5, args.nodes, lam)
    L0 = pv.short_distance_offset(sol)
    print(f"lambda = {lam:.12f}   short-distance offset = {L0:.10f}")
    print(f"{'a|m|':>8} {'h0':>12} {'B0':>12} {'A0':>12} {'C0':>12} {'plus/massless':>14}")
    for am in (4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.01):
        r = -am
        h, dh, _ = sol.at(r)
        A, B, C = pv.coefficients_from_h(r, h, dh)
        tp = pv.two_point(am / abs(args.m), args.m, sol, L0)
        print(f"{am:8.3g} {h:12.6f} {B:12.8f} {A:12.6f} {C:12.6f} {tp.normalised:14.6f}")
    for k in range(1, 6):
        am = 10.0 ** -k
        gap = pv.two_point(am / abs(args.m), args.m, sol, L0).normalised - 1
        print(f"normalisation gap at a|m| = 1e-{k}: {gap:+.3e}")


if __name__ == "__main__":
    main()
