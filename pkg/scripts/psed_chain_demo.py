"""pSED of a harmonic chain compared against its analytic dispersion.

The ridge frequency of the spectral energy density is printed next to
2 sqrt(k/m) |sin(qa/2)| for every wavevector.
"""
import argparse

import numpy as np

from coftherm.spectral import psed
from coftherm.synthetic import chain_dispersion, harmonic_chain


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--atoms", type=int, default=64)
    ap.add_argument("--frames", type=int, default=2**14)
    ap.add_argument("--csv", help="also write the log10 map here")
    args = ap.parse_args()

    unit, traj, spring = harmonic_chain(n_atoms=args.atoms, n_frames=args.frames)
    m = psed(traj, unit, args.atoms, "x")
    expected = chain_dispersion(m.q, spring, 12.011, unit.cell_lengths[0]) / (2 * np.pi) * 1e3
    ridge = m.ridge()
    print(f"{'q (1/A)':>10} {'ridge THz':>10} {'exact THz':>10} {'rel err':>8}")
    for q, got, want in zip(m.q, ridge, expected):
        rel = abs(got - want) / want if want > m.freq[1] else float("nan")
        print(f"{q:10.4f} {got:10.4f} {want:10.4f} {rel:8.4f}")
    if args.csv:
        np.savetxt(args.csv, np.log10(np.maximum(m.phi, np.finfo(float).tiny)), delimiter=",", fmt="%.6g")


if __name__ == "__main__":
    main()
