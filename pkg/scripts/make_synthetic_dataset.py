"""Write a synthetic descriptor table shaped like the released COF dataset.

kappa depends on density, pore size and DMR so the conditional acceptance
check (``pytest --dataset``) has something meaningful to chew on:

    python3 scripts/make_synthetic_dataset.py /tmp/cofs.csv
    python3 -m pytest tests/test_acceptance.py --dataset /tmp/cofs.csv
"""
import argparse

import numpy as np

from coftherm.mlkit import FeatureTable


def synthetic_table(n: int, seed: int) -> FeatureTable:
    rng = np.random.default_rng(seed)
    density = rng.uniform(0.2, 1.6, n)
    lpd = rng.uniform(5, 60, n) * (1.7 - density) / 1.5
    void = np.clip(1 - density / 2.0 + rng.normal(0, 0.03, n), 0, 1)
    gsa = rng.uniform(1000, 7000, n) * void
    dmr = rng.beta(2, 5, n)
    kappa = 0.3 + 1.2 * density - 1.5 * dmr + 0.004 * lpd + rng.normal(0, 0.5, n)
    cols = {"density": density, "lpd": lpd, "void_fraction": void, "gsa": gsa, "dmr": dmr, "kappa": kappa}
    return FeatureTable(tuple(f"cof{i:05d}" for i in range(n)), cols)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--rows", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    table = synthetic_table(args.rows, args.seed)
    table.to_csv(args.out)
    r = np.corrcoef(table.columns["kappa"], table.columns["density"])[0, 1]
    print(f"wrote {args.rows} rows to {args.out}; r(kappa, density) = {r:.3f}")


if __name__ == "__main__":
    main()
