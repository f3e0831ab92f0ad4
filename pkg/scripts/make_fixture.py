"""Derive the bundled desk-scale fixture from the full California Housing table.

Usage::

    python scripts/make_fixture.py data/california_housing.csv.gz \
        src/xaitune/datasets/california_2000.csv

Rows are binned into 20 target quantiles and sampled proportionally from each
bin, so the fixture keeps the target distribution of the full table.
"""

import argparse

import numpy as np

from xaitune.data import load_table, write_table


def stratified_subsample(targets, n_rows, n_strata=20, seed=0):
    rng = np.random.default_rng(seed)
    edges = np.quantile(targets, np.linspace(0.0, 1.0, n_strata + 1))
    strata = np.clip(np.searchsorted(edges, targets, side="right") - 1, 0, n_strata - 1)
    counts = np.bincount(strata, minlength=n_strata)
    quota = np.floor(counts / counts.sum() * n_rows).astype(int)
    # hand the remainder to the largest fractional parts
    frac = counts / counts.sum() * n_rows - quota
    for k in np.argsort(-frac, kind="stable")[: n_rows - quota.sum()]:
        quota[k] += 1
    picked = []
    for k in range(n_strata):
        members = np.flatnonzero(strata == k)
        picked.append(rng.choice(members, size=quota[k], replace=False))
    return np.sort(np.concatenate(picked))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source")
    parser.add_argument("dest")
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    ds = load_table(args.source)
    idx = stratified_subsample(ds.targets, args.rows, seed=args.seed)
    write_table(ds.subset(idx), args.dest)
    print(f"wrote {len(idx)} rows to {args.dest}")


if __name__ == "__main__":
    main()
