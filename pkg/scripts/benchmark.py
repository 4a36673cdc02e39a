"""Time histogram and template construction on large random matrices."""

import argparse
import time

import numpy as np

from fpuniq import BinaryDataset, StopCriteria, anonymity_histogram, general_template
from fpuniq.synth import Popularity, PopulationSpec, generate_dataset


def timed(label, fn):
    t0 = time.perf_counter()
    out = fn()
    print(f"  {label:28s} {time.perf_counter() - t0:7.2f} s", flush=True)
    return out


def bench(name, ds, max_attributes, workers):
    print(f"{name}: {ds.n} x {ds.m}", flush=True)
    timed("histogram", lambda: anonymity_histogram(ds))
    stop = StopCriteria(tolerance=0.0, max_attributes=max_attributes)
    for kernel in ("sparse", "dense"):
        t = timed(f"template ({kernel})", lambda: general_template(ds, stop, kernel=kernel, workers=workers))
        print(f"    {len(t)} attributes, uniqueness {t.uniqueness:.4f}", flush=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16384)
    ap.add_argument("--m", type=int, default=4096)
    ap.add_argument("--max-attributes", type=int, default=200)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--mean", type=float, default=4.0, help="mean detections per user, sparse case")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    dense = BinaryDataset.from_bool(rng.random((args.n, args.m)) < 0.5)
    bench("dense uniform", dense, args.max_attributes, args.workers)
    sparse = generate_dataset(PopulationSpec(
        n_users=args.n, n_extensions=args.m, n_logins=0, mean_extensions_per_user=args.mean,
        extension_popularity=Popularity("zipf", 1.0), seed=7,
    ))
    bench("sparse zipf", sparse, args.max_attributes, args.workers)


if __name__ == "__main__":
    main()
