"""Uniqueness of synthetic Zipf populations as detections per user and sample size vary."""

import argparse

from fpuniq import Kind, anonymity_histogram, general_template, StopCriteria, subsample_uniqueness
from fpuniq import uniqueness_by_min_detected
from fpuniq.synth import Popularity, PopulationError, PopulationSpec, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=20000)
    ap.add_argument("--extensions", type=int, default=2000)
    ap.add_argument("--zipf", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print("mean  unique  t=1    t=2    t=3    t=4    template", flush=True)
    for mean in (1.0, 2.0, 4.0, 8.0):
        spec = PopulationSpec(
            n_users=args.users, n_extensions=args.extensions, n_logins=0,
            mean_extensions_per_user=mean, extension_popularity=Popularity("zipf", args.zipf), seed=args.seed,
        )
        try:
            ds = generate_dataset(spec)
        except PopulationError as exc:
            print(f"{mean:4.1f}  skipped: {exc}", flush=True)
            continue
        u = anonymity_histogram(ds).uniqueness
        curve = uniqueness_by_min_detected(ds, Kind.EXTENSION, [1, 2, 3, 4])
        t = general_template(ds, StopCriteria(tolerance=0.01))
        cells = " ".join("  -  " if curve[k] is None else f"{curve[k]:.3f}" for k in (1, 2, 3, 4))
        print(f"{mean:4.1f}  {u:.3f}   {cells}  {len(t)} attrs", flush=True)

    spec = PopulationSpec(n_users=args.users, n_extensions=args.extensions, n_logins=0,
                          mean_extensions_per_user=4.0, extension_popularity=Popularity("zipf", args.zipf), seed=args.seed)
    ds = generate_dataset(spec)
    print("\nsample size vs uniqueness (mean 4 detections)", flush=True)
    for size in sorted({s for s in (500, 2000, 8000) if s < ds.n} | {ds.n}):
        est = subsample_uniqueness(ds, size, 20 if size < ds.n else 1, seed=args.seed)
        print(f"  {size:6d}: {est.mean_uniqueness:.3f} +/- {est.std_dev:.3f}", flush=True)


if __name__ == "__main__":
    main()
