"""Walk the six-user, four-extension toy dataset through every analysis."""

import numpy as np

from fpuniq import (
    BinaryDataset,
    StopCriteria,
    anonymity_histogram,
    combination_uniqueness,
    cosine_similarity,
    general_template,
    pearson_correlation,
    shannon_entropy,
    targeted_pattern,
)

ROWS = ["0110", "1100", "1110", "1101", "1010", "1001"]


def main():
    bits = np.array([[c == "1" for c in r] for r in ROWS])
    ds = BinaryDataset.from_bool(bits)
    for u, r in zip(ds.user_ids, ROWS):
        print(f"  {u}: {r}", flush=True)

    for cols in (["A1", "A2"], ["A2", "A3"], None):
        h = anonymity_histogram(ds, cols)
        e = shannon_entropy(ds, cols)
        label = "+".join(cols) if cols else "all"
        print(f"{label:6s} sets={h.sizes} unique={h.uniqueness:.3f} H={e.bits:.4f} bits (norm {e.normalized:.3f})",
              flush=True)

    print(f"pearson(A1,A2) = {pearson_correlation(ds, 'A1', 'A2'):.4f}", flush=True)
    print(f"cosine(A1,A2)  = {cosine_similarity(ds, 'A1', 'A2'):.4f}", flush=True)

    p = targeted_pattern(ds, "U5")
    print("targeted pattern for U5:", p.entries, flush=True)

    t = general_template(ds, StopCriteria(tolerance=0.0))
    for a, u in zip(t.attributes, t.trace):
        print(f"  template +{a}: {u:.3f}", flush=True)

    for keep in ([], ["A2"], ["A3"], ["A2", "A3"]):
        u, _ = combination_uniqueness(ds, ["A2", "A3"], keep)
        print(f"privacy combination {'+'.join(keep) or 'none':6s}: {u:.3f}", flush=True)


if __name__ == "__main__":
    main()
