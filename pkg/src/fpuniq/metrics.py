"""Anonymity-set, entropy and correlation analytics over a BinaryDataset."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .catalog import Kind
from .dataset import BinaryDataset, DatasetError, mask_attributes

# (label, lower, upper) inclusive; upper None = unbounded
DEFAULT_BINS = (("1", 1, 1), ("2-5", 2, 5), ("6-10", 6, 10), ("11-50", 11, 50), ("51+", 51, None))


def _columns(dataset: BinaryDataset, attributes: Iterable[str] | None) -> list[int] | None:
    if attributes is None:
        return None
    cols = dataset.catalog.indices(attributes)
    if not cols:
        raise DatasetError("empty attribute subset")
    return cols


def _group_bytes(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = np.ascontiguousarray(rows)
    keys = rows.view(np.dtype((np.void, rows.shape[1]))).ravel()
    _, labels, counts = np.unique(keys, return_inverse=True, return_counts=True)
    return labels.astype(np.int64), counts.astype(np.int64)


def partition(
    dataset: BinaryDataset,
    attributes: Iterable[str] | None = None,
    extra_keys: Sequence | None = None,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Group users by exact equality of their (sub-)rows.

    Returns ``(labels, counts)``: ``labels[i]`` is the group of user ``i``,
    ``counts[g]`` the size of group ``g``. Groups are numbered in byte order
    of the packed key, so labels do not depend on ``workers``.

    ``extra_keys`` adds one more per-user value (e.g. the user agent) to the
    grouping key.
    """
    if dataset.n == 0:
        raise DatasetError("empty dataset")
    rows = dataset.packed_subset(_columns(dataset, attributes), workers=workers)
    if extra_keys is not None:
        if len(extra_keys) != dataset.n:
            raise DatasetError("extra_keys length must equal n")
        _, codes = np.unique(np.asarray(extra_keys, dtype=object).astype(str), return_inverse=True)
        codes = codes.astype("<u8").reshape(-1, 1).view(np.uint8)
        rows = np.concatenate([rows, codes], axis=1)
    return _group_bytes(rows)


@dataclass
class AnonymityHistogram:
    """Users per anonymity-set size: ``sizes[k]`` users sit in sets of size ``k``."""

    sizes: dict[int, int]
    n: int

    @classmethod
    def from_group_counts(cls, counts: np.ndarray) -> "AnonymityHistogram":
        ks, freq = np.unique(counts, return_counts=True)
        return cls({int(k): int(k * f) for k, f in zip(ks, freq)}, int(counts.sum()))

    @property
    def uniqueness(self) -> float:
        return self.sizes.get(1, 0) / self.n if self.n else 0.0

    @property
    def set_counts(self) -> dict[int, int]:
        """Number of anonymity sets of each size."""
        return {k: v // k for k, v in self.sizes.items()}

    def binned(self, bins=DEFAULT_BINS) -> list[tuple[str, int]]:
        out = []
        for label, lo, hi in bins:
            out.append((label, sum(v for k, v in self.sizes.items() if k >= lo and (hi is None or k <= hi))))
        return out

    def to_json(self) -> dict:
        return {
            "sizes": {str(k): v for k, v in sorted(self.sizes.items())},
            "n": self.n,
            "uniqueness": self.uniqueness,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AnonymityHistogram":
        return cls({int(k): int(v) for k, v in obj["sizes"].items()}, int(obj["n"]))


def anonymity_histogram(
    dataset: BinaryDataset,
    attributes: Iterable[str] | None = None,
    extra_keys: Sequence | None = None,
    workers: int = 1,
) -> AnonymityHistogram:
    _, counts = partition(dataset, attributes, extra_keys, workers)
    return AnonymityHistogram.from_group_counts(counts)


@dataclass
class EntropyResult:
    bits: float
    normalized: float
    n: int

    def to_json(self) -> dict:
        return {"bits": self.bits, "normalized": self.normalized, "n": self.n}

    @classmethod
    def from_json(cls, obj: dict) -> "EntropyResult":
        return cls(float(obj["bits"]), float(obj["normalized"]), int(obj["n"]))


def entropy_from_counts(counts: np.ndarray) -> EntropyResult:
    counts = np.asarray(counts, dtype=np.float64)
    n = int(counts.sum())
    if n >= 2 and (counts == 1).all():
        # exact, so that "normalized == 1" identifies the all-unique case
        return EntropyResult(math.log2(n), 1.0, n)
    p = counts / n
    bits = float(-(p * np.log2(p)).sum()) + 0.0
    normalized = bits / math.log2(n) if n >= 2 else 0.0
    return EntropyResult(bits, float(min(normalized, np.nextafter(1.0, 0.0))), n)


def shannon_entropy(
    dataset: BinaryDataset,
    attributes: Iterable[str] | None = None,
    extra_keys: Sequence | None = None,
) -> EntropyResult:
    """Shannon entropy (bits) of the fingerprint distribution, and its value
    divided by ``log2(n)``."""
    _, counts = partition(dataset, attributes, extra_keys)
    return entropy_from_counts(counts)


def _pair(dataset: BinaryDataset, a: str, b: str):
    return (
        dataset.column(dataset.column_index(a)).astype(np.float64),
        dataset.column(dataset.column_index(b)).astype(np.float64),
    )


def pearson_correlation(dataset: BinaryDataset, attr_a: str, attr_b: str) -> float:
    x, y = _pair(dataset, attr_a, attr_b)
    for name, v in ((attr_a, x), (attr_b, y)):
        if v.min() == v.max():
            raise DatasetError(f"correlation undefined: column {name!r} is constant")
    xc, yc = x - x.mean(), y - y.mean()
    r = float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))
    return max(-1.0, min(1.0, r))


def cosine_similarity(dataset: BinaryDataset, attr_a: str, attr_b: str) -> float:
    x, y = _pair(dataset, attr_a, attr_b)
    for name, v in ((attr_a, x), (attr_b, y)):
        if not v.any():
            raise DatasetError(f"cosine similarity undefined: column {name!r} is all zero")
    return float((x @ y) / math.sqrt((x @ x) * (y @ y)))


@dataclass
class SubsampleEstimate:
    subset_size: int
    repetitions: int
    seed: int
    mean_uniqueness: float
    std_dev: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def subsample_uniqueness(dataset: BinaryDataset, k: int, repetitions: int = 100, seed: int = 0) -> SubsampleEstimate:
    """Mean uniqueness over random ``k``-user subsets, all attributes.

    Subsets are drawn without replacement by ``numpy.random.Generator(PCG64(seed))``;
    ``std_dev`` is the population standard deviation over repetitions.
    """
    if not 1 <= k <= dataset.n:
        raise DatasetError(f"subset size {k} outside 1..{dataset.n}")
    if repetitions < 1:
        raise DatasetError("repetitions must be >= 1")
    labels, _ = partition(dataset)
    rng = np.random.Generator(np.random.PCG64(seed))
    values = np.empty(repetitions)
    for r in range(repetitions):
        picked = labels[rng.choice(dataset.n, size=k, replace=False)]
        _, counts = np.unique(picked, return_counts=True)
        values[r] = (counts == 1).sum() / k
    return SubsampleEstimate(k, repetitions, seed, float(values.mean()), float(values.std()))


def combination_uniqueness(dataset: BinaryDataset, privacy_attrs: Iterable[str], combination: Iterable[str]):
    """Uniqueness when only ``combination`` of the privacy attributes stay visible.

    The other privacy attributes are zeroed, not dropped, so the user count is
    unchanged. Returns ``(uniqueness, histogram)``.
    """
    privacy = list(dict.fromkeys(privacy_attrs))
    combo = set(combination)
    dataset.catalog.indices(privacy)
    if not combo <= set(privacy):
        raise DatasetError(f"combination {sorted(combo - set(privacy))} not among privacy attributes")
    masked = mask_attributes(dataset, [a for a in privacy if a not in combo])
    hist = anonymity_histogram(masked)
    return hist.uniqueness, hist


def uniqueness_by_min_detected(dataset: BinaryDataset, kind: Kind, thresholds: Iterable[int]) -> dict[int, float | None]:
    """Uniqueness within the users having at least ``t`` set columns of ``kind``.

    A threshold with no qualifying users maps to ``None``.
    """
    counts = dataset._kind_counts(Kind(kind))
    labels = None
    out: dict[int, float | None] = {}
    for t in thresholds:
        if t < 1:
            raise DatasetError("thresholds must be >= 1")
        members = counts >= t
        if not members.any():
            out[t] = None
            continue
        if labels is None:
            labels, _ = partition(dataset)
        # full rows, so grouping inside the sub-population = restricting global groups
        _, c = np.unique(labels[members], return_counts=True)
        out[t] = float((c == 1).sum() / members.sum())
    return out
