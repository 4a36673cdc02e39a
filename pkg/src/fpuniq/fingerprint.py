"""Targeted fingerprint patterns and general fingerprint templates.

Targeted: for one user, greedily add the attribute on which the fewest of
the remaining candidates agree with the target, until the target is alone
(or nothing separates it further).

General: one attribute list for everybody, built by partition refinement.
Each step adds the attribute whose split of the current anonymity sets
maximizes an objective (Shannon entropy of the refined partition by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import sparse

from .dataset import BinaryDataset, DatasetError, _run, gather_csr
from .metrics import anonymity_histogram

_BLOCK_BYTES = 128  # 1024 columns per dense scoring block


@dataclass
class FingerprintPattern:
    owner: str
    entries: list[tuple[str, bool]]
    achieved_unique: bool

    def __len__(self):
        return len(self.entries)

    def to_json(self) -> dict:
        return {
            "owner": self.owner,
            "entries": [[a, bool(v)] for a, v in self.entries],
            "achieved_unique": self.achieved_unique,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FingerprintPattern":
        return cls(obj["owner"], [(a, bool(v)) for a, v in obj["entries"]], bool(obj.get("achieved_unique", False)))


@dataclass
class FingerprintTemplate:
    attributes: list[str] = field(default_factory=list)
    trace: list[float] = field(default_factory=list)
    base_uniqueness: float = 0.0  # before any attribute: 1.0 only when n == 1

    def __len__(self):
        return len(self.attributes)

    @property
    def uniqueness(self) -> float:
        return self.trace[-1] if self.trace else self.base_uniqueness

    def to_json(self) -> dict:
        out = {"attributes": list(self.attributes), "trace": list(self.trace)}
        if self.base_uniqueness:
            out["base_uniqueness"] = self.base_uniqueness
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FingerprintTemplate":
        return cls(list(obj["attributes"]), [float(x) for x in obj["trace"]], float(obj.get("base_uniqueness", 0.0)))


@dataclass(frozen=True)
class StopCriteria:
    """When to stop growing a template.

    ``target_uniqueness`` is level A (``None``: uniqueness over all eligible
    attributes). The run stops once ``A - B <= tolerance * A`` (or
    ``<= tolerance`` with ``relative=False``), when ``max_attributes`` is hit,
    or when no attribute refines the partition any more.
    """

    target_uniqueness: float | None = None
    tolerance: float = 0.01
    max_attributes: int | None = None
    relative: bool = True

    def __post_init__(self):
        if not 0 <= self.tolerance < 1:
            raise ValueError("tolerance must be in [0, 1)")
        if self.max_attributes is not None and self.max_attributes < 0:
            raise ValueError("max_attributes must be >= 0")

    def reached(self, a: float, b: float) -> bool:
        slack = self.tolerance * a if self.relative else self.tolerance
        return a - b <= slack


# targeted


def targeted_pattern(dataset: BinaryDataset, user_id: str) -> FingerprintPattern:
    i = dataset.user_index(user_id)
    if dataset.m < 1:
        raise DatasetError("dataset has no attributes")
    x = dataset.row(i)
    cand = np.arange(dataset.n)
    entries: list[tuple[str, bool]] = []
    while len(cand) > 1:
        ones = dataset.column_counts_for(cand)
        agree = np.where(x, ones, len(cand) - ones)  # includes the target itself
        acceptable = agree < len(cand)
        if not acceptable.any():
            break
        j = int(np.where(acceptable, agree, np.iinfo(np.int64).max).argmin())
        entries.append((dataset.catalog.attributes[j].id, bool(x[j])))
        cand = cand[dataset.column(j)[cand] == x[j]]
    return FingerprintPattern(user_id, entries, achieved_unique=len(cand) == 1)


def apply_pattern(dataset: BinaryDataset, pattern: FingerprintPattern | Iterable[tuple[str, bool]]) -> set[str]:
    """Users whose bits match every ``(attribute, required)`` entry."""
    entries = pattern.entries if isinstance(pattern, FingerprintPattern) else list(pattern)
    match = np.ones(dataset.n, dtype=bool)
    for attr, required in entries:
        match &= dataset.column(dataset.column_index(attr)) == bool(required)
    return {dataset.user_ids[k] for k in np.flatnonzero(match)}


def targeted_patterns(dataset: BinaryDataset, user_ids: Iterable[str] | None = None) -> list[FingerprintPattern]:
    ids = dataset.user_ids if user_ids is None else list(user_ids)
    return [targeted_pattern(dataset, u) for u in ids]


# general

def _xlogx_table(n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = k * np.log(k)
    t[0] = 0.0
    return t


def _entropy_gain(table, size, ones, split):
    # n * (H_refined - H_current) in nats, summed per column by the caller
    return table[size] - table[ones] - table[size - ones]


def _singleton_gain(table, size, ones, split):
    return (split & (ones == 1)).astype(np.float64) + (split & (size - ones == 1))


OBJECTIVES: dict[str, Callable] = {"entropy": _entropy_gain, "singletons": _singleton_gain}


@dataclass
class _Partition:
    labels: np.ndarray
    counts: np.ndarray

    @classmethod
    def trivial(cls, n: int) -> "_Partition":
        return cls(np.zeros(n, dtype=np.int64), np.array([n], dtype=np.int64))

    def refine(self, bits: np.ndarray) -> "_Partition":
        _, labels, counts = np.unique(self.labels * 2 + bits, return_inverse=True, return_counts=True)
        return _Partition(labels.astype(np.int64), counts.astype(np.int64))

    @property
    def singletons(self) -> int:
        return int((self.counts == 1).sum())


def _split_counts_sparse(dataset, order, group_of_sorted, n_active):
    """(group, column, ones) triples, column-major; group ascending within a column."""
    indptr, indices = dataset.csr
    pos, cols = gather_csr(indptr, indices, order)
    key = cols.astype(np.int64) * n_active + group_of_sorted[pos]
    uniq, ones = np.unique(key, return_counts=True)
    return uniq % n_active, uniq // n_active, ones.astype(np.int64)


def _score_dense(dataset, order, sizes, candidate, table, objective, workers):
    """Per-column gain from packed rows, one column block at a time.

    Gains are summed over groups in ascending order (axis-0 reduction of a
    C-ordered array is sequential), and groups a column does not split add an
    exact 0.0, so the result matches the sparse kernel bit for bit.
    """
    m = dataset.m
    # group-indicator matrix; float32 sums of 0/1 are exact below 2**24 rows
    group_of_row = np.repeat(np.arange(len(sizes)), sizes)
    indicator = sparse.csr_matrix(
        (np.ones(len(order), dtype=np.float32), (group_of_row, np.arange(len(order)))),
        shape=(len(sizes), len(order)),
    )
    size_col = sizes[:, None]
    score = np.zeros(m)
    refines = np.zeros(m, dtype=bool)
    blocks = [b0 for b0 in range(0, dataset.packed.shape[1], _BLOCK_BYTES) if candidate[b0 * 8 : (b0 + _BLOCK_BYTES) * 8].any()]

    def work(b0):
        j0, j1 = b0 * 8, min(m, (b0 + _BLOCK_BYTES) * 8)
        bits = np.unpackbits(dataset.packed[order, b0 : b0 + _BLOCK_BYTES], axis=1, count=j1 - j0, bitorder="little")
        ones = np.asarray(indicator @ bits.astype(np.float32)).astype(np.int64)
        split = (ones > 0) & (ones < size_col)
        score[j0:j1] = OBJECTIVES[objective](table, size_col, ones, split).sum(axis=0)
        refines[j0:j1] = split.any(axis=0)

    _run(work, blocks, workers)
    return score, refines


def _score(dataset, part, candidate, table, objective, kernel, workers):
    """Per-column objective gain and whether the column splits any set."""
    m = dataset.m
    active_groups = np.flatnonzero(part.counts >= 2)
    if len(active_groups) == 0:
        return np.zeros(m), np.zeros(m, dtype=bool)
    rank = np.full(len(part.counts), -1, dtype=np.int64)
    rank[active_groups] = np.arange(len(active_groups))
    row_rank = rank[part.labels]
    active_rows = np.flatnonzero(row_rank >= 0)
    order = active_rows[np.argsort(row_rank[active_rows], kind="stable")]
    sizes = part.counts[active_groups]

    if kernel == "dense":
        return _score_dense(dataset, order, sizes, candidate, table, objective, workers)
    grp, cols, ones = _split_counts_sparse(dataset, order, row_rank[order], len(active_groups))
    size = sizes[grp]
    split = ones < size
    gain = OBJECTIVES[objective](table, size, ones, split)
    score = np.bincount(cols, weights=gain, minlength=m)
    refines = np.bincount(cols[split], minlength=m) > 0
    return score, refines


def _pick_kernel(dataset: BinaryDataset, kernel: str) -> str:
    if kernel == "auto":
        return "sparse" if dataset.prefers_sparse() else "dense"
    if kernel not in ("sparse", "dense"):
        raise ValueError(f"unknown kernel {kernel!r}")
    return kernel


def general_template(
    dataset: BinaryDataset,
    stop: StopCriteria = StopCriteria(),
    allowed: Iterable[str] | None = None,
    objective: str = "entropy",
    workers: int = 1,
    kernel: str = "auto",
) -> FingerprintTemplate:
    """Greedy fingerprint template by partition refinement.

    Ties (up to float noise, 1e-9 relative) go to the lowest column index.
    Results do not depend on ``workers`` or ``kernel``.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; choose from {sorted(OBJECTIVES)}")
    n, m = dataset.shape
    if n == 0:
        raise DatasetError("empty dataset")
    candidate = np.ones(m, dtype=bool)
    if allowed is not None:
        allowed = list(allowed)
        if not allowed:
            raise DatasetError("empty allowed attribute set")
        candidate[:] = False
        candidate[dataset.catalog.indices(allowed)] = True
    target = stop.target_uniqueness
    if target is None:
        target = anonymity_histogram(dataset, allowed).uniqueness
    kernel = _pick_kernel(dataset, kernel)
    table = _xlogx_table(n)

    part = _Partition.trivial(n)
    template = FingerprintTemplate(base_uniqueness=part.singletons / n)
    if stop.reached(target, template.base_uniqueness):
        return template
    while stop.max_attributes is None or len(template) < stop.max_attributes:
        score, refines = _score(dataset, part, candidate, table, objective, kernel, workers)
        eligible = candidate & refines
        if not eligible.any():
            break
        best = score[eligible].max()
        j = int(np.flatnonzero(eligible & (score >= best - 1e-9 * max(1.0, abs(best))))[0])
        part = part.refine(dataset.column(j))
        candidate[j] = False
        template.attributes.append(dataset.catalog.attributes[j].id)
        template.trace.append(part.singletons / n)
        if stop.reached(target, template.trace[-1]):
            break
    return template


def restrict_template(dataset: BinaryDataset, stop: StopCriteria, allowed_attrs: Iterable[str], **kwargs) -> FingerprintTemplate:
    allowed = list(allowed_attrs)
    if not allowed:
        raise DatasetError("empty allowed attribute set")
    return general_template(dataset, stop, allowed=allowed, **kwargs)


def template_uniqueness_curve(dataset: BinaryDataset, template: FingerprintTemplate | Iterable[str]) -> list[float]:
    """Uniqueness after each prefix of the template."""
    attrs = template.attributes if isinstance(template, FingerprintTemplate) else list(template)
    part = _Partition.trivial(dataset.n)
    out = []
    for a in attrs:
        part = part.refine(dataset.column(dataset.column_index(a)))
        out.append(part.singletons / dataset.n)
    return out
