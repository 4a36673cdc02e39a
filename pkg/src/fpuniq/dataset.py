"""Immutable users x attributes bit matrix with projection and masking.

Bits are stored row-major and packed (``np.packbits(..., bitorder="little")``,
bit 0 of byte 0 is column 0). A column-major packed mirror and a sparse row
index are derived lazily for attribute scans.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .catalog import AttributeCatalog, Detection, Kind
from .records import BrowserFamily, RawRecord

_ROW_CHUNK = 2048


class DatasetError(ValueError):
    pass


def pack_rows(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 2:
        raise DatasetError("bit matrix must be 2-D")
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_rows(packed: np.ndarray, m: int) -> np.ndarray:
    return np.unpackbits(packed, axis=1, count=m, bitorder="little").astype(bool)


class BinaryDataset:
    """The user database: ``n`` users (rows) by ``m`` attributes (columns).

    Per-user metadata (browser family, JavaScript flag, user agent and the
    number of detected extensions/logins in the source record) rides along so
    that dataset selections can be expressed after the records are gone.
    """

    def __init__(
        self,
        user_ids: Sequence[str],
        packed: np.ndarray,
        catalog: AttributeCatalog,
        browser_families: Sequence[BrowserFamily] | None = None,
        js_enabled: Sequence[bool] | None = None,
        user_agents: Sequence[str] | None = None,
        extension_counts: Sequence[int] | None = None,
        login_counts: Sequence[int] | None = None,
    ):
        self.user_ids = tuple(user_ids)
        n, m = len(self.user_ids), len(catalog)
        nbytes = (m + 7) // 8
        packed = np.ascontiguousarray(packed, dtype=np.uint8).reshape(n, nbytes).copy()
        if m % 8 and n:
            # unused high bits of the last byte must stay zero so rows compare by bytes
            packed[:, -1] &= np.uint8((1 << (m % 8)) - 1)
        packed.setflags(write=False)
        self.packed = packed
        self.catalog = catalog
        if len(set(self.user_ids)) != n:
            raise DatasetError("duplicate user ids")

        self.browser_families = tuple(
            BrowserFamily(b) for b in (browser_families or [BrowserFamily.CHROME] * n)
        )
        self.js_enabled = _frozen(np.asarray(js_enabled if js_enabled is not None else [True] * n, dtype=bool))
        self.user_agents = tuple(user_agents) if user_agents is not None else ("",) * n
        if extension_counts is None:
            extension_counts = self._kind_counts(Kind.EXTENSION)
        if login_counts is None:
            login_counts = self._kind_counts(Kind.LOGIN)
        self.extension_counts = _frozen(np.asarray(extension_counts, dtype=np.int64))
        self.login_counts = _frozen(np.asarray(login_counts, dtype=np.int64))
        for name in ("browser_families", "user_agents", "js_enabled", "extension_counts", "login_counts"):
            if len(getattr(self, name)) != n:
                raise DatasetError(f"{name} has wrong length")

    @classmethod
    def from_bool(cls, bits, user_ids=None, catalog=None, **meta) -> "BinaryDataset":
        """Build from a dense boolean matrix; defaults to ids ``U1..Un`` and ``A1..Am``."""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise DatasetError("bit matrix must be 2-D")
        n, m = bits.shape
        if catalog is None:
            catalog = extension_catalog([f"A{j + 1}" for j in range(m)])
        if user_ids is None:
            user_ids = [f"U{i + 1}" for i in range(n)]
        return cls(user_ids, pack_rows(bits), catalog, **meta)

    # shape / access

    @property
    def n(self) -> int:
        return len(self.user_ids)

    @property
    def m(self) -> int:
        return len(self.catalog)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.m

    @property
    def attribute_ids(self) -> list[str]:
        return self.catalog.ids

    @cached_property
    def _user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    def user_index(self, user_id: str) -> int:
        try:
            return self._user_index[user_id]
        except KeyError:
            raise DatasetError(f"unknown user {user_id!r}") from None

    def column_index(self, attr_id: str) -> int:
        return self.catalog.index(attr_id)

    def to_bool(self) -> np.ndarray:
        return unpack_rows(self.packed, self.m)

    def row(self, i: int) -> np.ndarray:
        return unpack_rows(self.packed[i : i + 1], self.m)[0]

    def column(self, j: int) -> np.ndarray:
        return np.unpackbits(self.packed_columns[j], count=self.n, bitorder="little").astype(bool)

    def columns_of_kind(self, kind: Kind) -> list[int]:
        return [j for j, a in enumerate(self.catalog) if a.kind is Kind(kind)]

    def column_byte_mask(self, cols: Iterable[int]) -> np.ndarray:
        keep = np.zeros(self.m, dtype=bool)
        keep[list(cols)] = True
        return np.packbits(keep, bitorder="little")

    def _kind_counts(self, kind: Kind) -> np.ndarray:
        """Per-row popcount over the current columns of ``kind``."""
        mask = self.column_byte_mask(self.columns_of_kind(kind))
        return np.bitwise_count(self.packed & mask).sum(axis=1, dtype=np.int64)

    # derived views, computed once

    @cached_property
    def packed_columns(self) -> np.ndarray:
        """Column-major packed mirror, shape ``(m, ceil(n / 8))``."""
        n, m = self.shape
        out = np.zeros((m, (n + 7) // 8), dtype=np.uint8)
        block = 256  # bytes of packed row per step = 2048 columns
        for b0 in range(0, self.packed.shape[1], block):
            bits = np.unpackbits(self.packed[:, b0 : b0 + block], axis=1, bitorder="little")
            j0 = b0 * 8
            j1 = min(m, j0 + bits.shape[1])
            out[j0:j1] = np.packbits(bits[:, : j1 - j0].T, axis=1, bitorder="little")
        return _frozen(out)

    @cached_property
    def column_counts(self) -> np.ndarray:
        return _frozen(np.bitwise_count(self.packed_columns).sum(axis=1, dtype=np.int64))

    @cached_property
    def row_counts(self) -> np.ndarray:
        return _frozen(np.bitwise_count(self.packed).sum(axis=1, dtype=np.int64))

    @property
    def nnz(self) -> int:
        return int(self.row_counts.sum())

    @property
    def density(self) -> float:
        return self.nnz / max(1, self.n * self.m)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Sparse row index ``(indptr, column_indices)``."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.row_counts, out=indptr[1:])
        cols = np.empty(int(indptr[-1]), dtype=np.int32)
        for r0 in range(0, self.n, _ROW_CHUNK):
            bits = np.unpackbits(self.packed[r0 : r0 + _ROW_CHUNK], axis=1, count=self.m, bitorder="little")
            _, c = np.nonzero(bits)
            cols[indptr[r0] : indptr[min(self.n, r0 + _ROW_CHUNK)]] = c
        return _frozen(indptr), _frozen(cols)

    def prefers_sparse(self, threshold: float = 0.02) -> bool:
        return self.density < threshold

    def column_counts_for(self, rows: np.ndarray) -> np.ndarray:
        """Per-column number of set bits among ``rows``."""
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) == self.n:
            return self.column_counts
        if self.prefers_sparse():
            _, cols = gather_csr(*self.csr, rows)
            return np.bincount(cols, minlength=self.m).astype(np.int64)
        out = np.zeros(self.m, dtype=np.int64)
        for s in range(0, len(rows), _ROW_CHUNK):
            chunk = self.packed[rows[s : s + _ROW_CHUNK]]
            out += np.unpackbits(chunk, axis=1, count=self.m, bitorder="little").sum(axis=0, dtype=np.int64)
        return out

    def packed_subset(self, cols: Sequence[int] | None, workers: int = 1) -> np.ndarray:
        """Packed rows restricted to ``cols`` (in the given order)."""
        if cols is None or (len(cols) == self.m and np.array_equal(cols, np.arange(self.m))):
            return self.packed
        cols = np.asarray(cols, dtype=np.int64)
        out = np.zeros((self.n, (len(cols) + 7) // 8), dtype=np.uint8)

        def work(r0):
            bits = np.unpackbits(self.packed[r0 : r0 + _ROW_CHUNK], axis=1, count=self.m, bitorder="little")
            out[r0 : r0 + _ROW_CHUNK] = np.packbits(bits[:, cols], axis=1, bitorder="little")

        _run(work, range(0, self.n, _ROW_CHUNK), workers)
        return out

    # comparisons

    def __eq__(self, other):
        if not isinstance(other, BinaryDataset):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.catalog == other.catalog
            and np.array_equal(self.packed, other.packed)
            and self.browser_families == other.browser_families
            and self.user_agents == other.user_agents
            and np.array_equal(self.js_enabled, other.js_enabled)
            and np.array_equal(self.extension_counts, other.extension_counts)
            and np.array_equal(self.login_counts, other.login_counts)
        )

    __hash__ = None

    def __repr__(self):
        return f"BinaryDataset(n={self.n}, m={self.m}, density={self.density:.4f})"

    def _take(self, rows: np.ndarray, cols: np.ndarray | None, packed: np.ndarray | None = None):
        rows = np.asarray(rows, dtype=np.int64)
        catalog = self.catalog if cols is None else self.catalog.subset(cols.tolist())
        if packed is None:
            packed = self.packed_subset(None if cols is None else cols.tolist())
        return BinaryDataset(
            [self.user_ids[i] for i in rows],
            packed[rows],
            catalog,
            browser_families=[self.browser_families[i] for i in rows],
            js_enabled=self.js_enabled[rows],
            user_agents=[self.user_agents[i] for i in rows],
            extension_counts=self.extension_counts[rows],
            login_counts=self.login_counts[rows],
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _run(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        for it in items:
            fn(it)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, items))


def gather_csr(indptr: np.ndarray, indices: np.ndarray, rows: np.ndarray):
    """Nonzeros of the selected rows as ``(position_in_rows, column)`` arrays."""
    rows = np.asarray(rows, dtype=np.int64)
    starts = indptr[rows]
    lengths = indptr[rows + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=indices.dtype)
    pos = np.repeat(np.arange(len(rows)), lengths)
    offsets = np.cumsum(lengths) - lengths
    idx = np.arange(total) - np.repeat(offsets, lengths) + np.repeat(starts, lengths)
    return pos, indices[idx]


def extension_catalog(ids: Iterable[str]) -> AttributeCatalog:
    from .catalog import AttributeDescriptor

    return AttributeCatalog(tuple(AttributeDescriptor(i, Kind.EXTENSION, Detection.WAR) for i in ids))


def build_dataset(records: Sequence[RawRecord], catalog: AttributeCatalog, allow_empty: bool = False) -> BinaryDataset:
    """Materialize cleaned records as a bit matrix (row order = record order)."""
    if not records and not allow_empty:
        raise DatasetError("empty dataset")
    n, m = len(records), len(catalog)
    bits = np.zeros((n, m), dtype=bool)
    for i, r in enumerate(records):
        for kind, ids in ((Kind.EXTENSION, r.detected_extensions), (Kind.LOGIN, r.detected_logins)):
            for a in ids:
                if a not in catalog:
                    raise DatasetError(f"user {r.user_id!r}: unknown attribute id {a!r}")
                j = catalog.index(a)
                if catalog.attributes[j].kind is not kind:
                    raise DatasetError(f"user {r.user_id!r}: attribute {a!r} is not a {kind.value}")
                bits[i, j] = True
    return BinaryDataset(
        [r.user_id for r in records],
        pack_rows(bits),
        catalog,
        browser_families=[r.browser_family for r in records],
        js_enabled=[r.js_enabled for r in records],
        user_agents=[r.user_agent for r in records],
        extension_counts=[len(r.detected_extensions) for r in records],
        login_counts=[len(r.detected_logins) for r in records],
    )


def _meet(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a & b


@dataclass(frozen=True)
class UserFilter:
    """Conjunctive user predicate. ``None`` fields do not constrain.

    Detected counts refer to the user's source record, not to the columns of
    the current dataset, so user and attribute filters commute.
    """

    browser_families: frozenset[BrowserFamily] | None = None
    js_enabled: frozenset[bool] | None = None
    min_extensions: int = 0
    min_logins: int = 0
    min_total: int = 0
    user_ids: frozenset[str] | None = None

    def __post_init__(self):
        if self.browser_families is not None:
            object.__setattr__(self, "browser_families", frozenset(BrowserFamily(b) for b in self.browser_families))
        if self.js_enabled is not None and not isinstance(self.js_enabled, frozenset):
            value = self.js_enabled
            object.__setattr__(self, "js_enabled", frozenset([value] if isinstance(value, bool) else value))
        if self.user_ids is not None:
            object.__setattr__(self, "user_ids", frozenset(self.user_ids))

    def __and__(self, other: "UserFilter") -> "UserFilter":
        return UserFilter(
            browser_families=_meet(self.browser_families, other.browser_families),
            js_enabled=_meet(self.js_enabled, other.js_enabled),
            min_extensions=max(self.min_extensions, other.min_extensions),
            min_logins=max(self.min_logins, other.min_logins),
            min_total=max(self.min_total, other.min_total),
            user_ids=_meet(self.user_ids, other.user_ids),
        )

    def mask(self, ds: BinaryDataset) -> np.ndarray:
        keep = np.ones(ds.n, dtype=bool)
        if self.browser_families is not None:
            keep &= np.array([b in self.browser_families for b in ds.browser_families], dtype=bool)
        if self.js_enabled is not None:
            keep &= np.isin(ds.js_enabled, list(self.js_enabled))
        keep &= ds.extension_counts >= self.min_extensions
        keep &= ds.login_counts >= self.min_logins
        keep &= ds.extension_counts + ds.login_counts >= self.min_total
        if self.user_ids is not None:
            keep &= np.array([u in self.user_ids for u in ds.user_ids], dtype=bool)
        return keep


@dataclass(frozen=True)
class AttributeFilter:
    """Conjunctive column predicate. ``None`` fields do not constrain."""

    kinds: frozenset[Kind] | None = None
    detections: frozenset[Detection] | None = None
    ids: frozenset[str] | None = None
    stable_only: bool = False
    months: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kinds is not None:
            object.__setattr__(self, "kinds", frozenset(Kind(k) for k in self.kinds))
        if self.detections is not None:
            object.__setattr__(self, "detections", frozenset(Detection(d) for d in self.detections))
        if self.ids is not None:
            object.__setattr__(self, "ids", frozenset(self.ids))
        object.__setattr__(self, "months", frozenset(self.months))

    def __and__(self, other: "AttributeFilter") -> "AttributeFilter":
        return AttributeFilter(
            kinds=_meet(self.kinds, other.kinds),
            detections=_meet(self.detections, other.detections),
            ids=_meet(self.ids, other.ids),
            stable_only=self.stable_only or other.stable_only,
            months=self.months | other.months,
        )

    def select(self, catalog: AttributeCatalog) -> list[int]:
        if self.ids is not None:
            unknown = self.ids - set(catalog.ids)
            if unknown:
                raise DatasetError(f"unknown attribute ids: {sorted(unknown)}")
        out = []
        for j, a in enumerate(catalog):
            if self.kinds is not None and a.kind not in self.kinds:
                continue
            if self.detections is not None and a.detection not in self.detections:
                continue
            if self.ids is not None and a.id not in self.ids:
                continue
            if self.stable_only and not catalog.is_stable(a.id):
                continue
            if any(not a.detectable_in(k) for k in self.months):
                continue
            out.append(j)
        return out


def project(
    dataset: BinaryDataset,
    user_filter: UserFilter | None = None,
    attribute_filter: AttributeFilter | None = None,
) -> BinaryDataset:
    """Keep matching users and columns; column order is preserved."""
    rows = np.flatnonzero(user_filter.mask(dataset)) if user_filter else np.arange(dataset.n)
    cols = None
    if attribute_filter is not None:
        cols = attribute_filter.select(dataset.catalog)
        if not cols:
            raise DatasetError("attribute filter selects zero attributes")
        if len(cols) == dataset.m:
            cols = None
    if cols is None and len(rows) == dataset.n:
        return dataset
    return dataset._take(rows, None if cols is None else np.asarray(cols))


def mask_attributes(dataset: BinaryDataset, attrs: Iterable[str]) -> BinaryDataset:
    """Zero the listed columns; users and columns are all kept."""
    cols = dataset.catalog.indices(attrs)
    if not cols:
        return dataset
    keep = np.full(dataset.m, True)
    keep[cols] = False
    byte_mask = np.packbits(keep, bitorder="little")
    return BinaryDataset(
        dataset.user_ids,
        dataset.packed & byte_mask,
        dataset.catalog,
        browser_families=dataset.browser_families,
        js_enabled=dataset.js_enabled,
        user_agents=dataset.user_agents,
        extension_counts=dataset.extension_counts,
        login_counts=dataset.login_counts,
    )


# named dataset selections over a full dataset
SELECTIONS = {
    "all": (None, None),
    "ext": (
        UserFilter(browser_families={BrowserFamily.CHROME}, min_extensions=1),
        AttributeFilter(kinds={Kind.EXTENSION}),
    ),
    "ext-stable": (
        UserFilter(browser_families={BrowserFamily.CHROME}, min_extensions=1),
        AttributeFilter(kinds={Kind.EXTENSION}, stable_only=True),
    ),
    "log": (UserFilter(min_logins=1), AttributeFilter(kinds={Kind.LOGIN})),
    "both-and": (UserFilter(browser_families={BrowserFamily.CHROME}, min_extensions=1, min_logins=1), None),
    "both-or": (UserFilter(min_total=1), None),
    "csp-only": (UserFilter(min_logins=1), AttributeFilter(kinds={Kind.LOGIN}, detections={Detection.CSP_REPORT})),
}


def select(dataset: BinaryDataset, name: str) -> BinaryDataset:
    try:
        uf, af = SELECTIONS[name]
    except KeyError:
        raise DatasetError(f"unknown selection {name!r}; choose from {sorted(SELECTIONS)}") from None
    return project(dataset, uf, af)
