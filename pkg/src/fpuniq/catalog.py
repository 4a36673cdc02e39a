"""Attribute catalog: the universe of detectable extensions and logins.

The order of attributes in a catalog is the canonical column order of every
dataset built from it.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class CatalogError(ValueError):
    """Raised for malformed or inconsistent catalogs."""


class Kind(str, enum.Enum):
    EXTENSION = "Extension"
    LOGIN = "Login"


class Detection(str, enum.Enum):
    WAR = "WAR"
    REDIRECT_IMAGE = "RedirectImage"
    CSP_REPORT = "CSPReport"


_ALLOWED_DETECTION = {
    Kind.EXTENSION: {Detection.WAR},
    Kind.LOGIN: {Detection.REDIRECT_IMAGE, Detection.CSP_REPORT},
}


@dataclass(frozen=True)
class AttributeDescriptor:
    """One detectable attribute.

    ``stability`` is a bitmap over observation months: bit ``k`` set means the
    attribute was detectable in month ``k``.
    """

    id: str
    kind: Kind
    detection: Detection
    stability: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "detection", Detection(self.detection))
        if not self.id:
            raise CatalogError("attribute id must be non-empty")
        if self.detection not in _ALLOWED_DETECTION[self.kind]:
            raise CatalogError(
                f"kind/detection mismatch for {self.id!r}: "
                f"{self.kind.value} cannot be detected via {self.detection.value}"
            )
        if self.stability <= 0:
            raise CatalogError(f"attribute {self.id!r} has an empty stability bitmap")

    @property
    def months(self) -> list[int]:
        return [k for k in range(self.stability.bit_length()) if self.stability >> k & 1]

    def detectable_in(self, month: int) -> bool:
        return bool(self.stability >> month & 1)


@dataclass(frozen=True)
class AttributeCatalog:
    attributes: tuple[AttributeDescriptor, ...]
    month_count: int = field(default=0)

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise CatalogError("empty catalog")
        seen: dict[str, int] = {}
        for i, a in enumerate(attrs):
            if a.id in seen:
                raise CatalogError(f"duplicate attribute id {a.id!r}")
            seen[a.id] = i
        object.__setattr__(self, "_index", seen)
        widest = max(a.stability.bit_length() for a in attrs)
        if self.month_count == 0:
            object.__setattr__(self, "month_count", widest)
        elif self.month_count < widest:
            raise CatalogError(
                f"month_count={self.month_count} narrower than widest stability bitmap ({widest})"
            )

    def __len__(self) -> int:
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    def __contains__(self, attr_id: str) -> bool:
        return attr_id in self._index

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.attributes]

    def index(self, attr_id: str) -> int:
        try:
            return self._index[attr_id]
        except KeyError:
            raise CatalogError(f"unknown attribute id {attr_id!r}") from None

    def indices(self, attr_ids: Iterable[str]) -> list[int]:
        return [self.index(a) for a in attr_ids]

    def get(self, attr_id: str) -> AttributeDescriptor:
        return self.attributes[self.index(attr_id)]

    def is_stable(self, attr_id: str) -> bool:
        """Detectable in every month of the observation window."""
        full = (1 << self.month_count) - 1
        return self.get(attr_id).stability & full == full

    def subset(self, indices: Iterable[int]) -> "AttributeCatalog":
        return AttributeCatalog(tuple(self.attributes[i] for i in indices), self.month_count)

    def to_json(self) -> list[dict]:
        return [
            {
                "id": a.id,
                "kind": a.kind.value,
                "detection": a.detection.value,
                "stability_months": a.months,
            }
            for a in self.attributes
        ]

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON form (attribute order and month_count included)."""
        payload = json.dumps(
            {"month_count": self.month_count, "attributes": self.to_json()},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).digest()


def months_to_bitmap(months: Iterable[int]) -> int:
    bitmap = 0
    for k in months:
        if int(k) < 0:
            raise CatalogError(f"negative month index {k}")
        bitmap |= 1 << int(k)
    return bitmap


def catalog_from_json(entries: list[dict]) -> AttributeCatalog:
    if not isinstance(entries, list):
        raise CatalogError("catalog file must contain a JSON array")
    attrs = []
    pending_full = []
    for i, entry in enumerate(entries):
        try:
            months = entry.get("stability_months")
            desc = AttributeDescriptor(
                id=str(entry["id"]),
                kind=entry["kind"],
                detection=entry["detection"],
                stability=months_to_bitmap(months) if months is not None else 1,
            )
        except KeyError as exc:
            raise CatalogError(f"catalog entry {i}: missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            if isinstance(exc, CatalogError):
                raise
            raise CatalogError(f"catalog entry {i}: {exc}") from None
        if months is None:
            pending_full.append(i)
        attrs.append(desc)
    catalog = AttributeCatalog(tuple(attrs))
    if pending_full:
        # entries without stability_months count as detectable in every month
        full = (1 << catalog.month_count) - 1
        attrs = [
            AttributeDescriptor(a.id, a.kind, a.detection, full) if i in pending_full else a
            for i, a in enumerate(attrs)
        ]
        catalog = AttributeCatalog(tuple(attrs), catalog.month_count)
    return catalog


def load_catalog(source: str | Path) -> AttributeCatalog:
    path = Path(source)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return catalog_from_json(entries)


def save_catalog(catalog: AttributeCatalog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog.to_json(), indent=1) + "\n")
