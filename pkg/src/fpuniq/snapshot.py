"""Binary dataset snapshot.

Layout (all integers little-endian)::

    magic      5 bytes   b"UQFP1"
    n          u64
    m          u64
    digest     32 bytes  SHA-256 of the catalog (AttributeCatalog.digest)
    bits       n * ceil(m / 8) bytes, row-major, bit 0 of a row = column 0
    table_len  u64
    table      UTF-8 JSON array, one entry per row:
               [user_id, browser_family, js_enabled, user_agent, n_extensions, n_logins]

The catalog itself is not embedded; loading requires the same catalog.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .catalog import AttributeCatalog
from .dataset import BinaryDataset

MAGIC = b"UQFP1"
_HEADER = struct.Struct("<5sQQ32s")


class SnapshotError(ValueError):
    pass


def dumps_snapshot(ds: BinaryDataset) -> bytes:
    table = [
        [u, b.value, bool(js), ua, int(ne), int(nl)]
        for u, b, js, ua, ne, nl in zip(
            ds.user_ids, ds.browser_families, ds.js_enabled, ds.user_agents, ds.extension_counts, ds.login_counts
        )
    ]
    blob = json.dumps(table, separators=(",", ":"), ensure_ascii=False).encode()
    return b"".join(
        [
            _HEADER.pack(MAGIC, ds.n, ds.m, ds.catalog.digest()),
            ds.packed.tobytes(),
            struct.pack("<Q", len(blob)),
            blob,
        ]
    )


def loads_snapshot(data: bytes, catalog: AttributeCatalog) -> BinaryDataset:
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated snapshot header")
    magic, n, m, digest = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if m != len(catalog):
        raise SnapshotError(f"snapshot has {m} columns, catalog has {len(catalog)}")
    if digest != catalog.digest():
        raise SnapshotError("catalog digest mismatch")
    off = _HEADER.size
    nbytes = n * ((m + 7) // 8)
    if len(data) < off + nbytes + 8:
        raise SnapshotError("truncated snapshot body")
    packed = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off).reshape(n, (m + 7) // 8)
    off += nbytes
    (tlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    try:
        table = json.loads(data[off : off + tlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupt user table: {exc}") from None
    if len(table) != n:
        raise SnapshotError("user table length does not match n")
    cols = list(zip(*table)) if table else [()] * 6
    return BinaryDataset(
        cols[0],
        packed,
        catalog,
        browser_families=cols[1],
        js_enabled=cols[2],
        user_agents=cols[3],
        extension_counts=cols[4],
        login_counts=cols[5],
    )


def save_snapshot(ds: BinaryDataset, path: str | Path) -> None:
    Path(path).write_bytes(dumps_snapshot(ds))


def load_snapshot(path: str | Path, catalog: AttributeCatalog) -> BinaryDataset:
    return loads_snapshot(Path(path).read_bytes(), catalog)
