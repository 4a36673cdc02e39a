import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import WORKED_ROWS, worked_dataset
from fpuniq.catalog import AttributeCatalog, CatalogError, AttributeDescriptor, Detection, Kind
from fpuniq.dataset import (
    AttributeFilter,
    BinaryDataset,
    DatasetError,
    UserFilter,
    build_dataset,
    mask_attributes,
    pack_rows,
    project,
    select,
    unpack_rows,
)
from fpuniq.records import BrowserFamily, RawRecord
from fpuniq.snapshot import SnapshotError, dumps_snapshot, load_snapshot, loads_snapshot, save_snapshot


def bools(ds):
    return ["".join("1" if b else "0" for b in row) for row in ds.to_bool()]


def test_build_from_records(worked):
    assert bools(worked) == WORKED_ROWS
    assert np.array_equal(worked.packed, worked_dataset().packed)
    assert list(worked.user_ids) == [f"U{i}" for i in range(1, 7)]


def test_empty_records():
    cat = AttributeCatalog((AttributeDescriptor("A", Kind.EXTENSION, Detection.WAR),))
    with pytest.raises(DatasetError, match="empty dataset"):
        build_dataset([], cat)
    assert build_dataset([], cat, allow_empty=True).n == 0


def test_all_ones_single_user(worked):
    ds = build_dataset([RawRecord("solo", detected_extensions={"A1", "A2", "A3", "A4"})], worked.catalog)
    assert bools(ds) == ["1111"]


def test_unknown_or_wrong_kind_attribute(worked):
    with pytest.raises(DatasetError, match="unknown"):
        build_dataset([RawRecord("u", detected_extensions={"nope"})], worked.catalog)
    with pytest.raises(DatasetError, match="not a Login"):
        build_dataset([RawRecord("u", detected_logins={"A1"})], worked.catalog)


def test_duplicate_users_rejected():
    with pytest.raises(DatasetError):
        BinaryDataset.from_bool(np.zeros((2, 1), bool), user_ids=["a", "a"])


def test_immutable(worked):
    with pytest.raises(ValueError):
        worked.packed[0, 0] = 1


@given(hnp.arrays(bool, st.tuples(st.integers(0, 20), st.integers(1, 30))))
def test_pack_roundtrip(bits):
    assert np.array_equal(unpack_rows(pack_rows(bits), bits.shape[1]), bits)
    ds = BinaryDataset.from_bool(bits)
    assert np.array_equal(ds.to_bool(), bits)
    for j in range(bits.shape[1]):
        assert np.array_equal(ds.column(j), bits[:, j])
    assert np.array_equal(ds.column_counts, bits.sum(axis=0))
    assert np.array_equal(ds.row_counts, bits.sum(axis=1))


def test_mask_examples():
    ds = worked_dataset()
    assert mask_attributes(ds, []) is ds
    assert bools(mask_attributes(ds, ["A2"])) == ["0010", "1000", "1010", "1001", "1010", "1001"]
    everything = mask_attributes(ds, ds.attribute_ids)
    assert set(bools(everything)) == {"0000"} and everything.n == 6
    with pytest.raises(CatalogError):
        mask_attributes(ds, ["A9"])


def mixed_dataset(rng, n=40):
    attrs = [AttributeDescriptor(f"e{j}", Kind.EXTENSION, Detection.WAR, stability=0b111 if j % 2 else 0b011) for j in range(6)]
    attrs += [AttributeDescriptor(f"l{j}", Kind.LOGIN, Detection.CSP_REPORT if j < 2 else Detection.REDIRECT_IMAGE) for j in range(4)]
    cat = AttributeCatalog(tuple(attrs))
    fams = list(BrowserFamily)
    records = []
    for i in range(n):
        fam = fams[int(rng.integers(len(fams)))]
        ext = {a.id for a in attrs[:6] if rng.random() < 0.3}
        log = {a.id for a in attrs[6:] if rng.random() < 0.3}
        records.append(RawRecord(f"u{i}", browser_family=fam, js_enabled=bool(rng.random() < 0.7),
                                 user_agent=f"ua{i % 3}", detected_extensions=ext, detected_logins=log))
    return build_dataset(records, cat), records


def test_selections_match_definitions():
    ds, records = mixed_dataset(np.random.default_rng(1))
    ext = select(ds, "ext")
    want = [r.user_id for r in records if r.browser_family is BrowserFamily.CHROME and r.detected_extensions]
    assert list(ext.user_ids) == want and list(ext.attribute_ids) == [f"e{j}" for j in range(6)]
    assert select(ds, "ext-stable").attribute_ids == ["e1", "e3", "e5"]
    log = select(ds, "log")
    assert list(log.user_ids) == [r.user_id for r in records if r.detected_logins]
    assert log.attribute_ids == ["l0", "l1", "l2", "l3"]
    assert select(ds, "csp-only").attribute_ids == ["l0", "l1"]
    both = select(ds, "both-and")
    assert list(both.user_ids) == [r.user_id for r in records
                             if r.browser_family is BrowserFamily.CHROME and r.detected_extensions and r.detected_logins]
    assert list(select(ds, "both-or").user_ids) == [r.user_id for r in records if r.detected_extensions or r.detected_logins]
    assert select(ds, "all") is ds
    with pytest.raises(DatasetError):
        select(ds, "nope")


def test_identity_projection_and_zero_columns():
    ds, _ = mixed_dataset(np.random.default_rng(2))
    assert project(ds, UserFilter(), AttributeFilter()) is ds
    with pytest.raises(DatasetError, match="zero attributes"):
        project(ds, None, AttributeFilter(kinds={Kind.EXTENSION}, detections={Detection.CSP_REPORT}))
    with pytest.raises(DatasetError, match="unknown"):
        project(ds, None, AttributeFilter(ids={"zzz"}))


user_filters = st.builds(
    UserFilter,
    browser_families=st.none() | st.frozensets(st.sampled_from(list(BrowserFamily)), min_size=1),
    js_enabled=st.none() | st.sampled_from([frozenset([True]), frozenset([False])]),
    min_extensions=st.integers(0, 2),
    min_logins=st.integers(0, 2),
    min_total=st.integers(0, 3),
)
attr_filters = st.builds(
    AttributeFilter,
    kinds=st.none() | st.just(frozenset([Kind.LOGIN])) | st.just(frozenset([Kind.EXTENSION, Kind.LOGIN])),
    detections=st.none() | st.just(frozenset(Detection)),
    stable_only=st.booleans(),
)


@given(user_filters, user_filters, attr_filters, attr_filters, st.integers(0, 1000))
def test_projection_commutes(u1, u2, a1, a2, seed):
    ds, _ = mixed_dataset(np.random.default_rng(seed))
    try:
        both = project(ds, u1 & u2, a1 & a2)
    except DatasetError:
        return
    seq1 = project(project(project(ds, u1, a1), u2, None), None, a2)
    seq2 = project(project(ds, None, a2), u2 & u1, a1)
    assert both == seq1 == seq2
    assert both.n <= ds.n and both.m <= ds.m


def test_snapshot_roundtrip(tmp_path):
    ds, _ = mixed_dataset(np.random.default_rng(3))
    save_snapshot(ds, tmp_path / "d.uqfp")
    back = load_snapshot(tmp_path / "d.uqfp", ds.catalog)
    assert back == ds
    data = dumps_snapshot(ds)
    assert data[:5] == b"UQFP1" and loads_snapshot(data, ds.catalog) == ds


def test_snapshot_errors():
    ds, _ = mixed_dataset(np.random.default_rng(4))
    data = dumps_snapshot(ds)
    other = AttributeCatalog(tuple(AttributeDescriptor(a.id, a.kind, a.detection) for a in ds.catalog))
    with pytest.raises(SnapshotError, match="digest"):
        loads_snapshot(data, other)
    with pytest.raises(SnapshotError, match="magic"):
        loads_snapshot(b"XXXXX" + data[5:], ds.catalog)
    with pytest.raises(SnapshotError):
        loads_snapshot(data[: len(data) - 10], ds.catalog)
    with pytest.raises(SnapshotError):
        loads_snapshot(data, ds.catalog.subset(range(3)))
