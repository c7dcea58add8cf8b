import json
import struct
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from specdmd.errors import CorruptFileError, ValidationError
from specdmd.gridstore import (GridMeta, SnapshotMatrix, SnapshotSet, TimeGrid,
                               load_snapshots, save_snapshots, slice)


def _set(values, times=None, lons=None, lats=(0.0,), levs=(0,), spd=72):
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    if lons is None:
        lons = np.linspace(-180, 180, n // (len(lats) * len(levs)), endpoint=False)
    times = np.arange(m, dtype=float) if times is None else times
    meta = GridMeta(lons=lons, lats=lats, levs=levs, species="O3", kind="CONC",
                    samples_per_day=spd)
    return SnapshotSet(meta, SnapshotMatrix(values, TimeGrid(times)))


def test_column_major_little_endian_bytes(tmp_path):
    s = _set([[1, 2, 3], [4, 5, 6]], lons=[0.0, 90.0])
    save_snapshots(s, tmp_path / "x")
    raw = (tmp_path / "x.f64").read_bytes()
    assert len(raw) == 48
    assert raw == struct.pack("<6d", 1, 4, 2, 5, 3, 6)
    side = json.loads((tmp_path / "x.json").read_text())
    assert set(side) == {"n", "m", "times", "lons", "lats", "levs", "species",
                         "kind", "samples_per_day"}
    back = load_snapshots(tmp_path / "x")
    np.testing.assert_array_equal(back.data.values, [[1, 2, 3], [4, 5, 6]])


def test_nan_rejected_and_nothing_written(tmp_path):
    with pytest.raises(ValidationError):
        SnapshotMatrix([[1.0, np.nan]], TimeGrid([0.0, 1.0]))
    # the writer guards independently of the constructor
    fake = SimpleNamespace(data=SimpleNamespace(values=np.array([[1.0, np.nan]]),
                                                times=np.array([0.0, 1.0])),
                           meta=None)
    with pytest.raises(ValidationError):
        save_snapshots(fake, tmp_path / "bad")
    assert list(tmp_path.iterdir()) == []


def test_size_mismatch_is_corrupt(tmp_path):
    s = _set([[1, 2, 3]], lons=[0.0])
    save_snapshots(s, tmp_path / "x")
    (tmp_path / "x.f64").write_bytes(b"\0" * 32)
    with pytest.raises(CorruptFileError):
        load_snapshots(tmp_path / "x")


def test_nonincreasing_times_rejected(tmp_path):
    s = _set([[1, 2, 3]], lons=[0.0])
    save_snapshots(s, tmp_path / "x")
    side = json.loads((tmp_path / "x.json").read_text())
    side["times"] = [0, 0, 1]
    (tmp_path / "x.json").write_text(json.dumps(side))
    with pytest.raises(ValidationError):
        load_snapshots(tmp_path / "x")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="nope"):
        load_snapshots(tmp_path / "nope")


def test_slice_shapes_and_errors():
    lons = np.arange(-180, 180, 5.0)
    lats, levs = (-10.0, 0.0, 10.0), (0, 1)
    n = lons.size * len(lats) * len(levs)
    vals = np.arange(n * 2880, dtype=float).reshape(n, 2880)
    s = _set(vals, lons=lons, lats=lats, levs=levs)
    X = slice(s, 2, 1)
    assert X.shape == (72, 2880)
    with pytest.raises(IndexError, match="lat"):
        slice(s, 3, 0)
    with pytest.raises(IndexError, match="lev"):
        slice(s, 0, 2)


def test_single_cell_slice_is_identity():
    s = _set([[1.0, 2.0, 3.0]], lons=[0.0])
    np.testing.assert_array_equal(slice(s, 0, 0).values, s.data.values)


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 100), st.data())
def test_slice_is_row_projection(nl, na, nv, _seed, data):
    lons = np.linspace(-180, 180, nl, endpoint=False)
    lats = tuple(float(x) for x in range(na))
    levs = tuple(range(nv))
    n = nl * na * nv
    vals = np.random.default_rng(_seed).standard_normal((n, 4))
    s = _set(vals, lons=lons, lats=lats, levs=levs)
    j = data.draw(st.integers(0, na - 1))
    k = data.draw(st.integers(0, nv - 1))
    X = slice(s, j, k)
    for i in range(nl):
        np.testing.assert_array_equal(X.values[i], vals[i + nl * (j + na * k)])


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
       st.lists(st.floats(0.01, 10), min_size=6, max_size=6))
def test_round_trip_is_exact(tmp_path_factory, values, steps):
    n, m = values.shape
    times = np.cumsum(steps[:m]) - steps[0]
    s = _set(values, times=times, lons=np.linspace(-180, 180, n, endpoint=False))
    path = tmp_path_factory.mktemp("rt") / "s"
    save_snapshots(s, path)
    back = load_snapshots(path)
    assert back.data.values.tobytes() == s.data.values.tobytes()
    assert back.data.time == s.data.time
    assert back.meta == s.meta
