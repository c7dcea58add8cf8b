"""Snapshot matrices, grid metadata and their on-disk format.

A snapshot set is stored as a pair of files sharing a base path:

``<path>.f64``
    raw little-endian float64 values, column-major (one snapshot after
    another).
``<path>.json``
    sidecar with the keys ``n, m, times, lons, lats, levs, species, kind,
    samples_per_day``.

Rows enumerate grid cells longitude-fastest::

    row = lon_i + len(lons) * (lat_j + len(lats) * lev_k)
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CorruptFileError, ValidationError

UNIFORM_RTOL = 1e-9
SIDECAR_KEYS = ("n", "m", "times", "lons", "lats", "levs", "species", "kind",
                "samples_per_day")
KINDS = ("CONC", "TEND")


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Sample times in days, possibly non-uniform."""

    times: np.ndarray
    uniform_dt: Optional[float] = field(init=False, default=None)

    def __post_init__(self):
        t = _readonly(np.ravel(self.times))
        if t.size < 2:
            raise ValidationError("TimeGrid needs at least 2 samples")
        if not np.all(np.isfinite(t)):
            raise ValidationError("TimeGrid times must be finite")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValidationError("TimeGrid times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "uniform_dt", _uniform_step(t))

    @classmethod
    def uniform(cls, m, dt, t0=0.0):
        return cls(t0 + dt * np.arange(m))

    def __len__(self):
        return self.times.size

    def __getitem__(self, idx):
        return TimeGrid(self.times[idx])

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


def _uniform_step(t):
    dt = np.diff(t)
    step = (t[-1] - t[0]) / (t.size - 1)
    if np.all(np.abs(dt - step) <= UNIFORM_RTOL * step):
        return float(step)
    return None


@dataclass(frozen=True)
class SnapshotMatrix:
    """Real ``n x m`` data matrix, one column per sample time."""

    values: np.ndarray
    time: TimeGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError(f"values must be 2-D, got shape {v.shape}")
        if not isinstance(self.time, TimeGrid):
            object.__setattr__(self, "time", TimeGrid(self.time))
        if v.shape[1] != len(self.time):
            raise ValidationError(
                f"{v.shape[1]} columns but TimeGrid has {len(self.time)} samples")
        if not np.all(np.isfinite(v)):
            raise ValidationError("snapshot values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.time.times

    def columns(self, idx):
        """Sub-matrix of the selected columns, keeping their original times."""
        idx = np.asarray(idx)
        return SnapshotMatrix(self.values[:, idx], TimeGrid(self.times[idx]))

    def __eq__(self, other):
        return (isinstance(other, SnapshotMatrix) and self.time == other.time
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class GridMeta:
    lons: np.ndarray
    lats: np.ndarray
    levs: np.ndarray
    species: str = "UNKNOWN"
    kind: str = "CONC"
    samples_per_day: int = 72

    def __post_init__(self):
        lons = _readonly(np.ravel(self.lons))
        if lons.size == 0 or np.any(np.diff(lons) <= 0):
            raise ValidationError("lons must be non-empty, sorted ascending and unique")
        if np.any(lons < -180) or np.any(lons >= 180):
            raise ValidationError("lons must lie in [-180, 180)")
        lats = _readonly(np.ravel(self.lats))
        levs = _readonly(np.ravel(self.levs), dtype=np.int64)
        if lats.size == 0 or levs.size == 0:
            raise ValidationError("lats and levs must be non-empty")
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        spd = int(self.samples_per_day)
        if spd != self.samples_per_day or spd < 1:
            raise ValidationError("samples_per_day must be a positive integer")
        object.__setattr__(self, "lons", lons)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "levs", levs)
        object.__setattr__(self, "samples_per_day", spd)

    @property
    def n_cells(self):
        return self.lons.size * self.lats.size * self.levs.size

    def row_index(self, lon_i, lat_j, lev_k):
        return lon_i + self.lons.size * (lat_j + self.lats.size * lev_k)

    def row_lons(self):
        """Longitude of every data row, in row order."""
        return np.tile(self.lons, self.lats.size * self.levs.size)

    def __eq__(self, other):
        return (isinstance(other, GridMeta)
                and np.array_equal(self.lons, other.lons)
                and np.array_equal(self.lats, other.lats)
                and np.array_equal(self.levs, other.levs)
                and (self.species, self.kind, self.samples_per_day)
                == (other.species, other.kind, other.samples_per_day))

    __hash__ = None


@dataclass(frozen=True)
class SnapshotSet:
    meta: GridMeta
    data: SnapshotMatrix

    def __post_init__(self):
        if self.data.n != self.meta.n_cells:
            raise ValidationError(
                f"data has {self.data.n} rows, grid has {self.meta.n_cells} cells")

    def with_data(self, data):
        return SnapshotSet(self.meta, data)


def _paths(path):
    base = os.fspath(path)
    for ext in (".json", ".f64"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    return base + ".f64", base + ".json"


def save_snapshots(snapshots: SnapshotSet, path) -> None:
    """Write ``<path>.f64`` and ``<path>.json``.

    Values are validated before anything touches the disk, so an invalid
    set never leaves a partial file pair behind.
    """
    values = np.asarray(snapshots.data.values)
    if not np.all(np.isfinite(values)):
        raise ValidationError("refusing to save non-finite values")
    meta = snapshots.meta
    f64_path, json_path = _paths(path)
    sidecar = {
        "n": int(values.shape[0]),
        "m": int(values.shape[1]),
        "times": [float(t) for t in snapshots.data.times],
        "lons": [float(x) for x in meta.lons],
        "lats": [float(x) for x in meta.lats],
        "levs": [int(x) for x in meta.levs],
        "species": meta.species,
        "kind": meta.kind,
        "samples_per_day": int(meta.samples_per_day),
    }
    raw = np.asarray(values, dtype="<f8").tobytes(order="F")
    try:
        with open(f64_path, "wb") as fh:
            fh.write(raw)
        with open(json_path, "w") as fh:
            json.dump(sidecar, fh)
    except OSError as exc:
        raise OSError(f"cannot write snapshot pair at {path}: {exc}") from exc


def load_snapshots(path) -> SnapshotSet:
    f64_path, json_path = _paths(path)
    try:
        with open(json_path) as fh:
            sidecar = json.load(fh)
        with open(f64_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read snapshot pair at {path}: {exc}") from exc
    missing = [k for k in SIDECAR_KEYS if k not in sidecar]
    if missing:
        raise CorruptFileError(f"{json_path}: sidecar missing keys {missing}")
    n, m = int(sidecar["n"]), int(sidecar["m"])
    if n * m * 8 != len(raw):
        raise CorruptFileError(
            f"{f64_path}: expected {n * m * 8} bytes for {n}x{m}, found {len(raw)}")
    if len(sidecar["times"]) != m:
        raise CorruptFileError(f"{json_path}: {len(sidecar['times'])} times for m={m}")
    values = np.frombuffer(raw, dtype="<f8").reshape((n, m), order="F")
    meta = GridMeta(
        lons=sidecar["lons"], lats=sidecar["lats"], levs=sidecar["levs"],
        species=sidecar["species"], kind=sidecar["kind"],
        samples_per_day=sidecar["samples_per_day"])
    data = SnapshotMatrix(values.astype(float), TimeGrid(sidecar["times"]))
    return SnapshotSet(meta, data)


def slice(snapshots: SnapshotSet, lat_index: int, lev_index: int) -> SnapshotMatrix:
    """The ``len(lons) x m`` block at one latitude and level."""
    meta = snapshots.meta
    for axis, idx, size in (("lat", lat_index, meta.lats.size),
                            ("lev", lev_index, meta.levs.size)):
        if not 0 <= idx < size:
            raise IndexError(f"{axis} index {idx} out of range [0, {size})")
    start = meta.row_index(0, lat_index, lev_index)
    rows = snapshots.data.values[start:start + meta.lons.size]
    return SnapshotMatrix(rows, snapshots.data.time)
