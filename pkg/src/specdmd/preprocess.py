"""Local-time alignment and daytime isolation.

Chemistry driven by photolysis appears in UTC as a wave travelling from east
to west: a cell at longitude ``L`` sees local noon ``L/360`` day before the
prime meridian does.  Delaying each row by its local-time offset makes the
rows coherent, which collapses the SVD rank of the data.

Rotation is circular.  The series wraps at its ends, so the first and last
``shift`` samples of each row come from opposite ends of the record.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gridstore import SnapshotMatrix, TimeGrid

DEFAULT_EPS = 1e-3


@dataclass(frozen=True)
class ShiftPlan:
    shifts: np.ndarray
    samples_per_day: int

    def __post_init__(self):
        s = np.array(self.shifts, dtype=np.int64).ravel()
        if np.any(s < 0) or np.any(s >= self.samples_per_day):
            raise ValidationError("shifts must lie in [0, samples_per_day)")
        s.setflags(write=False)
        object.__setattr__(self, "shifts", s)

    @classmethod
    def from_lons(cls, lons, samples_per_day):
        # np.rint rounds half to even
        raw = np.rint(np.asarray(lons, dtype=float) / 360.0 * samples_per_day)
        return cls(np.mod(raw.astype(np.int64), samples_per_day), samples_per_day)

    def to_json(self):
        return {"shifts": [int(s) for s in self.shifts],
                "samples_per_day": int(self.samples_per_day)}

    @classmethod
    def from_json(cls, d):
        return cls(d["shifts"], int(d["samples_per_day"]))


@dataclass(frozen=True)
class DayMask:
    keep: np.ndarray
    kept_times: TimeGrid


def _rotate_rows(values, shifts, sign):
    out = np.empty_like(values)
    for i, s in enumerate(shifts):
        out[i] = np.roll(values[i], sign * int(s))
    return out


def shift_local_time(X: SnapshotMatrix, lons, samples_per_day: int):
    """Align every row to prime-meridian local time.

    Row ``i`` is delayed (rotated toward later columns) by
    ``round(lons[i] / 360 * samples_per_day) mod samples_per_day`` samples.

    Returns
    -------
    shifted : SnapshotMatrix
        Same TimeGrid as ``X``.
    plan : ShiftPlan
        Pass to :func:`unshift_local_time` to undo the alignment.
    """
    lons = np.ravel(np.asarray(lons, dtype=float))
    if lons.size != X.n:
        raise ValidationError(f"{X.n} rows but {lons.size} longitudes")
    if X.m < samples_per_day:
        raise ValidationError(
            f"need at least one day of samples ({samples_per_day}), got {X.m}")
    plan = ShiftPlan.from_lons(lons, samples_per_day)
    return SnapshotMatrix(_rotate_rows(X.values, plan.shifts, +1), X.time), plan


def unshift_local_time(X: SnapshotMatrix, plan: ShiftPlan) -> SnapshotMatrix:
    if plan.shifts.size != X.n:
        raise ValidationError(f"plan covers {plan.shifts.size} rows, data has {X.n}")
    return SnapshotMatrix(_rotate_rows(X.values, plan.shifts, -1), X.time)


def daytime_mask_threshold(X: SnapshotMatrix, eps: float = DEFAULT_EPS):
    if not 0 < eps < 1:
        raise ValidationError("threshold eps must lie in (0, 1)")
    col_max = np.max(np.abs(X.values), axis=0)
    return col_max > eps * col_max.max()


def daytime_mask_window(m: int, samples_per_day: int, start: int, end: int):
    if not 0 <= start < end <= samples_per_day:
        raise ValidationError(
            f"window [{start}, {end}) must satisfy 0 <= start < end <= {samples_per_day}")
    phase = np.arange(m) % samples_per_day
    return (phase >= start) & (phase < end)


def isolate_daytime(X: SnapshotMatrix, mode: str = "threshold", *, eps: float = DEFAULT_EPS,
                    window=None, samples_per_day=None):
    """Keep only the daytime columns of ``X``.

    ``mode="threshold"`` keeps columns whose peak magnitude exceeds ``eps``
    times the global peak.  ``mode="window"`` keeps the within-day sample
    indices ``window = (start, end)``, counted from column 0, and needs
    ``samples_per_day``.

    The result keeps the original timestamps, so its TimeGrid is in
    general non-uniform.
    """
    if mode == "threshold":
        keep = daytime_mask_threshold(X, eps)
    elif mode == "window":
        if window is None or samples_per_day is None:
            raise ValidationError("window mode needs window=(start, end) and samples_per_day")
        keep = daytime_mask_window(X.m, int(samples_per_day), int(window[0]), int(window[1]))
    else:
        raise ValidationError(f"unknown daytime mode {mode!r}")
    if keep.sum() < 2:
        raise ValidationError(f"daytime isolation kept {int(keep.sum())} columns")
    kept = X.columns(np.flatnonzero(keep))
    keep.setflags(write=False)
    return kept, DayMask(keep, kept.time)
