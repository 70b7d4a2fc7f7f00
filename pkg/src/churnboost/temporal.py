"""Modeling periods and the two date-to-feature encodings.

Dates are carried internally as signed day counts from 1970-01-01 (plain
ints, or int64 numpy arrays for columns). The yyyymmdd integer form is the
on-disk / "absolute" representation.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

import numpy as np

_EPOCH = _dt.date(1970, 1, 1).toordinal()


def to_days(year: int, month: int, day: int) -> int:
    return _dt.date(year, month, day).toordinal() - _EPOCH


def from_days(days: int) -> _dt.date:
    return _dt.date.fromordinal(int(days) + _EPOCH)


def parse_ordinal(value: int) -> int:
    """yyyymmdd integer -> day count. Raises ValueError on an invalid date."""
    value = int(value)
    if value < 0:
        raise ValueError(f"invalid yyyymmdd date: {value}")
    return to_days(value // 10000, value // 100 % 100, value % 100)


def absolute_ordinal(days: int) -> int:
    """Day count -> yyyymmdd integer (e.g. 2017-01-01 -> 20170101)."""
    d = from_days(days)
    return d.year * 10000 + d.month * 100 + d.day


def relative_days(event: int, anchor: int) -> int:
    """Whole days from ``event`` to ``anchor``; positive when the event is earlier."""
    return int(anchor) - int(event)


def parse_ordinal_array(values) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`parse_ordinal`.

    Returns ``(days, valid)``; ``days`` is arbitrary where ``valid`` is False.
    """
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    iv = np.where(finite, v, 0).astype(np.int64)
    integral = finite & (iv == v)
    year, month, day = iv // 10000, iv // 100 % 100, iv % 100
    valid = integral & (year >= 1) & (year <= 9999) & (month >= 1) & (month <= 12) & (day >= 1)
    ym = np.where(valid, (year - 1970) * 12 + (month - 1), 0)
    first = ym.astype("datetime64[M]").astype("datetime64[D]").astype(np.int64)
    nxt = (ym + 1).astype("datetime64[M]").astype("datetime64[D]").astype(np.int64)
    valid &= day <= (nxt - first)
    days = np.where(valid, first + day - 1, 0)
    return days, valid


def ordinal_array(days) -> np.ndarray:
    """Vectorised :func:`absolute_ordinal`."""
    dt = np.asarray(days, dtype=np.int64).astype("datetime64[D]")
    months = dt.astype("datetime64[M]")
    year = months.astype("datetime64[Y]").astype(np.int64) + 1970
    month = months.astype(np.int64) % 12 + 1
    day = (dt - months.astype("datetime64[D]")).astype(np.int64) + 1
    return year * 10000 + month * 100 + day


def month_start(days: int, months_back: int = 0) -> int:
    """First day of the calendar month ``months_back`` months before the one containing ``days``."""
    d = from_days(days)
    index = d.year * 12 + (d.month - 1) - months_back
    return to_days(index // 12, index % 12 + 1, 1)


def month_end(days: int, months_back: int = 0) -> int:
    return month_start(days, months_back - 1) - 1


@dataclass(frozen=True)
class TimePeriod:
    """Inclusive date range with the anchor that relative features are measured from.

    ``cutoff`` is the last day whose events features may see; it defaults to
    the anchor and may be moved earlier (e.g. before ``start``) to keep
    in-period renewals out of the features.
    """

    start: int
    end: int
    anchor: int
    cutoff: int | None = None

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("period start is after its end")
        if not self.start <= self.anchor <= self.end:
            raise ValueError("period anchor must lie inside [start, end]")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", self.anchor)
        elif self.cutoff > self.anchor:
            raise ValueError("period cutoff cannot be after the anchor")

    @classmethod
    def from_ordinals(cls, start: int, end: int, anchor: int | None = None, cutoff: int | None = None) -> "TimePeriod":
        s, e = parse_ordinal(start), parse_ordinal(end)
        a = e if anchor is None else parse_ordinal(anchor)
        return cls(s, e, a, None if cutoff is None else parse_ordinal(cutoff))

    def contains(self, days: int) -> bool:
        return self.start <= days <= self.end

    def overlaps(self, other: "TimePeriod") -> bool:
        return self.start <= other.end and other.start <= self.end

    def with_cutoff(self, cutoff: int | None) -> "TimePeriod":
        return TimePeriod(self.start, self.end, self.anchor, cutoff)

    def __str__(self):
        text = f"[{absolute_ordinal(self.start)}..{absolute_ordinal(self.end)} @ {absolute_ordinal(self.anchor)}"
        if self.cutoff != self.anchor:
            text += f", cutoff {absolute_ordinal(self.cutoff)}"
        return text + "]"


PERIOD_NAMES = ("train", "cv", "test")


def default_periods() -> dict[str, TimePeriod]:
    """January / February / March 2017 splits, each anchored on its last day.

    The anchor sits at the period end: a registration on 2017-01-25 is 6 days
    old at the January anchor and 34 days old at the February one.
    """
    return {
        "train": TimePeriod.from_ordinals(20170101, 20170131),
        "cv": TimePeriod.from_ordinals(20170201, 20170228),
        "test": TimePeriod.from_ordinals(20170301, 20170331),
    }
