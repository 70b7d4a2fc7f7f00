import datetime as dt
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from churnboost.temporal import (
    TimePeriod, absolute_ordinal, default_periods, from_days, month_end, month_start, ordinal_array,
    parse_ordinal, parse_ordinal_array, relative_days, to_days,
)

from oracles import random_date

days = st.integers(min_value=to_days(1900, 1, 1), max_value=to_days(2099, 12, 31))


def test_default_periods():
    p = default_periods()
    assert absolute_ordinal(p["train"].end) == 20170131
    assert (absolute_ordinal(p["cv"].start), absolute_ordinal(p["cv"].end)) == (20170201, 20170228)
    assert (absolute_ordinal(p["test"].start), absolute_ordinal(p["test"].end)) == (20170301, 20170331)
    assert p["train"].anchor == to_days(2017, 1, 31)
    assert all(x.cutoff == x.anchor for x in p.values())


def test_worked_example(january, february):
    reg, login = to_days(2017, 1, 25), to_days(2017, 1, 30)
    assert (relative_days(reg, january.anchor), relative_days(login, january.anchor)) == (6, 1)
    assert (relative_days(reg, february.anchor), relative_days(login, february.anchor)) == (34, 29)


def test_relative_identity():
    assert relative_days(17000, 17000) == 0


def test_absolute_ordinal_examples():
    assert absolute_ordinal(to_days(2017, 1, 1)) == 20170101
    assert absolute_ordinal(to_days(1999, 12, 31)) == 19991231


def test_round_trip_10000_dates():
    rnd = random.Random(4)
    for _ in range(10_000):
        d = random_date(rnd)
        n = (d - dt.date(1970, 1, 1)).days
        ordinal = absolute_ordinal(n)
        assert ordinal == int(d.strftime("%Y%m%d"))
        assert parse_ordinal(ordinal) == n


@pytest.mark.parametrize("bad", [20170230, 20171301, 20170100, 20170229, -1])
def test_parse_rejects_invalid(bad):
    with pytest.raises(ValueError):
        parse_ordinal(bad)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    n = rng.integers(to_days(1900, 1, 1), to_days(2099, 12, 31), size=2000)
    ords = ordinal_array(n)
    assert ords.tolist() == [absolute_ordinal(int(v)) for v in n]
    back, ok = parse_ordinal_array(ords)
    assert ok.all() and np.array_equal(back, n)
    _, ok = parse_ordinal_array([20170230, 20160229, 20170229, np.nan, 2017.5])
    assert ok.tolist() == [False, True, False, False, False]


@given(days, days, st.integers(-5000, 5000))
def test_shift_equivariance(e, a, k):
    assert relative_days(e + k, a + k) == relative_days(e, a)


@given(days, days)
def test_ordinal_order_matches_day_order(a, b):
    assert (absolute_ordinal(a) < absolute_ordinal(b)) == (a < b)


@given(days)
def test_month_bounds(d):
    lo, hi = month_start(d), month_end(d)
    assert lo <= d <= hi
    assert from_days(lo).day == 1 and from_days(hi + 1).day == 1
    assert month_end(d, 1) == lo - 1


def test_period_validation():
    with pytest.raises(ValueError):
        TimePeriod(10, 5, 5)
    with pytest.raises(ValueError):
        TimePeriod(0, 10, 11)
    with pytest.raises(ValueError):
        TimePeriod(0, 10, 10, cutoff=11)
    p = TimePeriod(0, 10, 10, cutoff=-1)
    assert p.cutoff == -1 and p.with_cutoff(None).cutoff == 10
