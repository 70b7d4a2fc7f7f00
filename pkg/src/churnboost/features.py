"""Declarative feature specs evaluated against one modeling period.

A spec names a source, a signal on that source, a window, and an
aggregation. Higher-order specs combine two other specs by difference or
ratio. Windows are measured back from the period cutoff (the anchor unless
tightened) and may never reach past it, which keeps a period's features blind
to later events. Relative date features are day offsets from the anchor.

Windows:
    ``all``         every event up to the cutoff
    ``last:N``      the N days ending on the cutoff
    ``cal:K``       calendar month K back from the cutoff's month (0 = the
                    cutoff's own month, cut at the cutoff)
    ``days:A:B``    cutoff-A .. cutoff-B, inclusive

Aggregations: sum, mean, max, min, std (population), count (events with a
nonzero signal), last, days_since_last (days from the latest event with a
nonzero signal to the anchor). Empty windows give 0 for sum/count and NaN
otherwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, LeakageError
from .temporal import TimePeriod, from_days, month_end, month_start, ordinal_array

MISSING = np.nan
SIGNIFICANT_SECONDS = 1800.0

SOURCES = ("logs", "transactions", "members", "meta")
AGGREGATIONS = ("sum", "mean", "max", "min", "std", "count", "last", "days_since_last")
TEMPORAL_METHODS = ("relative", "absolute", "none")
TRANSFORMS = ("diff", "ratio")

EVENT_DATE = {"logs": "date", "transactions": "transaction_date"}


def _first_of_day(f: pd.DataFrame) -> np.ndarray:
    u, d = f["user_id"].to_numpy(), f["date"].to_numpy()
    first = np.ones(len(f), dtype=bool)
    if len(f) > 1:
        first[1:] = (u[1:] != u[:-1]) | (d[1:] != d[:-1])
    return first.astype(np.float64)


def _gender_code(f: pd.DataFrame) -> np.ndarray:
    g = f["gender"].to_numpy()
    return np.where(g == "male", 1.0, np.where(g == "female", 0.0, np.nan))


# signal name -> (extractor, kind); kind "date" and "year" are date-valued.
def _col(name):
    return lambda f: f[name].to_numpy(dtype=np.float64)


SIGNALS = {
    "logs": {
        "num_unique_songs": (_col("num_unique_songs"), "value"),
        "seconds_played": (_col("seconds_played"), "value"),
        "login_count": (_col("login_count"), "value"),
        # one per distinct (user, day): counts logins as active days
        "active": (_first_of_day, "value"),
        "significant": (lambda f: (f["seconds_played"].to_numpy() >= SIGNIFICANT_SECONDS).astype(np.float64), "value"),
        "date": (_col("date"), "date"),
    },
    "transactions": {
        "payment_plan_days": (_col("payment_plan_days"), "value"),
        "plan_list_price": (_col("plan_list_price"), "value"),
        "actual_amount_paid": (_col("actual_amount_paid"), "value"),
        "is_auto_renew": (_col("is_auto_renew"), "value"),
        "is_cancel": (_col("is_cancel"), "value"),
        "transaction": (lambda f: np.ones(len(f)), "value"),
        "discount": (lambda f: (f["plan_list_price"] - f["actual_amount_paid"]).to_numpy(dtype=np.float64), "value"),
        "paid_no_cancel": (
            lambda f: ((f["payment_plan_days"].to_numpy() > 1) & (f["is_cancel"].to_numpy() == 0)).astype(np.float64),
            "value",
        ),
        "transaction_date": (_col("transaction_date"), "date"),
        "membership_expire_date": (_col("membership_expire_date"), "date"),
    },
    "members": {
        "registration_date": (_col("registration_date"), "date"),
        "birth_year": (_col("birth_year"), "year"),
        "gender": (_gender_code, "value"),
        "city": (_col("city"), "value"),
        "registered_via": (_col("registered_via"), "value"),
    },
}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    source: str
    signal: str = "-"
    window: str = "all"
    aggregation: str = "last"
    temporal_method: str = "none"
    transform: tuple[str, str, str] | None = None

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError(f"feature {self.name!r}: " + "; ".join(problems))

    @property
    def date_valued(self) -> bool:
        if self.source == "meta":
            return False
        if self.aggregation == "days_since_last":
            return True
        return self.aggregation in ("last", "max", "min") and SIGNALS[self.source][self.signal][1] != "value"

    @property
    def date_element(self) -> tuple[str, str] | None:
        """The (source, date column) whose encoding this spec commits to."""
        if not self.date_valued:
            return None
        if self.aggregation == "days_since_last":
            return (self.source, EVENT_DATE[self.source])
        return (self.source, self.signal)

    @property
    def depends_on(self) -> tuple[str, ...]:
        return self.transform[1:] if self.transform else ()

    def problems(self) -> list[str]:
        out = []
        if not self.name or any(c in self.name for c in "|,() \t"):
            out.append("name must be non-empty without separators")
        if self.source not in SOURCES:
            return out + [f"unknown source {self.source!r}"]
        if self.temporal_method not in TEMPORAL_METHODS:
            out.append(f"unknown temporal_method {self.temporal_method!r}")
        if self.source == "meta":
            if not self.transform or self.transform[0] not in TRANSFORMS or len(self.transform) != 3:
                out.append("meta specs need transform diff(a,b) or ratio(a,b)")
            if self.temporal_method != "none":
                out.append("meta specs take no temporal_method")
            return out
        if self.transform:
            out.append("only meta specs carry a transform")
        if self.signal not in SIGNALS[self.source]:
            return out + [f"unknown signal {self.signal!r} for {self.source}"]
        if self.aggregation not in AGGREGATIONS:
            return out + [f"unknown aggregation {self.aggregation!r}"]
        if self.source == "members":
            if self.aggregation != "last" or self.window != "all":
                out.append("members specs use aggregation 'last' over window 'all'")
        elif self.aggregation == "days_since_last" and self.temporal_method != "relative":
            out.append("days_since_last is a relative feature")
        try:
            parse_window(self.window)
        except ValueError as exc:
            out.append(str(exc))
        if self.date_valued and self.temporal_method == "none":
            out.append("date-valued signals must use temporal_method relative or absolute")
        if not self.date_valued and self.temporal_method != "none" and self.aggregation != "days_since_last":
            out.append("temporal_method applies only to date-valued signals")
        return out

    def to_line(self) -> str:
        tr = f"{self.transform[0]}({self.transform[1]},{self.transform[2]})" if self.transform else "-"
        return " | ".join([self.name, self.source, self.signal, self.window, self.aggregation, self.temporal_method, tr])

    @classmethod
    def from_line(cls, line: str) -> "FeatureSpec":
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 7:
            raise ValueError(f"expected 7 '|'-separated fields, got {len(parts)}: {line!r}")
        name, source, signal, window, agg, method, tr = parts
        transform = None
        if tr != "-":
            op, _, rest = tr.partition("(")
            args = rest.rstrip(")").split(",")
            if not rest.endswith(")") or len(args) != 2:
                raise ValueError(f"bad transform {tr!r}")
            transform = (op.strip(), args[0].strip(), args[1].strip())
        return cls(name, source, signal, window, agg, method, transform)


def parse_window(window: str) -> tuple:
    kind, *args = window.split(":")
    try:
        nums = [int(a) for a in args]
    except ValueError:
        raise ValueError(f"bad window {window!r}") from None
    if kind == "all" and not nums:
        return ("all",)
    if kind == "last" and len(nums) == 1 and nums[0] >= 1:
        return ("last", nums[0])
    if kind == "cal" and len(nums) == 1 and nums[0] >= 0:
        return ("cal", nums[0])
    if kind == "days" and len(nums) == 2 and nums[0] >= nums[1]:
        return ("days", nums[0], nums[1])
    raise ValueError(f"bad window {window!r}")


def resolve_window(window: str, period: TimePeriod) -> tuple[float, int]:
    """Concrete inclusive [lo, hi] day range, measured back from the period cutoff.

    Raises LeakageError for a window ending after the cutoff (which is at
    most the anchor).
    """
    w = parse_window(window)
    a = period.cutoff
    if w[0] == "all":
        lo, hi = -math.inf, a
    elif w[0] == "last":
        lo, hi = a - w[1] + 1, a
    elif w[0] == "cal":
        lo, hi = month_start(a, w[1]), min(month_end(a, w[1]), a)
    else:
        lo, hi = a - w[1], a - w[2]
    if hi > a:
        raise LeakageError(f"window {window!r} ends {hi - a} days after the feature cutoff {from_days(a)}")
    return lo, hi


def trend(recent, prior, mode: str):
    """Difference or guarded ratio of two aggregates; missing operands propagate."""
    r = np.asarray(recent, dtype=np.float64)
    p = np.asarray(prior, dtype=np.float64)
    if mode == "diff":
        out = r - p
    elif mode == "ratio":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(p == 0, np.nan, r / np.where(p == 0, 1.0, p))
    else:
        raise ValueError(f"unknown trend mode {mode!r}")
    out = np.where(np.isfinite(out), out, np.nan)
    return float(out) if out.ndim == 0 else out


class _SourceView:
    """A source frame restricted to a population, with row -> population codes."""

    def __init__(self, frame: pd.DataFrame, population: pd.Index):
        codes = population.get_indexer(frame["user_id"])
        keep = codes >= 0
        self.frame = frame[keep].reset_index(drop=True) if not keep.all() else frame.reset_index(drop=True)
        self.codes = codes[keep]
        self.n = len(population)
        self._signals: dict[str, np.ndarray] = {}

    def signal(self, source: str, name: str) -> np.ndarray:
        if name not in self._signals:
            self._signals[name] = SIGNALS[source][name][0](self.frame)
        return self._signals[name]


def _encode_dates(values: np.ndarray, spec: FeatureSpec, period: TimePeriod) -> np.ndarray:
    kind = SIGNALS[spec.source][spec.signal][1] if spec.aggregation != "days_since_last" else "date"
    ok = np.isfinite(values)
    out = np.full(values.shape, np.nan)
    if kind == "year":
        anchor_year = from_days(period.anchor).year
        out[ok] = anchor_year - values[ok] if spec.temporal_method == "relative" else values[ok]
    elif spec.temporal_method == "relative":
        out[ok] = period.anchor - values[ok]
    else:
        out[ok] = ordinal_array(values[ok].astype(np.int64))
    return out


def _aggregate(view: _SourceView, spec: FeatureSpec, period: TimePeriod) -> np.ndarray:
    n = view.n
    if spec.source == "members":
        out = np.full(n, np.nan)
        out[view.codes] = view.signal("members", spec.signal)
        return _encode_dates(out, spec, period) if spec.date_valued else out

    lo, hi = resolve_window(spec.window, period)
    dates = view.frame[EVENT_DATE[spec.source]].to_numpy()
    mask = (dates >= lo) & (dates <= hi)
    codes = view.codes[mask]
    v = view.signal(spec.source, spec.signal)[mask]
    agg = spec.aggregation

    if agg in ("count", "days_since_last"):
        hit = np.nan_to_num(v) != 0
        if agg == "count":
            return np.bincount(codes[hit], minlength=n).astype(np.float64)
        latest = np.full(n, -np.inf)
        np.maximum.at(latest, codes[hit], dates[mask][hit].astype(np.float64))
        latest[np.isinf(latest)] = np.nan
        return _encode_dates(latest, spec, period)

    finite = np.isfinite(v)
    codes_f, v_f = codes[finite], v[finite]
    counts = np.bincount(codes_f, minlength=n)
    if agg == "sum":
        return np.bincount(codes_f, weights=v_f, minlength=n)
    if agg in ("mean", "std"):
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.bincount(codes_f, weights=v_f, minlength=n) / counts
            if agg == "mean":
                return np.where(counts > 0, mean, np.nan)
            dev = (v_f - mean[codes_f]) ** 2
            return np.where(counts > 0, np.sqrt(np.bincount(codes_f, weights=dev, minlength=n) / counts), np.nan)
    if agg in ("max", "min"):
        fill = -np.inf if agg == "max" else np.inf
        out = np.full(n, fill)
        (np.maximum if agg == "max" else np.minimum).at(out, codes_f, v_f)
        out[np.isinf(out)] = np.nan
        return _encode_dates(out, spec, period) if spec.date_valued else out
    # last: rows are date-sorted within a user, so the highest row index wins
    last_row = np.full(n, -1)
    np.maximum.at(last_row, codes, np.arange(len(codes)))
    out = np.where(last_row >= 0, v[np.maximum(last_row, 0)], np.nan)
    return _encode_dates(out, spec, period) if spec.date_valued else out


def window_aggregate(events: pd.DataFrame, spec: FeatureSpec, period: TimePeriod, population=None) -> pd.Series:
    """One spec over one source, as a Series indexed by user id.

    ``population`` defaults to every user present in ``events``.
    """
    if spec.source == "meta":
        raise ValueError("meta specs are evaluated by build_features")
    if population is None:
        population = pd.unique(events["user_id"])
    index = pd.Index(np.asarray(population, dtype=object))
    return pd.Series(_aggregate(_SourceView(events, index), spec, period), index=index, name=spec.name)


@dataclass
class FeatureMatrix:
    user_ids: np.ndarray
    feature_names: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.user_ids = np.asarray(self.user_ids, dtype=object)
        self.feature_names = list(self.feature_names)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.user_ids), len(self.feature_names))
        if np.isinf(self.values).any():
            raise DataError("feature matrix contains infinities")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")

    @property
    def shape(self):
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def select(self, names) -> "FeatureMatrix":
        names = list(names)
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError(f"features not in matrix: {missing}")
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(self.user_ids, names, self.values[:, idx])

    def with_column(self, name: str, values) -> "FeatureMatrix":
        col = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        return FeatureMatrix(self.user_ids, self.feature_names + [name], np.hstack([self.values, col]))

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            np.array_equal(self.user_ids, other.user_ids)
            and self.feature_names == other.feature_names
            and self.values.tobytes() == other.values.tobytes()
        )

    def to_csv(self, path) -> None:
        frame = pd.DataFrame(self.values, columns=self.feature_names)
        frame.insert(0, "user_id", self.user_ids)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        frame = pd.read_csv(path, dtype={"user_id": str}, keep_default_na=False, na_values=[""],
                            float_precision="round_trip")
        if frame.columns[0] != "user_id":
            raise DataError(f"{path}: first column must be user_id")
        return cls(frame["user_id"].to_numpy(dtype=object), list(frame.columns[1:]), frame.iloc[:, 1:].to_numpy(np.float64))

    # Binary cache: magic line, one JSON header line, then row-major little-endian float64.
    _MAGIC = b"CHURNBOOST-MATRIX 1\n"

    def save(self, path) -> None:
        header = {"rows": len(self.user_ids), "feature_names": self.feature_names, "user_ids": self.user_ids.tolist()}
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "FeatureMatrix":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"matrix file not found: {path}")
        with open(path, "rb") as fh:
            if fh.readline() != cls._MAGIC:
                if path.suffix == ".csv":
                    return cls.from_csv(path)
                raise DataError(f"{path}: not a feature matrix file")
            header = json.loads(fh.readline())
            values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
        return cls(header["user_ids"], header["feature_names"], values.reshape(header["rows"], len(header["feature_names"])))


def validate_catalog(catalog) -> None:
    names = [s.name for s in catalog]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValueError(f"duplicate feature names: {dupes}")
    known = set(names)
    for spec in catalog:
        for dep in spec.depends_on:
            if dep not in known:
                raise ValueError(f"feature {spec.name!r} depends on unknown feature {dep!r}")
    methods: dict[tuple[str, str], tuple[str, str]] = {}
    for spec in catalog:
        element = spec.date_element
        if element is None:
            continue
        prev = methods.setdefault(element, (spec.temporal_method, spec.name))
        if prev[0] != spec.temporal_method:
            raise ValueError(
                f"{element[0]}.{element[1]} is encoded {prev[0]} by {prev[1]!r} and "
                f"{spec.temporal_method} by {spec.name!r}; pick one method per date field"
            )


def _evaluation_order(catalog) -> list[FeatureSpec]:
    by_name = {s.name: s for s in catalog}
    order, state = [], {}

    def visit(spec):
        mark = state.get(spec.name)
        if mark == "done":
            return
        if mark == "active":
            raise ValueError(f"feature dependency cycle through {spec.name!r}")
        state[spec.name] = "active"
        for dep in spec.depends_on:
            visit(by_name[dep])
        state[spec.name] = "done"
        order.append(spec)

    for spec in catalog:
        visit(spec)
    return order


def build_features(dataset, catalog, period: TimePeriod, population) -> FeatureMatrix:
    """Evaluate ``catalog`` for ``population`` (row order kept) as of ``period``."""
    catalog = list(catalog)
    validate_catalog(catalog)
    for spec in catalog:
        if spec.source in EVENT_DATE:
            resolve_window(spec.window, period)
    index = pd.Index(np.asarray(population, dtype=object))
    if index.has_duplicates:
        raise DataError("population has duplicate user ids")
    views = {}
    columns: dict[str, np.ndarray] = {}
    for spec in _evaluation_order(catalog):
        if spec.source == "meta":
            op, a, b = spec.transform
            columns[spec.name] = trend(columns[a], columns[b], op)
            continue
        if spec.source not in views:
            views[spec.source] = _SourceView(getattr(dataset, spec.source), index)
        columns[spec.name] = _aggregate(views[spec.source], spec, period)
    names = [s.name for s in catalog]
    values = np.column_stack([columns[n] for n in names]) if names else np.zeros((len(index), 0))
    return FeatureMatrix(index.to_numpy(dtype=object), names, values)


def _spec(name, source, signal, window="all", agg="last", method="none"):
    return FeatureSpec(name, source, signal, window, agg, method)


def _meta(name, op, a, b):
    return FeatureSpec(name, "meta", transform=(op, a, b))


def builtin_catalog() -> list[FeatureSpec]:
    """Representative catalog spanning the transaction, activity, recency and member families.

    Formulas behind the abbreviated names:
      ul_lastmo_last2wk_numunq_avg_diff  mean unique songs over the last 14 days
                                         minus the mean over the prior calendar month
      ul_mo1_mo2_trend                   seconds in prior month / prior-prior month
      canc_per_payment_days              cancellations / total paid plan days
      last_trx_gt1_no_cancel             last transaction is a >1 day plan and not a cancel
      login_days_per_plan_day            days since last login / current plan length
    """
    return [
        # transactions
        _spec("payment_plan_days", "transactions", "payment_plan_days"),
        _spec("plan_list_price", "transactions", "plan_list_price"),
        _spec("actual_amount_paid", "transactions", "actual_amount_paid"),
        _spec("is_auto_renew", "transactions", "is_auto_renew"),
        _spec("last_trx_gt1_no_cancel", "transactions", "paid_no_cancel"),
        _spec("trx_count_all", "transactions", "transaction", agg="count"),
        _spec("total_cancels", "transactions", "is_cancel", agg="sum"),
        _spec("prevmo_has_cancel", "transactions", "is_cancel", "cal:1", "max"),
        _spec("total_payment_days", "transactions", "payment_plan_days", agg="sum"),
        _meta("canc_per_payment_days", "ratio", "total_cancels", "total_payment_days"),
        _spec("days_since_last_trx", "transactions", "transaction", agg="days_since_last", method="relative"),
        _spec("days_since_cancel", "transactions", "is_cancel", agg="days_since_last", method="relative"),
        _spec("days_since_expire", "transactions", "membership_expire_date", method="relative"),
        _spec("mean_discount", "transactions", "discount", agg="mean"),
        _spec("auto_renew_share", "transactions", "is_auto_renew", agg="mean"),
        # user activity logs
        _spec("ul_all_numunq_sum", "logs", "num_unique_songs", agg="sum"),
        _spec("ul_all_count", "logs", "active", agg="count"),
        _spec("ul_all_secs_sum", "logs", "seconds_played", agg="sum"),
        _spec("ul_last2wk_numunq_avg", "logs", "num_unique_songs", "last:14", "mean"),
        _spec("ul_lastmo_numunq_avg", "logs", "num_unique_songs", "cal:1", "mean"),
        _meta("ul_lastmo_last2wk_numunq_avg_diff", "diff", "ul_last2wk_numunq_avg", "ul_lastmo_numunq_avg"),
        _spec("ul_mo0_secs_sum", "logs", "seconds_played", "cal:0", "sum"),
        _spec("ul_lastprevmo_secs_sum", "logs", "seconds_played", "cal:1", "sum"),
        _spec("ul_mo2_secs_sum", "logs", "seconds_played", "cal:2", "sum"),
        _meta("ul_mo1_mo2_trend", "ratio", "ul_lastprevmo_secs_sum", "ul_mo2_secs_sum"),
        _meta("ul_mo0_mo1_trend", "ratio", "ul_mo0_secs_sum", "ul_lastprevmo_secs_sum"),
        _spec("std_dev_numunq_prev_mo", "logs", "num_unique_songs", "cal:1", "std"),
        _spec("ul_last7_active_days", "logs", "active", "last:7", "count"),
        _spec("ul_last30_active_days", "logs", "active", "last:30", "count"),
        _spec("ul_last30_secs_max", "logs", "seconds_played", "last:30", "max"),
        _spec("ul_last30_logins", "logs", "login_count", "last:30", "sum"),
        _spec("ul_last14_secs_sum", "logs", "seconds_played", "last:14", "sum"),
        _spec("ul_prior14_secs_sum", "logs", "seconds_played", "days:27:14", "sum"),
        _meta("ul_last14_prior14_secs_diff", "diff", "ul_last14_secs_sum", "ul_prior14_secs_sum"),
        _spec("last_ul_days", "logs", "active", agg="days_since_last", method="relative"),
        _spec("days_since_significant", "logs", "significant", agg="days_since_last", method="relative"),
        _meta("login_days_per_plan_day", "ratio", "last_ul_days", "payment_plan_days"),
        # members
        _spec("registration_ordinal", "members", "registration_date", method="absolute"),
        _spec("birth_year", "members", "birth_year", method="absolute"),
        _spec("gender", "members", "gender"),
        _spec("city", "members", "city"),
        _spec("registered_via", "members", "registered_via"),
    ]


def save_catalog(catalog, path) -> None:
    lines = ["# name | source | signal | window | aggregation | temporal_method | transform"]
    lines += [s.to_line() for s in catalog]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_catalog(path) -> list[FeatureSpec]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"catalog file not found: {path}")
    catalog = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            catalog.append(FeatureSpec.from_line(line))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    try:
        validate_catalog(catalog)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return catalog
