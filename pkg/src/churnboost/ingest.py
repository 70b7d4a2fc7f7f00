"""Loading, validating and cleaning the three raw sources.

Each source is held as a column-typed pandas frame rather than a list of
record objects. Date columns hold day counts (see :mod:`churnboost.temporal`);
on disk they are yyyymmdd integers. Optional numeric member fields use NaN as
the missing sentinel, gender uses the empty string.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .temporal import ordinal_array, parse_ordinal_array

log = logging.getLogger(__name__)

MAX_SECONDS_PER_DAY = 86_400.0
MIN_AGE, MAX_AGE = 10, 90
REJECT_BUDGET = 0.01

# column -> (dtype, required, default)
SCHEMAS: dict[str, dict[str, tuple[str, bool, object]]] = {
    "logs": {
        "user_id": ("id", True, None),
        "date": ("date", True, None),
        "num_unique_songs": ("float", True, None),
        "seconds_played": ("float", True, None),
        "login_count": ("float", False, 1.0),
    },
    "transactions": {
        "user_id": ("id", True, None),
        "transaction_date": ("date", True, None),
        "membership_expire_date": ("date", True, None),
        "payment_plan_days": ("float", True, None),
        "plan_list_price": ("float", False, 0.0),
        "actual_amount_paid": ("float", False, 0.0),
        "is_auto_renew": ("float", False, 0.0),
        "is_cancel": ("float", True, None),
    },
    "members": {
        "user_id": ("id", True, None),
        "registration_date": ("date", True, None),
        "birth_year": ("float", False, np.nan),
        "gender": ("gender", False, ""),
        "city": ("float", False, np.nan),
        "registered_via": ("float", False, np.nan),
    },
}

SORT_KEYS = {
    "logs": ["user_id", "date"],
    "transactions": ["user_id", "transaction_date"],
    "members": ["user_id"],
}

# Column names used by the public competition files.
ALIASES = {
    "msno": "user_id",
    "bd": "birth_year",
    "num_unq": "num_unique_songs",
    "total_secs": "seconds_played",
    "registration_init_time": "registration_date",
}

INT_COLUMNS = {
    "logs": ["num_unique_songs", "login_count"],
    "transactions": ["payment_plan_days", "is_auto_renew", "is_cancel"],
    "members": ["birth_year", "city", "registered_via"],
}

FILE_NAMES = {"logs": "logs.csv", "transactions": "transactions.csv", "members": "members.csv"}
TRUTH_FILE = "truth.csv"


@dataclass
class Dataset:
    members: pd.DataFrame
    logs: pd.DataFrame
    transactions: pd.DataFrame
    # Hidden per-user churn log-odds; only present for generated data.
    truth: pd.DataFrame | None = field(default=None)

    def frames(self):
        return {"members": self.members, "logs": self.logs, "transactions": self.transactions}

    def equals(self, other: "Dataset") -> bool:
        if (self.truth is None) != (other.truth is None):
            return False
        if self.truth is not None and not self.truth.equals(other.truth):
            return False
        return all(a.equals(b) for a, b in zip(self.frames().values(), other.frames().values()))


def empty_frame(kind: str) -> pd.DataFrame:
    return _coerce(pd.DataFrame({c: [] for c in SCHEMAS[kind]}), kind)


def _coerce(frame: pd.DataFrame, kind: str) -> pd.DataFrame:
    out = {}
    for col, (dtype, _, _) in SCHEMAS[kind].items():
        s = frame[col]
        if dtype == "id":
            out[col] = s.astype(object).to_numpy()
        elif dtype == "date":
            out[col] = s.to_numpy(dtype=np.int64)
        elif dtype == "gender":
            out[col] = s.astype(object).to_numpy()
        else:
            out[col] = s.to_numpy(dtype=np.float64)
    return pd.DataFrame(out)


def sort_frame(frame: pd.DataFrame, kind: str) -> pd.DataFrame:
    return frame.sort_values(SORT_KEYS[kind], kind="mergesort").reset_index(drop=True)


def from_columns(kind: str, **columns) -> pd.DataFrame:
    """Build a typed, sorted source frame from in-memory columns (dates as day counts)."""
    schema = SCHEMAS[kind]
    n = len(next(iter(columns.values()))) if columns else 0
    data = {}
    for col, (_, required, default) in schema.items():
        if col in columns:
            data[col] = list(columns[col]) if schema[col][0] in ("id", "gender") else columns[col]
        elif required:
            raise DataError(f"{kind}: missing required column {col!r}")
        else:
            data[col] = [default] * n
    unknown = set(columns) - set(schema)
    if unknown:
        raise DataError(f"{kind}: unknown columns {sorted(unknown)}")
    return sort_frame(_coerce(pd.DataFrame(data), kind), kind)


def _to_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def _parse_floats(text: pd.Series) -> np.ndarray:
    # float() is exact on repr output; pd.to_numeric can be off by an ulp
    return np.fromiter((_to_float(t) for t in text), dtype=np.float64, count=len(text))


def load_source(path, kind: str) -> pd.DataFrame:
    """Read one CSV source into a typed frame sorted by (user_id, date).

    Rows with an empty user id or an unparseable date are rejected and logged;
    more than 1% rejected rows fails the load. The reject count is kept in
    ``frame.attrs["rejected"]``.
    """
    if kind not in SCHEMAS:
        raise ValueError(f"unknown source kind {kind!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{kind}: file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"{kind}: {path} has no header row") from None
    raw = raw.rename(columns={k: v for k, v in ALIASES.items() if k in raw.columns})
    schema = SCHEMAS[kind]
    missing = [c for c, (_, req, _) in schema.items() if req and c not in raw.columns]
    if missing:
        raise DataError(f"{kind}: {path} lacks required columns {missing}")

    n = len(raw)
    ok = raw["user_id"].str.strip().ne("").to_numpy(dtype=bool)
    cols = {"user_id": raw["user_id"].str.strip()}
    for col, (dtype, _, default) in schema.items():
        if col == "user_id":
            continue
        if col not in raw.columns:
            cols[col] = default
            continue
        text = raw[col].str.strip()
        if dtype == "date":
            days, valid = parse_ordinal_array(pd.to_numeric(text, errors="coerce"))
            ok &= valid
            cols[col] = days
        elif dtype == "gender":
            cols[col] = text.str.lower()
        else:
            cols[col] = _parse_floats(text)
    frame = pd.DataFrame(cols, index=raw.index)

    rejected = int(n - ok.sum())
    if rejected:
        log.warning("%s: rejected %d of %d rows from %s", kind, rejected, n, path)
        if rejected > REJECT_BUDGET * n:
            raise DataError(f"{kind}: {rejected} of {n} rows rejected (budget {REJECT_BUDGET:.0%})")
        frame = frame[ok]
    frame = sort_frame(_coerce(frame.reset_index(drop=True), kind), kind)
    if kind == "members":
        dup = frame["user_id"].duplicated()
        if dup.any():
            log.warning("members: dropping %d duplicate user ids", int(dup.sum()))
            frame = frame[~dup].reset_index(drop=True)
    frame.attrs["rejected"] = rejected
    return frame


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    frames = {k: load_source(directory / name, k) for k, name in FILE_NAMES.items()}
    truth = None
    if (directory / TRUTH_FILE).is_file():
        truth = pd.read_csv(directory / TRUTH_FILE, dtype={"user_id": str}, keep_default_na=False,
                            float_precision="round_trip")
        truth = truth.sort_values("user_id", kind="mergesort").reset_index(drop=True)
        truth["user_id"] = truth["user_id"].astype(object)
        truth["churn_logit"] = truth["churn_logit"].astype(np.float64)
    return Dataset(frames["members"], frames["logs"], frames["transactions"], truth)


def _to_disk(frame: pd.DataFrame, kind: str) -> pd.DataFrame:
    out = frame[list(SCHEMAS[kind])].copy()
    for col, (dtype, _, _) in SCHEMAS[kind].items():
        if dtype == "date":
            out[col] = ordinal_array(out[col].to_numpy())
    for col in INT_COLUMNS[kind]:
        out[col] = out[col].astype("Int64") if out[col].isna().any() else out[col].astype(np.int64)
    return out


def save_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    for kind, frame in dataset.frames().items():
        _to_disk(frame, kind).to_csv(directory / FILE_NAMES[kind], index=False, lineterminator="\n")
    if dataset.truth is not None:
        dataset.truth.to_csv(directory / TRUTH_FILE, index=False, lineterminator="\n", float_format="%.17g")


def clean(dataset: Dataset, reference_year: int = 2017) -> Dataset:
    """Clip outliers, impute nulls, and drop orphan rows. Total and idempotent.

    ``reference_year`` fixes "now" for the plausible-age window so that the
    result does not depend on the wall clock.
    """
    members = dataset.members.copy()
    by = members["birth_year"].to_numpy()
    bad_age = ~((by >= reference_year - MAX_AGE) & (by <= reference_year - MIN_AGE))
    members["birth_year"] = np.where(bad_age, np.nan, by)
    gender = members["gender"].fillna("").astype(str).str.lower()
    members["gender"] = gender.where(gender.isin(["male", "female"]), "").astype(object)
    for col in ("city", "registered_via"):
        v = members[col].to_numpy()
        members[col] = np.where(v > 0, v, np.nan)
    members = sort_frame(members, "members")
    known = set(members["user_id"])

    logs = dataset.logs[dataset.logs["user_id"].isin(known)].copy()
    logs["seconds_played"] = np.clip(np.nan_to_num(logs["seconds_played"].to_numpy(), nan=0.0), 0.0, MAX_SECONDS_PER_DAY)
    logs["num_unique_songs"] = np.clip(np.nan_to_num(logs["num_unique_songs"].to_numpy(), nan=0.0), 0.0, None)
    lc = np.nan_to_num(logs["login_count"].to_numpy(), nan=1.0)
    logs["login_count"] = np.where(lc >= 1, lc, 1.0)
    logs = sort_frame(logs, "logs")

    tx = dataset.transactions[dataset.transactions["user_id"].isin(known)].copy()
    for col in ("payment_plan_days", "plan_list_price", "actual_amount_paid"):
        tx[col] = np.clip(np.nan_to_num(tx[col].to_numpy(), nan=0.0), 0.0, None)
    for col in ("is_auto_renew", "is_cancel"):
        tx[col] = (np.nan_to_num(tx[col].to_numpy(), nan=0.0) > 0).astype(np.float64)
    tx = sort_frame(tx, "transactions")

    truth = dataset.truth
    if truth is not None:
        truth = truth[truth["user_id"].isin(known)].reset_index(drop=True)
    return Dataset(members, logs, tx, truth)
