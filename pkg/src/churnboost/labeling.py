"""Binary churn labels from the 30-day renewal rule.

A user is in a period's population when some membership expiration falls
inside the period; the latest such date is the reference expiration ``E``.
The user renewed (label 0) when a non-cancel transaction dated in
``(E, E + 30]`` extends membership past ``E``; otherwise the label is 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .temporal import TimePeriod, ordinal_array, parse_ordinal_array

RENEWAL_WINDOW_DAYS = 30


@dataclass(frozen=True)
class LabelSet:
    period: TimePeriod
    user_ids: np.ndarray  # sorted, unique
    labels: np.ndarray  # int8 in {0, 1}
    expiration: np.ndarray  # reference expiration, day counts

    def __len__(self):
        return len(self.user_ids)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.user_ids.tolist(), self.labels.tolist()))

    def expirations(self) -> dict[str, int]:
        return dict(zip(self.user_ids.tolist(), self.expiration.tolist()))

    def base_rate(self) -> float:
        return float(self.labels.mean()) if len(self) else float("nan")

    def aligned(self, user_ids) -> np.ndarray:
        """Labels reordered to ``user_ids``; every id must be labeled."""
        lookup = pd.Series(self.labels, index=self.user_ids)
        ids = pd.Index(np.asarray(user_ids, dtype=object))
        missing = ~ids.isin(lookup.index)
        if missing.any():
            raise DataError(f"{int(missing.sum())} users have no label, e.g. {ids[missing][0]!r}")
        return lookup.reindex(ids).to_numpy(dtype=np.int8)

    def equals(self, other: "LabelSet") -> bool:
        return (
            self.period == other.period
            and np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.expiration, other.expiration)
        )

    def to_csv(self, path) -> None:
        pd.DataFrame(
            {"user_id": self.user_ids, "is_churn": self.labels, "expiration": ordinal_array(self.expiration)}
        ).to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path, period: TimePeriod | None = None) -> "LabelSet":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"labels file not found: {path}")
        frame = pd.read_csv(path, dtype={"user_id": str}, keep_default_na=False)
        for col in ("user_id", "is_churn"):
            if col not in frame.columns:
                raise DataError(f"{path}: missing column {col!r}")
        frame = frame.sort_values("user_id", kind="mergesort")
        labels = frame["is_churn"].to_numpy(dtype=np.int8)
        if not np.isin(labels, (0, 1)).all():
            raise DataError(f"{path}: is_churn must be 0 or 1")
        if "expiration" in frame.columns:
            expiration, valid = parse_ordinal_array(frame["expiration"].to_numpy())
            if not valid.all():
                raise DataError(f"{path}: unparseable expiration date")
        elif period is not None:
            expiration = np.full(len(frame), period.end, dtype=np.int64)
        else:
            raise DataError(f"{path}: no expiration column and no period given")
        return cls(period, frame["user_id"].to_numpy(dtype=object), labels, expiration.astype(np.int64))


def label_churn(transactions: pd.DataFrame, period: TimePeriod) -> LabelSet:
    tx = transactions
    expire = tx["membership_expire_date"].to_numpy()
    in_period = (expire >= period.start) & (expire <= period.end)
    if not in_period.any():
        empty = np.array([], dtype=object)
        return LabelSet(period, empty, np.array([], dtype=np.int8), np.array([], dtype=np.int64))

    ref = tx.loc[in_period].groupby("user_id", sort=True)["membership_expire_date"].max()
    users = ref.index.to_numpy(dtype=object)
    e_ref = ref.to_numpy(dtype=np.int64)

    candidates = tx[tx["user_id"].isin(ref.index) & (tx["is_cancel"].to_numpy() == 0)]
    e_row = ref.reindex(candidates["user_id"]).to_numpy(dtype=np.int64)
    td = candidates["transaction_date"].to_numpy()
    renews = (td > e_row) & (td <= e_row + RENEWAL_WINDOW_DAYS) & (candidates["membership_expire_date"].to_numpy() > e_row)
    renewed = set(candidates["user_id"].to_numpy()[renews])
    labels = np.array([0 if u in renewed else 1 for u in users], dtype=np.int8)
    return LabelSet(period, users, labels, e_ref)


def relabel_all(dataset, periods: dict[str, TimePeriod]) -> dict[str, LabelSet]:
    """Fresh labels per period; any labels shipped with the data are ignored."""
    names = list(periods)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if periods[a].overlaps(periods[b]):
                raise ConfigError(f"periods {a!r} and {b!r} overlap")
    return {name: label_churn(dataset.transactions, p) for name, p in periods.items()}
