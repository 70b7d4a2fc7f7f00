"""Synthetic subscription data with a known churn process.

Each user has a latent engagement level that drives daily listening, an
auto-renew habit, a plan length, and an unobservable taste term. Together
they fix the user's churn log-odds, applied independently at every
membership expiration. Churners stop renewing for more than 30 days (some
come back later), their listening fades in the month before the
expiration, and many churners (most auto-renewers) file a cancel first.

The per-user log-odds is returned as ``Dataset.truth`` so tests can check
that models recover it.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from .ingest import Dataset, from_columns
from .temporal import month_start, to_days

SPAN_END = to_days(2017, 4, 30)
PLANS = np.array([30, 30, 30, 30, 30, 30, 30, 90, 180, 360])
PRICE_PER_DAY = 149 / 30
BASE_LOGIT = -2.0
FADE_DAYS = 30


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate_synthetic(n_users: int, months: int, seed: int) -> Dataset:
    """Members, daily logs and transactions covering ``months`` calendar months up to 2017-04-30."""
    if not (isinstance(n_users, (int, np.integer)) and n_users >= 1):
        raise ValueError("n_users must be a positive integer")
    if not (isinstance(months, (int, np.integer)) and months >= 1):
        raise ValueError("months must be a positive integer")
    rng = np.random.default_rng(seed % 2**64)
    span_start = month_start(SPAN_END, months - 1)
    n_days = SPAN_END - span_start + 1

    width = len(str(n_users))
    ids = [f"u{i:0{width}d}" for i in range(1, n_users + 1)]
    engagement = rng.normal(size=n_users)
    taste = rng.normal(size=n_users)
    auto = rng.random(n_users) < _sigmoid(0.6 + 0.6 * engagement)
    plan = PLANS[rng.integers(0, len(PLANS), size=n_users)]
    churn_logit = BASE_LOGIT - 1.0 * engagement - 1.5 * auto + 0.7 * taste - 0.7 * (plan > 30)

    tenure = rng.exponential(500.0, size=n_users).astype(np.int64)
    first_tx = span_start - rng.integers(1, 60, size=n_users)
    newcomer = rng.random(n_users) < 0.1
    first_tx = np.where(newcomer, span_start + rng.integers(0, max(1, n_days - 45), size=n_users), first_tx)
    registration = np.where(newcomer, first_tx, first_tx - tenure)

    birth = rng.integers(1955, 2004, size=n_users).astype(np.float64)
    bad = rng.random(n_users)
    birth[bad < 0.02] = 0
    birth[(bad >= 0.02) & (bad < 0.04)] = 1850
    birth[(bad >= 0.04) & (bad < 0.06)] = 2016
    gender = rng.choice(np.array(["male", "female", ""], dtype=object), size=n_users, p=[0.4, 0.35, 0.25])
    city = np.where(rng.random(n_users) < 0.4, 1, rng.integers(2, 23, size=n_users)).astype(np.float64)
    via = rng.choice(np.array([3.0, 4.0, 7.0, 9.0]), size=n_users, p=[0.2, 0.2, 0.35, 0.25])

    tx_cols = {k: [] for k in ("user_id", "transaction_date", "membership_expire_date", "payment_plan_days",
                               "plan_list_price", "actual_amount_paid", "is_auto_renew", "is_cancel")}
    log_parts = []
    days_axis = np.arange(n_days)

    def add_tx(uid, date, expire, plan_days, auto_flag, cancel, price):
        tx_cols["user_id"].append(uid)
        tx_cols["transaction_date"].append(date)
        tx_cols["membership_expire_date"].append(expire)
        tx_cols["payment_plan_days"].append(float(plan_days))
        tx_cols["plan_list_price"].append(price)
        tx_cols["actual_amount_paid"].append(0.0 if cancel else price)
        tx_cols["is_auto_renew"].append(float(auto_flag and not cancel))
        tx_cols["is_cancel"].append(float(cancel))

    for u in range(n_users):
        uid = ids[u]
        p_churn = _sigmoid(churn_logit[u])
        pd_ = int(plan[u])
        price = round(pd_ * PRICE_PER_DAY * (0.9 if pd_ > 30 else 1.0))
        activity = np.full(n_days, 0.03)
        t = int(first_tx[u])
        while t <= SPAN_END:
            expire = t + pd_
            add_tx(uid, t, expire, pd_, auto[u], False, float(price))
            lo, hi = max(t, span_start), min(expire, SPAN_END)
            if lo <= hi:
                activity[lo - span_start: hi - span_start + 1] = 1.0
            if rng.random() < p_churn:
                fade = np.clip((expire - span_start - days_axis) / FADE_DAYS, 0.0, 1.0)
                in_fade = (days_axis <= expire - span_start) & (days_axis > expire - span_start - FADE_DAYS)
                activity = np.where(in_fade, np.minimum(activity, 0.1 + 0.9 * fade), activity)
                if rng.random() < (0.7 if auto[u] else 0.3) and expire - t > 2:
                    cancel_day = int(rng.integers(max(t + 1, expire - 30), expire))
                    if cancel_day <= SPAN_END:
                        add_tx(uid, cancel_day, expire, pd_, False, True, float(price))
                if rng.random() < 0.3:
                    t = expire + 31 + int(rng.geometric(1 / 30))
                    continue
                break
            delay = 1 if auto[u] else min(30, int(rng.geometric(0.35)))
            t = expire + delay

        rate = _sigmoid(0.4 + 1.1 * engagement[u]) * activity
        active = np.flatnonzero(rng.random(n_days) < rate)
        songs = rng.poisson(np.exp(2.6 + 0.4 * engagement[u]), size=active.size) + 1
        secs = np.round(songs * 210.0 * rng.lognormal(0.0, 0.35, size=active.size), 3)
        outlier = rng.random(active.size) < 0.002
        secs[outlier] = 1e6 + rng.random(int(outlier.sum())) * 1e6
        logins = 1 + rng.poisson(0.4, size=active.size)
        log_parts.append((uid, span_start + active, songs, secs, logins))

    members = from_columns(
        "members", user_id=ids, registration_date=registration, birth_year=birth,
        gender=list(gender), city=city, registered_via=via,
    )
    n_log = sum(len(p[1]) for p in log_parts)
    logs = from_columns(
        "logs",
        user_id=np.repeat(np.array([p[0] for p in log_parts], dtype=object), [len(p[1]) for p in log_parts]),
        date=np.concatenate([p[1] for p in log_parts]) if n_log else np.array([], dtype=np.int64),
        num_unique_songs=np.concatenate([p[2] for p in log_parts]).astype(np.float64),
        seconds_played=np.concatenate([p[3] for p in log_parts]),
        login_count=np.concatenate([p[4] for p in log_parts]).astype(np.float64),
    )
    transactions = from_columns("transactions", **{k: np.asarray(v) if k != "user_id" else v for k, v in tx_cols.items()})
    truth = pd.DataFrame({"user_id": np.array(ids, dtype=object), "churn_logit": churn_logit})
    return Dataset(members, logs, transactions, truth)
