"""Independent reference implementations the tests compare against.

These are written for clarity with plain Python loops and share no code with
the package beyond the date helpers.
"""
import datetime as dt
import itertools
import math


def direct_log_loss(y, p, eps=1e-15):
    total = 0.0
    for yi, pi in zip(y, p):
        pi = min(max(pi, eps), 1 - eps)
        total += yi * math.log(pi) + (1 - yi) * math.log(1 - pi)
    return -total / len(y)


def brute_force_labels(transactions, start, end):
    """transactions: list of dicts with datetime.date values. Returns {user: (label, E)}."""
    users = {}
    for t in transactions:
        users.setdefault(t["user_id"], []).append(t)
    out = {}
    for uid, txs in users.items():
        expiries = [t["expire"] for t in txs if start <= t["expire"] <= end]
        if not expiries:
            continue
        e = max(expiries)
        renewed = False
        for t in txs:
            gap = (t["date"] - e).days
            if not t["cancel"] and 1 <= gap <= 30 and t["expire"] > e:
                renewed = True
        out[uid] = (0 if renewed else 1, e)
    return out


def gain(gl, hl, gr, hr, lam):
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - (gl + gr) ** 2 / (hl + hr + lam))


def brute_force_split(bins, g, h, n_bins, lam, gamma=0.0, min_child_hessian=0.0):
    """Enumerate every (feature, threshold, missing-left) on raw rows.

    bins[i][f] is the bin of row i for feature f, n_bins is the missing bin.
    Returns (gain, feature, threshold, missing_left) or None, with ties going
    to the lowest feature, then threshold, then missing-left.
    """
    n_features = len(bins[0]) if bins else 0
    best = None
    for f, t, miss_left in itertools.product(range(n_features), range(n_bins - 1), (True, False)):
        gl = hl = gr = hr = 0.0
        nl = nr = 0
        for row, gi, hi in zip(bins, g, h):
            b = row[f]
            left = (b == n_bins and miss_left) or (b != n_bins and b <= t)
            if left:
                gl, hl, nl = gl + gi, hl + hi, nl + 1
            else:
                gr, hr, nr = gr + gi, hr + hi, nr + 1
        if nl == 0 or nr == 0 or hl < min_child_hessian or hr < min_child_hessian:
            continue
        value = gain(gl, hl, gr, hr, lam)
        if value <= 0 or value < gamma:
            continue
        if best is None or value > best[0] * (1 + 1e-12):
            best = (value, f, t, miss_left)
    return best


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def sample_loss(y, z):
    p = sigmoid(z)
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def random_date(rnd, lo=dt.date(1900, 1, 1), hi=dt.date(2099, 12, 31)):
    return lo + dt.timedelta(days=rnd.randrange((hi - lo).days + 1))


def training_suite():
    """Named (X, y) training sets: smooth, noisy, missing-heavy, imbalanced, tiny, tied values."""
    import numpy as np

    rng = np.random.default_rng(99)
    out = {}
    x = rng.normal(size=(400, 5))
    out["linear"] = (x, (x @ [1.5, -1, 0.5, 0, 0] + rng.normal(size=400) > 0).astype(float))
    x = rng.normal(size=(300, 3))
    out["xor"] = (x, ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(float))
    x = rng.normal(size=(500, 4))
    x[rng.random(x.shape) < 0.4] = np.nan
    out["missing"] = (x, (np.nan_to_num(x[:, 0], nan=1.0) + rng.normal(size=500) > 0.5).astype(float))
    x = rng.exponential(size=(600, 3))
    out["imbalanced"] = (x, (rng.random(600) < 0.03 + 0.1 * (x[:, 0] > 2)).astype(float))
    x = rng.normal(size=(64, 2))
    out["tiny"] = (x, (rng.random(64) < 0.5).astype(float))
    x = rng.integers(0, 3, size=(200, 3)).astype(float)
    out["ties"] = (x, (rng.random(200) < 0.2 + 0.2 * x[:, 0]).astype(float))
    return out


def truncate_after(dataset, day, perturb=None):
    """Copy of ``dataset`` with log and transaction events dated after ``day`` removed.

    With ``perturb`` (a numpy Generator) those events are kept but their
    values are scrambled instead.
    """
    import numpy as np
    from churnboost import ingest

    def cut(frame, date_col, value_cols):
        late = frame[date_col].to_numpy() > day
        if perturb is None:
            return frame[~late].reset_index(drop=True)
        frame = frame.copy()
        for col in value_cols:
            vals = frame[col].to_numpy(dtype=float).copy()
            vals[late] = perturb.permutation(vals[late]) * perturb.uniform(0, 3) + perturb.integers(0, 2)
            frame[col] = vals
        return frame

    logs = cut(dataset.logs, "date", ["num_unique_songs", "seconds_played", "login_count"])
    tx = cut(dataset.transactions, "transaction_date",
             ["payment_plan_days", "plan_list_price", "actual_amount_paid", "is_auto_renew", "is_cancel",
              "membership_expire_date"])
    if perturb is not None:
        tx["membership_expire_date"] = tx["membership_expire_date"].astype(np.int64)
    return ingest.Dataset(dataset.members, logs, tx, dataset.truth)
