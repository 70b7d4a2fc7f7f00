"""Greedy forward feature selection on held-out log loss, and correlation pruning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .evaluate import log_loss
from .gbdt import GbdtParams, predict, train
from .gbdt.objective import sigmoid, prior_logodds

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
DEFAULT_CORRELATION = 0.95


@dataclass(frozen=True)
class Trial:
    feature_name: str
    cv_logloss_before: float
    cv_logloss_after: float
    accepted: bool


@dataclass
class SelectionReport:
    baseline: float
    trials: list[Trial] = field(default_factory=list)
    accepted: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        done = [t for t in self.trials if t.accepted]
        return done[-1].cv_logloss_after if done else self.baseline

    @property
    def selected(self) -> list[str]:
        return [f for f in self.accepted if f not in self.dropped]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(t.feature_name, t.cv_logloss_before, t.cv_logloss_after, t.accepted) for t in self.trials],
            columns=["feature_name", "cv_logloss_before", "cv_logloss_after", "accepted"],
        )

    def to_csv(self, path) -> None:
        frame = self.to_frame()
        frame["accepted"] = frame["accepted"].astype(int)
        frame["dropped_as_correlated"] = frame["feature_name"].isin(self.dropped).astype(int)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _cv_loss(features, train_set, cv_set, params) -> float:
    (xt, yt), (xc, yc) = train_set, cv_set
    yt = yt.aligned(xt.user_ids) if hasattr(yt, "aligned") else np.asarray(yt)
    yc = yc.aligned(xc.user_ids) if hasattr(yc, "aligned") else np.asarray(yc)
    if not features:
        prior = sigmoid(np.array([prior_logodds(yt)]))[0]
        return log_loss(yc, np.full(len(yc), prior))
    model = train(xt.select(features), yt, params)
    return log_loss(yc, predict(model, xc.select(features)))


def greedy_select(candidates, train, cv, params: GbdtParams, epsilon: float = DEFAULT_EPSILON, seed_features=()):
    """Add candidates one at a time, in order, keeping those that cut cv log loss by more than ``epsilon``.

    ``train`` and ``cv`` are ``(FeatureMatrix, labels)`` pairs. The baseline
    is the model on ``seed_features`` (the class prior when empty).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    candidates = list(candidates)
    for name in list(seed_features) + candidates:
        for label, (matrix, _) in (("train", train), ("cv", cv)):
            if name not in matrix.feature_names:
                raise DataError(f"candidate {name!r} missing from the {label} matrix")
    accepted = list(seed_features)
    current = _cv_loss(accepted, train, cv, params)
    report = SelectionReport(baseline=current, accepted=list(accepted))
    for name in candidates:
        if name in accepted:
            report.trials.append(Trial(name, current, current, False))
            continue
        after = _cv_loss(accepted + [name], train, cv, params)
        ok = after < current - epsilon
        report.trials.append(Trial(name, current, after, ok))
        log.info("select %-40s %.6f -> %.6f %s", name, current, after, "accept" if ok else "reject")
        if ok:
            accepted.append(name)
            current = after
    report.accepted = accepted
    return report


def prune_correlated(matrix, accepted, threshold: float = DEFAULT_CORRELATION) -> list[str]:
    """Features to drop because an earlier-accepted one has |corr| >= ``threshold``.

    Correlation uses rows where both values are present; constant pairs are
    never dropped.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    accepted = list(accepted)
    cols = matrix.select(accepted).values
    dropped: list[str] = []
    kept: list[int] = []
    for j in range(len(accepted)):
        drop = False
        for i in kept:
            both = ~np.isnan(cols[:, i]) & ~np.isnan(cols[:, j])
            if both.sum() < 2:
                continue
            a, b = cols[both, i], cols[both, j]
            a, b = a - a.mean(), b - b.mean()
            denom = np.sqrt((a * a).sum() * (b * b).sum())
            if denom > 0 and abs((a * b).sum() / denom) >= threshold - 1e-12:
                drop = True
                break
        if drop:
            dropped.append(accepted[j])
        else:
            kept.append(j)
    return dropped
