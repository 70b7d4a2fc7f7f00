"""Gradient-boosted trees for binary churn with a log-loss objective."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from .binning import BinMap
from .grower import Tree, grow_tree
from .objective import logistic_grad_hess, prior_logodds, sigmoid
from .params import GbdtParams

MODEL_FORMAT = "churnboost-gbdt"
MODEL_VERSION = 1


def _logloss_logits(y, z) -> float:
    # log(1 + e^z) - y z, computed without overflow
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass
class GbdtModel:
    params: GbdtParams
    base_score: float
    trees: list[Tree]
    bin_map: BinMap
    feature_names: list[str]
    # training log loss before any tree and after each round; not serialized
    history: list[float] = field(default_factory=list, compare=False)

    def _binned(self, matrix) -> np.ndarray:
        names = list(matrix.feature_names)
        if names != self.feature_names:
            missing = [n for n in self.feature_names if n not in names]
            if missing:
                raise DataError(f"matrix lacks model features {missing}")
            matrix = matrix.select(self.feature_names)
        return self.bin_map.transform(matrix.values)

    def predict_raw(self, matrix) -> np.ndarray:
        binned = self._binned(matrix)
        raw = np.full(len(binned), self.base_score)
        for tree in self.trees:
            raw += tree.value[tree.apply(binned, self.bin_map.missing_bin)]
        return raw

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": self.params.to_dict(),
            "base_score": self.base_score,
            "feature_names": self.feature_names,
            "n_bins": self.bin_map.n_bins,
            "bin_edges": [e.tolist() for e in self.bin_map.edges],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("format") != MODEL_FORMAT:
            raise DataError("not a churnboost model file")
        if d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {d.get('version')}")
        bin_map = BinMap([np.asarray(e, dtype=np.float64) for e in d["bin_edges"]], int(d["n_bins"]))
        return cls(
            GbdtParams(**d["params"]),
            float(d["base_score"]),
            [Tree.from_dict(t) for t in d["trees"]],
            bin_map,
            list(d["feature_names"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"model file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed model file ({exc})") from None


def _label_vector(matrix, labels) -> np.ndarray:
    if hasattr(labels, "aligned"):
        return labels.aligned(matrix.user_ids).astype(np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (len(matrix.user_ids),):
        raise DataError("labels do not align with matrix rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be 0 or 1")
    return y


def train(matrix, labels, params: GbdtParams, audit: list | None = None) -> GbdtModel:
    """Fit ``params.n_trees`` Newton-step trees to the log loss.

    ``labels`` is a LabelSet (aligned by user id) or a 0/1 vector in row
    order. ``audit`` collects per-node histogram records (see grow_tree).
    """
    y = _label_vector(matrix, labels)
    n = len(y)
    if n == 0:
        raise DataError("cannot train on an empty matrix")
    if params.base_score_mode == "prior_logodds":
        if y.min() == y.max():
            raise DataError("prior_logodds base score needs both classes in the labels")
        base = prior_logodds(y)
    else:
        base = 0.0

    bin_map = BinMap.fit(matrix.values, params.n_bins)
    binned = bin_map.transform(matrix.values)
    n_features = binned.shape[1]
    rng = np.random.default_rng(params.seed % 2**64)
    raw = np.full(n, base)
    history = [_logloss_logits(y, raw)]
    trees = []
    all_rows = np.arange(n)
    for _ in range(params.n_trees):
        g, h = logistic_grad_hess(y, raw)
        rows = all_rows
        if params.row_subsample < 1:
            k = max(1, int(round(params.row_subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        mask = None
        if params.col_subsample < 1 and n_features:
            k = max(1, int(round(params.col_subsample * n_features)))
            mask = np.zeros(n_features, dtype=bool)
            mask[rng.choice(n_features, size=k, replace=False)] = True
        tree = grow_tree(binned, g, h, rows, params, bin_map.n_bins, mask, audit)
        raw = raw + tree.value[tree.apply(binned, bin_map.missing_bin)]
        trees.append(tree)
        history.append(_logloss_logits(y, raw))
    return GbdtModel(params, base, trees, bin_map, list(matrix.feature_names), history)


def predict(model: GbdtModel, matrix) -> np.ndarray:
    """Churn probabilities for every matrix row."""
    return sigmoid(model.predict_raw(matrix))


def feature_importance(model: GbdtModel) -> dict[str, float]:
    """Each feature's share of total split gain, largest first."""
    totals = np.zeros(len(model.feature_names))
    for tree in model.trees:
        internal = tree.feature >= 0
        np.add.at(totals, tree.feature[internal], tree.gain[internal])
    grand = totals.sum()
    if grand <= 0:
        return {}
    order = sorted(np.flatnonzero(totals > 0), key=lambda j: (-totals[j], j))
    return {model.feature_names[j]: float(totals[j] / grand) for j in order}
