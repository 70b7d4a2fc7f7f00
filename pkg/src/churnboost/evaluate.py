"""Log-loss scoring, probability-space ensembling and run reports."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .gbdt import predict

DEFAULT_CLIP_EPS = 1e-15
DEFAULT_WEIGHTS = (0.88, 0.12)


def log_loss(labels, preds, clip_eps: float = DEFAULT_CLIP_EPS) -> float:
    """Mean negative Bernoulli log-likelihood, with predictions clipped to [eps, 1-eps]."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise ValueError("labels and predictions must be 1-D vectors of equal length")
    if y.size == 0:
        raise ValueError("log loss of an empty vector is undefined")
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise ValueError("predictions must lie in [0, 1]")
    p = np.clip(p, clip_eps, 1.0 - clip_eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def binary_entropy(p: float) -> float:
    return float(-(p * np.log(p) + (1 - p) * np.log(1 - p)))


@dataclass
class EnsembleSpec:
    members: list  # [(model, weight), ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        weights = [w for _, w in self.members]
        if any(w < 0 for w in weights):
            raise ValueError("ensemble weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(weights):.12g}")

    @property
    def weights(self):
        return [w for _, w in self.members]


def blend(member_preds, weights) -> np.ndarray:
    """Weighted mean, kept inside the per-row member range against rounding."""
    stack = np.vstack([np.asarray(p, dtype=np.float64) for p in member_preds])
    w = np.asarray(weights, dtype=np.float64)[:, None]
    out = (w * stack).sum(axis=0)
    return np.clip(out, stack.min(axis=0), stack.max(axis=0))


def ensemble_predict(spec: EnsembleSpec, matrix) -> np.ndarray:
    return blend([predict(model, matrix) for model, _ in spec.members], spec.weights)


def write_predictions(path, user_ids, probs) -> None:
    pd.DataFrame({"user_id": user_ids, "is_churn_probability": probs}).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n"
    )


def read_predictions(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    frame = pd.read_csv(path, dtype={"user_id": str}, keep_default_na=False, float_precision="round_trip")
    if list(frame.columns[:2]) != ["user_id", "is_churn_probability"]:
        raise DataError(f"{path}: expected columns user_id,is_churn_probability")
    return frame


@dataclass
class EvalReport:
    period: str
    n_users: int
    base_rate: float
    log_loss: float
    scores: dict[str, float] = field(default_factory=dict)  # model name -> log loss
    importance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.log_loss < 0:
            raise ValueError("log loss cannot be negative")

    def to_text(self) -> str:
        lines = [
            f"period           {self.period}",
            f"users            {self.n_users}",
            f"churn base rate  {self.base_rate:.5f}",
            f"log loss         {self.log_loss:.5f}",
            "",
            f"{'model':<24}log loss",
        ]
        lines += [f"{name:<24}{score:.5f}" for name, score in self.scores.items()]
        if self.importance:
            lines += ["", f"{'feature':<40}importance"]
            lines += [f"{name:<40}{share:.2%}" for name, share in list(self.importance.items())[:10]]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = [("summary", "n_users", self.n_users), ("summary", "base_rate", self.base_rate),
                ("summary", "log_loss", self.log_loss)]
        rows += [("model", k, v) for k, v in self.scores.items()]
        rows += [("importance", k, v) for k, v in self.importance.items()]
        buf = io.StringIO()
        pd.DataFrame(rows, columns=["section", "name", "value"]).to_csv(buf, index=False, lineterminator="\n")
        return buf.getvalue()
