from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class GbdtParams:
    """Booster hyperparameters; ranges are checked at construction.

    ``max_depth=0`` means unlimited depth. Row and column subsampling are off
    by default.
    """

    n_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    max_depth: int = 6
    growth: str = "depth_wise"
    n_bins: int = 256
    lambda_l2: float = 1.0
    gamma_min_gain: float = 0.0
    min_child_hessian: float = 1.0
    row_subsample: float = 1.0
    col_subsample: float = 1.0
    seed: int = 0
    base_score_mode: str = "prior_logodds"

    def __post_init__(self):
        problems = []
        if not (isinstance(self.n_trees, int) and self.n_trees >= 0):
            problems.append("n_trees must be a non-negative integer")
        if not 0 < self.learning_rate <= 1:
            problems.append("learning_rate must be in (0, 1]")
        if not (isinstance(self.max_leaves, int) and self.max_leaves >= 1):
            problems.append("max_leaves must be a positive integer")
        if not (isinstance(self.max_depth, int) and self.max_depth >= 0):
            problems.append("max_depth must be a positive integer or 0 (unlimited)")
        if self.growth not in ("depth_wise", "leaf_wise"):
            problems.append("growth must be depth_wise or leaf_wise")
        if not (isinstance(self.n_bins, int) and 2 <= self.n_bins <= 256):
            problems.append("n_bins must be an integer in [2, 256]")
        for name in ("lambda_l2", "gamma_min_gain", "min_child_hessian"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                problems.append(f"{name} must be >= 0")
        for name in ("row_subsample", "col_subsample"):
            if not 0 < getattr(self, name) <= 1:
                problems.append(f"{name} must be in (0, 1]")
        if not (isinstance(self.seed, int) and -(2**63) <= self.seed < 2**64):
            problems.append("seed must be a 64-bit integer")
        if self.base_score_mode not in ("prior_logodds", "zero"):
            problems.append("base_score_mode must be prior_logodds or zero")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def depth_limit(self) -> float:
        return self.max_depth if self.max_depth > 0 else math.inf

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtParams":
        """Build from loosely typed values (e.g. strings from a config file)."""
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(types)
        if unknown:
            raise ValueError(f"unknown booster parameters: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kind = types[key]
            if kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        return cls(**kwargs)

    def replace(self, **changes) -> "GbdtParams":
        return GbdtParams(**{**self.to_dict(), **changes})
