"""Temporal churn modelling: labeling, leakage-safe features, and an in-repo
histogram gradient booster."""

__version__ = "0.1.0"
