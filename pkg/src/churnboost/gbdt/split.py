"""Histogram construction and second-order split search.

A node histogram has shape ``(n_features, n_bins + 1, 3)`` holding per-bin
``(sum g, sum h, count)``; the last bin collects missing values. A split at
threshold ``t`` sends finite bins ``<= t`` left and sends the missing bin the
learned default way.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Gains this close (relative) are treated as equal so float noise cannot
# override the tie-break order.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SplitInfo:
    feature: int
    threshold: int
    missing_left: bool
    gain: float
    left_g: float
    left_h: float
    right_g: float
    right_h: float


def build_histogram(binned: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray, n_bins: int) -> np.ndarray:
    n_features = binned.shape[1]
    width = n_bins + 1
    flat = (binned[rows].astype(np.int64) + np.arange(n_features) * width).ravel()
    size = n_features * width
    gw = np.repeat(g[rows], n_features)
    hw = np.repeat(h[rows], n_features)
    hist = np.empty((n_features, width, 3))
    hist[:, :, 0] = np.bincount(flat, weights=gw, minlength=size).reshape(n_features, width)
    hist[:, :, 1] = np.bincount(flat, weights=hw, minlength=size).reshape(n_features, width)
    hist[:, :, 2] = np.bincount(flat, minlength=size).reshape(n_features, width)
    return hist


def split_gain(gl, hl, gr, hr, lam):
    g, h = gl + gr, hl + hr
    with np.errstate(divide="ignore", invalid="ignore"):  # empty children with lambda 0; masked by callers
        return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam))


def best_split(histogram: np.ndarray, params, feature_mask: np.ndarray | None = None) -> SplitInfo | None:
    """Best (feature, threshold, missing direction) by regularised gain.

    Candidates are ordered by feature, then threshold, then missing-left
    before missing-right; the first candidate within ``TIE_RTOL`` of the best
    gain wins. Returns None when no candidate has two non-empty children each
    carrying at least ``min_child_hessian``, and positive gain of at least
    ``gamma_min_gain``.
    """
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim == 2:
        hist = hist[None]
    finite = hist[:, :-1, :]
    miss = hist[:, -1, :]
    cum = np.cumsum(finite, axis=1)[:, :-1, :]  # (F, T, 3), T thresholds
    total = cum[:, -1:, :] + finite[:, -1:, :]
    right = total - cum
    lam = params.lambda_l2

    # direction axis: 0 = missing left, 1 = missing right
    left = np.stack([cum + miss[:, None, :], cum], axis=2)
    right = np.stack([right, right + miss[:, None, :]], axis=2)
    gl, hl, cl = left[..., 0], left[..., 1], left[..., 2]
    gr, hr, cr = right[..., 0], right[..., 1], right[..., 2]
    gain = split_gain(gl, hl, gr, hr, lam)
    valid = (cl >= 1) & (cr >= 1) & (hl >= params.min_child_hessian) & (hr >= params.min_child_hessian)
    valid &= (gain > 0) & (gain >= params.gamma_min_gain)
    if feature_mask is not None:
        valid &= np.asarray(feature_mask, dtype=bool)[:, None, None]
    if not valid.any():
        return None
    scored = np.where(valid, gain, -np.inf)
    best = scored.max()
    flat = np.flatnonzero(scored.ravel() >= best - TIE_RTOL * best)[0]
    f, t, d = np.unravel_index(flat, scored.shape)
    return SplitInfo(
        feature=int(f),
        threshold=int(t),
        missing_left=bool(d == 0),
        gain=float(gain[f, t, d]),
        left_g=float(gl[f, t, d]),
        left_h=float(hl[f, t, d]),
        right_g=float(gr[f, t, d]),
        right_h=float(hr[f, t, d]),
    )
