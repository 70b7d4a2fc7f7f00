"""Growing one regression tree on gradient statistics over binned features."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .split import SplitInfo, best_split, build_histogram


@dataclass
class Tree:
    """Array-encoded binary tree; node 0 is the root, ``feature == -1`` marks a leaf.

    Leaf ``value`` is already scaled by the learning rate.
    """

    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, binned: np.ndarray, missing_bin: int) -> np.ndarray:
        """Leaf index reached by every row of ``binned``."""
        node = np.zeros(len(binned), dtype=np.int64)
        rows = np.arange(len(binned))
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            b = binned[r, self.feature[n]].astype(np.int64)
            go_left = np.where(b == missing_bin, self.missing_left[n], b <= self.threshold[n])
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active[r] = self.feature[node[r]] >= 0
        return node

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "missing_left": self.missing_left.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.int64),
            np.asarray(d["missing_left"], dtype=bool),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
            np.asarray(d["gain"], dtype=np.float64),
        )

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(
            np.array([-1]), np.array([0]), np.array([False]), np.array([-1]), np.array([-1]),
            np.array([float(value)]), np.array([0.0]),
        )


class _Node:
    __slots__ = ("id", "rows", "hist", "depth", "split", "move_left")

    def __init__(self, node_id, rows, hist, depth):
        self.id, self.rows, self.hist, self.depth = node_id, rows, hist, depth
        self.split: SplitInfo | None = None


def grow_tree(binned, g, h, rows, params, n_bins, feature_mask=None, audit=None) -> Tree:
    """Grow one tree on ``rows`` by the configured strategy.

    ``depth_wise`` expands nodes level by level; ``leaf_wise`` always expands
    the open node with the largest gain. Both stop at ``max_leaves`` leaves
    and ``max_depth``. The larger child's histogram is the parent's minus the
    smaller child's.

    When ``audit`` is a list, one record per node is appended with its
    histogram totals next to the directly summed gradient statistics.
    """
    lam, lr = params.lambda_l2, params.learning_rate
    missing_bin = n_bins
    nodes: list[_Node] = []

    def make(rows_, hist, depth, sibling_direct=None):
        node = _Node(len(nodes), rows_, hist, depth)
        nodes.append(node)
        if audit is not None:
            rec = {
                "node": node.id,
                "depth": depth,
                "hist_g": hist[:, :, 0].sum(axis=1),
                "hist_h": hist[:, :, 1].sum(axis=1),
                "direct_g": float(g[rows_].sum()),
                "direct_h": float(h[rows_].sum()),
                "abs_g": float(np.abs(g[rows_]).sum()),
            }
            if sibling_direct is not None:
                rec["subtracted_error"] = float(np.abs(hist[:, :, :2] - sibling_direct[:, :, :2]).max())
            audit.append(rec)
        if depth < params.depth_limit and len(rows_) >= 2:
            node.split = best_split(hist, params, feature_mask)
        return node

    root = make(rows, build_histogram(binned, g, h, rows, n_bins), 0)
    queue: deque | list
    leaf_wise = params.growth == "leaf_wise"
    queue = [] if leaf_wise else deque()

    def push(node):
        if node.split is None:
            return
        if leaf_wise:
            heapq.heappush(queue, (-node.split.gain, node.id))
        else:
            queue.append(node.id)

    push(root)
    children: dict[int, tuple[int, int]] = {}
    n_leaves = 1
    while queue and n_leaves < params.max_leaves:
        node = nodes[heapq.heappop(queue)[1] if leaf_wise else queue.popleft()]
        s = node.split
        b = binned[node.rows, s.feature].astype(np.int64)
        go_left = np.where(b == missing_bin, s.missing_left, b <= s.threshold)
        lrows, rrows = node.rows[go_left], node.rows[~go_left]
        left_small = len(lrows) <= len(rrows)
        small_hist = build_histogram(binned, g, h, lrows if left_small else rrows, n_bins)
        large_hist = node.hist - small_hist
        direct = None
        if audit is not None:
            direct = build_histogram(binned, g, h, rrows if left_small else lrows, n_bins)
        if left_small:
            left = make(lrows, small_hist, node.depth + 1)
            right = make(rrows, large_hist, node.depth + 1, direct)
        else:
            left = make(lrows, large_hist, node.depth + 1, direct)
            right = make(rrows, small_hist, node.depth + 1)
        children[node.id] = (left.id, right.id)
        node.hist = None
        push(left)
        push(right)
        n_leaves += 1

    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n, dtype=np.int64)
    missing_left = np.zeros(n, dtype=bool)
    left_arr = np.full(n, -1, dtype=np.int64)
    right_arr = np.full(n, -1, dtype=np.int64)
    value = np.zeros(n)
    gain = np.zeros(n)
    for node in nodes:
        if node.id in children:
            s = node.split
            feature[node.id], threshold[node.id], missing_left[node.id] = s.feature, s.threshold, s.missing_left
            left_arr[node.id], right_arr[node.id] = children[node.id]
            gain[node.id] = s.gain
        else:
            G, H = g[node.rows].sum(), h[node.rows].sum()
            value[node.id] = -G / (H + lam) * lr
        node.hist = None
    return Tree(feature, threshold, missing_left, left_arr, right_arr, value, gain)
