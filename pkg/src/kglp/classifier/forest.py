"""Random forest of Gini trees; split search and traversal live in ``kernels``."""
import math
from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass(eq=False)
class Forest:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_label: np.ndarray
    depth: np.ndarray
    roots: np.ndarray
    n_classes: int

    @property
    def n_trees(self):
        return len(self.roots)

    def votes(self, X):
        return kernels.forest_votes(self.feature, self.threshold, self.left, self.right,
                                    self.leaf_label, self.roots, X, self.n_classes)

    def max_depth(self):
        return int(self.depth.max()) if len(self.depth) else 0


def _grow_tree(X, y, n_classes, max_depth, mtry, rng, nodes):
    n, n_feat = X.shape
    idx = rng.integers(0, n, size=n)
    root = len(nodes["feature"])
    stack = [(idx, 0, root)]
    for key in nodes:
        nodes[key].append(0)
    while stack:
        idx, depth, node = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes)
        f = -1
        if depth < max_depth and len(idx) >= 2 and np.count_nonzero(counts) > 1:
            feats = np.sort(rng.choice(n_feat, size=mtry, replace=False)).astype(np.int64)
            f, thr = kernels.best_split(X, y, idx, feats, n_classes)
        nodes["depth"][node] = depth
        nodes["leaf_label"][node] = int(np.argmax(counts))
        if f < 0:
            nodes["feature"][node] = -1
            continue
        go_left = X[idx, f] <= thr
        li = len(nodes["feature"])
        for key in nodes:
            nodes[key].extend((0, 0))
        nodes["feature"][node] = f
        nodes["threshold"][node] = thr
        nodes["left"][node] = li
        nodes["right"][node] = li + 1
        stack.append((idx[~go_left], depth + 1, li + 1))
        stack.append((idx[go_left], depth + 1, li))
    return root


def train_forest(X, y, n_classes, n_trees=200, max_depth=8, max_features=None, seed=0):
    """Bootstrap-sampled Gini trees; ``max_features`` defaults to floor(sqrt(width))."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    mtry = max_features or max(1, int(math.isqrt(X.shape[1])))
    mtry = min(mtry, X.shape[1])
    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "leaf_label", "depth")}
    roots = []
    for i in range(n_trees):
        roots.append(_grow_tree(X, y, n_classes, max_depth, mtry,
                                np.random.default_rng([seed, i]), nodes))
    return Forest(np.asarray(nodes["feature"], np.int64), np.asarray(nodes["threshold"], np.float64),
                  np.asarray(nodes["left"], np.int64), np.asarray(nodes["right"], np.int64),
                  np.asarray(nodes["leaf_label"], np.int64), np.asarray(nodes["depth"], np.int64),
                  np.asarray(roots, np.int64), int(n_classes))
