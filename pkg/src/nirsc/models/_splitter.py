"""Exact greedy split search over presorted sample indices (numba kernels).

Every node keeps one row of sample indices per candidate feature, sorted by
that feature's value. Scanning a row left to right accumulates gradient
statistics, so all thresholds of all features are evaluated in
O(n_features * n_node). Splitting a node stably partitions each row.
Feature values are read from the transposed matrix ``XT`` (one contiguous
row per feature).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def soft_threshold(G, alpha):
    if G > alpha:
        return G - alpha
    if G < -alpha:
        return G + alpha
    return 0.0


@njit(cache=True)
def leaf_score(G, H, lam, alpha):
    denom = H + lam
    if denom <= 0.0:
        return 0.0
    t = soft_threshold(G, alpha)
    return t * t / denom


@njit(cache=True)
def leaf_weight(G, H, lam, alpha):
    denom = H + lam
    if denom <= 0.0:
        return 0.0
    return -soft_threshold(G, alpha) / denom


@njit(cache=True)
def node_sums(rows, g, h):
    G = 0.0
    H = 0.0
    first = rows[0]
    for j in range(first.shape[0]):
        i = first[j]
        G += g[i]
        H += h[i]
    return G, H


@njit(cache=True)
def find_best_split(XT, g, h, rows, feats, G, H, lam, alpha,
                    min_samples_leaf, min_child_weight, min_split_gain):
    """Best (gain, feature row, threshold, G_left, H_left, n_left).

    Features are scanned in the order of ``feats`` and thresholds in
    ascending order; only a strictly larger gain replaces the incumbent, so
    ties resolve to the earliest feature and lowest threshold. Returns
    ``fi = -1`` when no admissible split beats ``min_split_gain``.
    """
    n = rows.shape[1]
    parent = leaf_score(G, H, lam, alpha)
    best_gain = min_split_gain
    best_fi = -1
    best_thr = 0.0
    best_gl = 0.0
    best_hl = 0.0
    best_nl = 0
    for fi in range(rows.shape[0]):
        col = XT[feats[fi]]
        row = rows[fi]
        gl = 0.0
        hl = 0.0
        for j in range(n - 1):
            i = row[j]
            gl += g[i]
            hl += h[i]
            v = col[i]
            vn = col[row[j + 1]]
            if vn <= v:
                continue
            nl = j + 1
            if nl < min_samples_leaf or n - nl < min_samples_leaf:
                continue
            hr = H - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gain = 0.5 * (leaf_score(gl, hl, lam, alpha)
                          + leaf_score(G - gl, hr, lam, alpha) - parent)
            if gain > best_gain:
                best_gain = gain
                best_fi = fi
                best_thr = 0.5 * (v + vn)
                if best_thr >= vn:  # adjacent floats
                    best_thr = v
                best_gl = gl
                best_hl = hl
                best_nl = nl
    return best_gain, best_fi, best_thr, best_gl, best_hl, best_nl


@njit(cache=True)
def partition(rows, XT, f, thr, n_left):
    F, n = rows.shape
    col = XT[f]
    left = np.empty((F, n_left), dtype=rows.dtype)
    right = np.empty((F, n - n_left), dtype=rows.dtype)
    for fi in range(F):
        a = 0
        b = 0
        for j in range(n):
            i = rows[fi, j]
            if col[i] <= thr:
                left[fi, a] = i
                a += 1
            else:
                right[fi, b] = i
                b += 1
    return left, right


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for s in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[s, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[s] = value[node]
    return out
