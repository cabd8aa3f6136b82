"""Tree-descent kernels with a numba fast path and a numpy fallback.

The per-instance hot path descends every tree once for scoring, ``d * G``
more times for the ICE sweep, and twice more to learn the new point and
forget the expiring one, so these loops dominate runtime. By default they
are compiled with ``numba.njit``; setting ``STREAMLENS_NO_NUMBA=1`` (or a
failed numba import) selects a pure-numpy fallback that routes scoring
batches level-synchronously instead of looping per row.

All trees of a forest live in one slot arena: ``feature`` holds -1 for
leaves and the split feature otherwise, ``left``/``right`` hold child
slots, ``threshold`` the split value. Routing convention: ``x[f] < t``
goes left, ties go right.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

ENV_FLAG = "STREAMLENS_NO_NUMBA"


def _forest_depths_loop(feature, left, right, threshold, roots, X):
    num_trees = roots.shape[0]
    n = X.shape[0]
    out = np.empty((num_trees, n), dtype=np.int64)
    for t in range(num_trees):
        root = roots[t]
        for r in range(n):
            i = root
            d = 0
            while feature[i] >= 0:
                if X[r, feature[i]] < threshold[i]:
                    i = left[i]
                else:
                    i = right[i]
                d += 1
            out[t, r] = d
    return out


def _forest_learn_loop(feature, left, right, threshold, count, depth, roots, x,
                       thresholds, depth_cap):
    """Increment counts along each tree's path of ``x``.

    Returns (leaf slot, leaf depth, split wanted) per tree; a split is
    wanted when the leaf is under the depth cap and its count exceeds the
    depth's split threshold.
    """
    num_trees = roots.shape[0]
    leaves = np.empty(num_trees, dtype=np.int64)
    leaf_depths = np.empty(num_trees, dtype=np.int64)
    wants_split = np.zeros(num_trees, dtype=np.bool_)
    for t in range(num_trees):
        i = roots[t]
        count[i] += 1
        while feature[i] >= 0:
            if x[feature[i]] < threshold[i]:
                i = left[i]
            else:
                i = right[i]
            count[i] += 1
        leaves[t] = i
        d = depth[i]
        leaf_depths[t] = d
        if d < depth_cap and count[i] > thresholds[d]:
            wants_split[t] = True
    return leaves, leaf_depths, wants_split


def _forest_forget_loop(feature, left, right, threshold, count, depth, parent,
                        roots, x, merge_bars):
    """Decrement counts along each tree's path of ``x``.

    Returns (leaf slot, leaf depth, merge candidates) per tree. Candidate
    row t lists the ancestors of the leaf (bottom-up, -1 padded) whose
    count fell to the merge bar of their depth or below; counts are
    unchanged by merging, so the sweep can run before any merge happens.
    """
    num_trees = roots.shape[0]
    levels = merge_bars.shape[0]
    leaves = np.empty(num_trees, dtype=np.int64)
    leaf_depths = np.empty(num_trees, dtype=np.int64)
    candidates = np.full((num_trees, levels), -1, dtype=np.int64)
    for t in range(num_trees):
        i = roots[t]
        count[i] -= 1
        while feature[i] >= 0:
            if x[feature[i]] < threshold[i]:
                i = left[i]
            else:
                i = right[i]
            count[i] -= 1
        leaves[t] = i
        leaf_depths[t] = depth[i]
        k = 0
        node = parent[i]
        while node >= 0:
            d = depth[node]
            if count[node] <= merge_bars[d]:
                candidates[t, k] = node
                k += 1
            node = parent[node]
    return leaves, leaf_depths, candidates


def _forest_depths_numpy(feature, left, right, threshold, roots, X):
    # Level-synchronous descent: route all rows of X one tree level per
    # numpy pass instead of one python loop iteration per node hop.
    num_trees = roots.shape[0]
    n = X.shape[0]
    out = np.zeros((num_trees, n), dtype=np.int64)
    for t in range(num_trees):
        cur = np.full(n, roots[t], dtype=np.int64)
        active = np.nonzero(feature[cur] >= 0)[0]
        while active.size:
            idx = cur[active]
            f = feature[idx]
            go_left = X[active, f] < threshold[idx]
            cur[active] = np.where(go_left, left[idx], right[idx])
            out[t, active] += 1
            active = active[feature[cur[active]] >= 0]
    return out


@dataclass(frozen=True)
class Backend:
    name: str
    forest_depths: Callable
    forest_learn: Callable
    forest_forget: Callable


NUMPY_BACKEND = Backend(
    name="numpy",
    forest_depths=_forest_depths_numpy,
    # Single paths admit no vectorization; the plain loops are the fallback.
    forest_learn=_forest_learn_loop,
    forest_forget=_forest_forget_loop,
)

NUMBA_BACKEND: Backend | None = None

if os.environ.get(ENV_FLAG, "") in ("", "0"):
    try:
        from numba import njit

        NUMBA_BACKEND = Backend(
            name="numba",
            forest_depths=njit(cache=True)(_forest_depths_loop),
            forest_learn=njit(cache=True)(_forest_learn_loop),
            forest_forget=njit(cache=True)(_forest_forget_loop),
        )
    except ImportError:
        NUMBA_BACKEND = None

_ACTIVE = NUMBA_BACKEND if NUMBA_BACKEND is not None else NUMPY_BACKEND


def active_backend() -> Backend:
    """Backend selected at import time (numba unless disabled or missing)."""
    return _ACTIVE


def available_backends() -> dict[str, Backend]:
    out = {"numpy": NUMPY_BACKEND}
    if NUMBA_BACKEND is not None:
        out["numba"] = NUMBA_BACKEND
    return out
