"""Sorted-cumulative-sum helpers for risk sets on a (possibly transformed) time axis."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def pair_risk_sums(event_t, event_y, query, weights=None):
    """Sums over event pairs ``(j, l)`` with ``t_jl <= s <= Y_j``.

    For every query point ``s`` returns the count of such pairs and, when
    ``weights`` (shape ``(E, q)``) is given, the weighted sums. The identity
    ``{t <= s <= Y} = {t <= s} minus {Y < s}`` (valid because ``t <= Y``)
    reduces both to two sorted lookups.
    """
    event_t = np.asarray(event_t, dtype=float)
    event_y = np.asarray(event_y, dtype=float)
    query = np.asarray(query, dtype=float)
    ot = np.argsort(event_t, kind="stable")
    oy = np.argsort(event_y, kind="stable")
    at = np.searchsorted(event_t[ot], query, side="right")
    by = np.searchsorted(event_y[oy], query, side="left")
    count = (at - by).astype(float)
    if weights is None:
        return count
    w = np.asarray(weights, dtype=float).reshape(event_t.size, -1)
    zero = np.zeros((1, w.shape[1]))
    cw_t = np.vstack([zero, np.cumsum(w[ot], axis=0)])
    cw_y = np.vstack([zero, np.cumsum(w[oy], axis=0)])
    return count, cw_t[at] - cw_y[by]


def at_risk_sums(y, query, weights):
    """Sums of ``weights`` over subjects with ``y_j >= s`` for each query ``s``."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    w2 = w.reshape(y.size, -1)
    o = np.argsort(y, kind="stable")
    tail = np.vstack([np.cumsum(w2[o][::-1], axis=0)[::-1], np.zeros((1, w2.shape[1]))])
    idx = np.searchsorted(y[o], np.asarray(query, dtype=float), side="left")
    out = tail[idx]
    return out if w.ndim > 1 else out[:, 0]


def default_workers() -> int:
    env = os.environ.get("RECUR_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, (os.cpu_count() or 2) // 2)


def parallel_map(func, items, workers: int = 1):
    """Order-preserving map; a process pool is used when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items))
