import math

import numpy as np

from ddpp import data


def stepwise_exhaustive_greedy(L, k, preselected=(), excluded=()):
    """Greedy by direct determinant evaluation at every step (slow, exact)."""
    chosen = list(preselected)
    picks, logdets = [], []
    blocked = set(excluded) | set(preselected)
    for _ in range(k):
        best, best_gain = None, -np.inf
        base = np.linalg.slogdet(L[np.ix_(chosen, chosen)])[1] if chosen else 0.0
        for i in range(L.shape[0]):
            if i in blocked or i in picks:
                continue
            trial = chosen + [i]
            sign, val = np.linalg.slogdet(L[np.ix_(trial, trial)])
            gain = val - base if sign > 0 else -np.inf
            if gain > best_gain + 1e-12:
                best, best_gain = i, gain
        if best is None or not math.isfinite(best_gain):
            break
        chosen.append(best)
        picks.append(best)
        logdets.append(np.linalg.slogdet(L[np.ix_(chosen, chosen)])[1])
    return picks, logdets


def small_dataset(seed, n_sources, dims=8, per_source=20, total_select=8):
    """Desk-scale benchmark-flavoured dataset for engine tests."""
    n = n_sources * per_source
    Z, labels = data.synth_gaussian_mixture(
        seed=seed, n=n, m=dims, n_clusters=max(2, dims // 4), spread=0.15,
        scale=8.0, radius_jitter=0.2, norm_tail=0.3)
    part = data.partition(n, n_sources, policy="uniform_random", seed=seed)
    ds = data.Dataset(features=Z, partition=part, labels=labels)
    return data.apply_positivity_scale(ds, total_select)
