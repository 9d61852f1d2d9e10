"""Independent reference implementations used as test oracles.

These deliberately stay close to the definitions (per-event window update,
exhaustive double-loop split scan) and share no code with the library's
optimized paths.
"""

import numpy as np


def sits_reference(events, width, height, r, clamp=True):
    """Definition-level replay of the speed invariant surface update."""
    big = (2 * r + 1) ** 2
    S = np.zeros((2, height, width), dtype=np.int64)
    for e in events:
        x, y, p = int(e["x"]), int(e["y"]), int(e["p"])
        pi = 0 if p < 0 else 1
        c = S[pi, y, x]
        y0, y1 = max(0, y - r), min(height - 1, y + r)
        x0, x1 = max(0, x - r), min(width - 1, x + r)
        win = S[pi, y0:y1 + 1, x0:x1 + 1]
        win[win >= c] -= 1
        if clamp:
            win[win < 0] = 0
        S[pi, y, x] = big
    return S


def gini_weighted(y, mask_left):
    """Weighted child Gini impurity of a boolean split."""
    n = len(y)
    nl = int(mask_left.sum())
    nr = n - nl
    if nl == 0 or nr == 0:
        return None
    pl = int(y[mask_left].sum()) / nl
    pr = int(y[~mask_left].sum()) / nr
    gl = 2.0 * pl * (1.0 - pl)
    gr = 2.0 * pr * (1.0 - pr)
    return (nl * gl + nr * gr) / n


def brute_force_split(X, y):
    """Exhaustive scan over every (feature, midpoint threshold) pair.

    Returns (impurity, k, th) with ties broken by lowest k, then lowest th,
    or None when no feature admits a split.
    """
    best = None
    for k in range(X.shape[1]):
        vals = np.unique(X[:, k])
        for a, b in zip(vals[:-1], vals[1:]):
            th = (a + b) / 2.0
            imp = gini_weighted(y, X[:, k] < th)
            if imp is None:
                continue
            if best is None or imp < best[0]:
                best = (imp, k, th)
    return best


def trail_reference(events, trail_us):
    """Direct dictionary-based trail filter used to cross-check the kernel."""
    state = {}
    keep = []
    for i, e in enumerate(events):
        key = (int(e["x"]), int(e["y"]))
        t, p = int(e["t"]), int(e["p"])
        prev = state.get(key)
        ok = prev is None or p != prev[0] or t - prev[1] >= trail_us
        keep.append(ok)
        if ok:
            state[key] = (p, t)
    return np.array(keep, dtype=bool)


def random_events(rng, n, width, height, max_dt=200):
    """Random valid event stream with non-decreasing timestamps."""
    from evcorner.events import make_events
    t = np.cumsum(rng.integers(0, max_dt, size=n))
    return make_events(
        rng.integers(0, width, size=n),
        rng.integers(0, height, size=n),
        t,
        rng.choice([-1, 1], size=n))
