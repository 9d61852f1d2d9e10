"""Numba kernels for the per-event hot path.

A dense HVGA-rate stream leaves roughly a microsecond of budget per event,
so the trail filter, surface update, patch extraction and tree traversal
are fused into single jitted loops operating on flat arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# surface_kind codes for patch features
KIND_SITS = 0
KIND_TS_AGE = 1


@njit(cache=True)
def trail_filter_kernel(xs, ys, ts, ps, last_p, last_t, tau, out_mask):
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        p = ps[i]
        t = ts[i]
        lp = last_p[y, x]
        keep = lp == 0 or p != lp or t - last_t[y, x] >= tau
        out_mask[i] = keep
        if keep:
            last_p[y, x] = p
            last_t[y, x] = t


@njit(cache=True, inline="always")
def _sits_apply(S, x, y, pi, r, big, clamp):
    # center value read once before any decrement; loop order irrelevant
    h = S.shape[1]
    w = S.shape[2]
    c = S[pi, y, x]
    y0 = max(0, y - r)
    y1 = min(h - 1, y + r)
    x0 = max(0, x - r)
    x1 = min(w - 1, x + r)
    for yy in range(y0, y1 + 1):
        for xx in range(x0, x1 + 1):
            v = S[pi, yy, xx]
            if v >= c:
                if clamp:
                    if v > 0:
                        S[pi, yy, xx] = v - 1
                else:
                    S[pi, yy, xx] = v - 1
    S[pi, y, x] = big


@njit(cache=True)
def sits_update_stream(S, xs, ys, ps, r, clamp):
    big = (2 * r + 1) * (2 * r + 1)
    for i in range(xs.shape[0]):
        pi = 0 if ps[i] < 0 else 1
        _sits_apply(S, xs[i], ys[i], pi, r, big, clamp)


@njit(cache=True)
def sits_update_checked(S, xs, ys, ps, r, clamp):
    """Stream update verifying the range and freshness invariants per event.

    Returns the index of the first violating event, or -1.  Only the touched
    neighborhood is rechecked; cells outside it cannot have changed.
    """
    big = (2 * r + 1) * (2 * r + 1)
    h = S.shape[1]
    w = S.shape[2]
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        pi = 0 if ps[i] < 0 else 1
        _sits_apply(S, x, y, pi, r, big, clamp)
        if S[pi, y, x] != big:
            return i
        y0 = max(0, y - r)
        y1 = min(h - 1, y + r)
        x0 = max(0, x - r)
        x1 = min(w - 1, x + r)
        for yy in range(y0, y1 + 1):
            for xx in range(x0, x1 + 1):
                v = S[pi, yy, xx]
                if v < 0 or v > big:
                    return i
    return -1


@njit(cache=True, inline="always")
def _fill_patch(patch, S, Tsurf, x, y, pi, t, r, n, kind):
    h = S.shape[1]
    w = S.shape[2]
    lo = (n - 1) // 2
    k = 0
    for dy in range(-lo, n - lo):
        yy = y + dy
        for dx in range(-lo, n - lo):
            xx = x + dx
            if 0 <= xx < w and 0 <= yy < h:
                if kind == KIND_SITS:
                    patch[k] = S[pi, yy, xx]
                else:
                    patch[k] = t - Tsurf[pi, yy, xx]
            else:
                patch[k] = 0.0
            k += 1


@njit(cache=True, inline="always")
def _forest_predict(patch, feat, thr, left, right, prob, roots):
    acc = 0.0
    for l in range(roots.shape[0]):
        node = roots[l]
        while feat[node] >= 0:
            if patch[feat[node]] < thr[node]:
                node = left[node]
            else:
                node = right[node]
        acc += prob[node]
    return acc / roots.shape[0]


@njit(cache=True)
def detect_kernel(xs, ys, ts, ps, S, Tsurf, last_p, last_t, tau, r, n, clamp,
                  kind, feat, thr, left, right, prob, roots, theta,
                  out_idx, out_score):
    """Fused trail filter -> surface update -> patch -> forest -> threshold.

    Writes accepted event indices and scores into out_idx/out_score and
    returns the number of accepted events.
    """
    big = (2 * r + 1) * (2 * r + 1)
    patch = np.empty(n * n, dtype=np.float64)
    count = 0
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        p = ps[i]
        t = ts[i]
        lp = last_p[y, x]
        if not (lp == 0 or p != lp or t - last_t[y, x] >= tau):
            continue
        last_p[y, x] = p
        last_t[y, x] = t
        pi = 0 if p < 0 else 1
        _sits_apply(S, x, y, pi, r, big, clamp)
        Tsurf[pi, y, x] = t
        _fill_patch(patch, S, Tsurf, x, y, pi, t, r, n, kind)
        score = _forest_predict(patch, feat, thr, left, right, prob, roots)
        if score >= theta:
            out_idx[count] = i
            out_score[count] = score
            count += 1
    return count


@njit(cache=True)
def collect_patches_kernel(xs, ys, ts, ps, S, Tsurf, last_p, last_t, tau,
                           r, n, clamp, kind, out_mask, out_patches):
    """Replay a stream, returning the post-update patch of every kept event."""
    big = (2 * r + 1) * (2 * r + 1)
    count = 0
    for i in range(xs.shape[0]):
        x = xs[i]
        y = ys[i]
        p = ps[i]
        t = ts[i]
        lp = last_p[y, x]
        keep = lp == 0 or p != lp or t - last_t[y, x] >= tau
        out_mask[i] = keep
        if not keep:
            continue
        last_p[y, x] = p
        last_t[y, x] = t
        pi = 0 if p < 0 else 1
        _sits_apply(S, x, y, pi, r, big, clamp)
        Tsurf[pi, y, x] = t
        _fill_patch(out_patches[count], S, Tsurf, x, y, pi, t, r, n, kind)
        count += 1
    return count
