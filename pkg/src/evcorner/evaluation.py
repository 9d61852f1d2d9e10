"""Planar evaluation: RANSAC homography between track snapshots and the
reprojection-error / valid-track statistics.

Correspondences are built from the last detection of each track inside a
short window before two timestamps t1 < t2.  Points at t2 are mapped back
to t1 through a homography (RANSAC-estimated, or the ground-truth relative
homography when the simulator trajectory is available) and compared to the
t1 points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InsufficientDataError
from .simulator import Trajectory, project_points
from .tracker import Track

DEFAULT_WINDOW_US = 5_000
DEFAULT_INLIER_TOL = 2.0
DEFAULT_ITERATIONS = 1000
DEFAULT_CADENCE_US = 100_000
DEFAULT_VALID_THRESHOLD_PX = 5.0


def normalize_points(pts: np.ndarray):
    """Hartley normalization: centroid 0, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[s, 0, -s * c[0]],
                  [0, s, -s * c[1]],
                  [0, 0, 1.0]])
    return (pts - c) * s, T


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT estimate of H with src -> dst, >= 4 correspondences."""
    if len(src) < 4:
        raise InsufficientDataError(f"need >= 4 correspondences, got {len(src)}")
    sn, Ts = normalize_points(src)
    dn, Td = normalize_points(dst)
    n = len(src)
    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2] = np.column_stack([x, y, np.ones(n), np.zeros((n, 3)), -u * x, -u * y, -u])
    A[1::2] = np.column_stack([np.zeros((n, 3)), x, y, np.ones(n), -v * x, -v * y, -v])
    _, sv, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12 or abs(np.linalg.det(H)) < 1e-12:
        raise EstimationError("degenerate homography")
    return H / H[2, 2]


def symmetric_transfer_error(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    fwd = project_points(H, src) - dst
    bwd = project_points(np.linalg.inv(H), dst) - src
    return np.sqrt((fwd ** 2).sum(axis=1) + (bwd ** 2).sum(axis=1))


def _collinear(pts: np.ndarray, eps: float = 1e-6) -> bool:
    # any 3 of the 4 points with (near-)zero triangle area
    for i in range(4):
        q = np.delete(pts, i, axis=0)
        a, b = q[1] - q[0], q[2] - q[0]
        area = abs(a[0] * b[1] - a[1] * b[0])
        if area < eps:
            return True
    return False


def ransac_homography(src: np.ndarray, dst: np.ndarray,
                      inlier_tol: float = DEFAULT_INLIER_TOL,
                      iterations: int = DEFAULT_ITERATIONS,
                      seed: int = 0, min_inliers: int = 4):
    """Robust homography src -> dst.  Returns (H, inlier mask).

    Minimal 4-point DLT hypotheses scored by symmetric transfer distance;
    the best model is refit on its inliers with the full normalized DLT.
    Deterministic given the seed.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4:
        raise InsufficientDataError(f"need >= 4 correspondences, got {len(src)}")
    rng = np.random.default_rng(seed)
    n = len(src)
    best_mask = None
    best_count = 0
    for _ in range(iterations):
        pick = rng.choice(n, size=4, replace=False)
        if _collinear(src[pick]) or _collinear(dst[pick]):
            continue
        try:
            H = dlt_homography(src[pick], dst[pick])
        except EstimationError:
            continue
        err = symmetric_transfer_error(H, src, dst)
        mask = err <= inlier_tol
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < min_inliers:
        raise EstimationError(
            f"no model with >= {min_inliers} inliers in {iterations} iterations")
    H = dlt_homography(src[best_mask], dst[best_mask])
    # final consensus against the refit model
    mask = symmetric_transfer_error(H, src, dst) <= inlier_tol
    if int(mask.sum()) < min_inliers:
        mask = best_mask
        H = dlt_homography(src[best_mask], dst[best_mask])
    return H, mask


@dataclass
class Correspondence:
    track_id: int
    p1: tuple[float, float]
    p2: tuple[float, float]


def _last_in_window(tr: Track, t_us: int, window_us: int):
    ts = np.asarray(tr.ts)
    idx = np.flatnonzero((ts >= t_us - window_us) & (ts <= t_us))
    if idx.size == 0:
        return None
    i = int(idx[-1])
    return (tr.xs[i], tr.ys[i])


def snapshot_correspondences(tracks: list[Track], t1_us: int, t2_us: int,
                             window_us: int = DEFAULT_WINDOW_US) -> list[Correspondence]:
    """Tracks contributing their last detection inside both snapshot windows."""
    if t1_us >= t2_us:
        raise ValueError("need t1 < t2")
    out = []
    for tr in tracks:
        a = _last_in_window(tr, t1_us, window_us)
        b = _last_in_window(tr, t2_us, window_us)
        if a is not None and b is not None:
            out.append(Correspondence(tr.id, a, b))
    return out


def _inside_pattern(pts_sensor: np.ndarray, H_t: np.ndarray,
                    pattern_shape) -> np.ndarray:
    """Mask of sensor points whose preimage lies on the planar pattern."""
    pre = project_points(np.linalg.inv(H_t), pts_sensor)
    ph, pw = pattern_shape
    return ((pre[:, 0] >= 0) & (pre[:, 0] <= pw - 1)
            & (pre[:, 1] >= 0) & (pre[:, 1] <= ph - 1))


@dataclass
class ReportRow:
    dt_ms: float
    mean_error_px: float
    n_pairs: int
    n_tracks: int
    valid_pct: float


def evaluate_tracks(tracks: list[Track], dt_grid_us,
                    trajectory: Trajectory | None = None,
                    pattern_shape=None,
                    window_us: int = DEFAULT_WINDOW_US,
                    cadence_us: int = DEFAULT_CADENCE_US,
                    inlier_tol: float = DEFAULT_INLIER_TOL,
                    iterations: int = DEFAULT_ITERATIONS,
                    seed: int = 0,
                    valid_threshold_px: float = DEFAULT_VALID_THRESHOLD_PX) -> list[ReportRow]:
    """Reprojection-error report over a grid of time offsets.

    With a trajectory, points are mapped t2 -> t1 through the ground-truth
    relative homography; otherwise the homography is RANSAC-estimated from
    the correspondences themselves.  Snapshot pairs are sampled every
    cadence_us; pairs whose estimation fails are skipped.
    """
    if not tracks:
        return [ReportRow(dt / 1000.0, float("nan"), 0, 0, 0.0) for dt in dt_grid_us]
    t_min = min(tr.birth_us for tr in tracks)
    t_max = max(tr.last_us for tr in tracks)
    rows = []
    for dt in dt_grid_us:
        errors = []
        track_errs: dict[int, list[float]] = {}
        n_pairs = 0
        t1 = t_min + window_us
        while t1 + dt <= t_max:
            t2 = t1 + dt
            corr = snapshot_correspondences(tracks, t1, t2, window_us)
            if len(corr) >= 4:
                p1 = np.array([c.p1 for c in corr])
                p2 = np.array([c.p2 for c in corr])
                keep = np.ones(len(corr), dtype=bool)
                try:
                    if trajectory is not None:
                        H = trajectory.relative(t1, t2)
                        if pattern_shape is not None:
                            keep = (_inside_pattern(p1, trajectory(t1), pattern_shape)
                                    & _inside_pattern(p2, trajectory(t2), pattern_shape))
                    else:
                        H, _ = ransac_homography(p2, p1, inlier_tol, iterations, seed)
                    if keep.any():
                        err = np.linalg.norm(project_points(H, p2) - p1, axis=1)
                        errors.extend(err[keep])
                        for c, e, k in zip(corr, err, keep):
                            if k:
                                track_errs.setdefault(c.track_id, []).append(float(e))
                        n_pairs += 1
                except EstimationError:
                    pass
            t1 += cadence_us
        per_track = [float(np.mean(v)) for v in track_errs.values()]
        valid = (100.0 * np.mean([e < valid_threshold_px for e in per_track])
                 if per_track else 0.0)
        rows.append(ReportRow(
            dt_ms=dt / 1000.0,
            mean_error_px=float(np.mean(errors)) if errors else float("nan"),
            n_pairs=n_pairs,
            n_tracks=len(track_errs),
            valid_pct=float(valid)))
    return rows


def valid_track_fraction(per_track_errors: dict[int, float],
                         threshold_px: float = DEFAULT_VALID_THRESHOLD_PX) -> float:
    """Percentage of tracks whose mean reprojection error is below threshold."""
    if not per_track_errors:
        return 0.0
    vals = np.array(list(per_track_errors.values()))
    return float(100.0 * np.mean(vals < threshold_px))


def write_report(rows: list[ReportRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("dt_ms,mean_error_px,n_pairs,n_tracks,valid_pct\n")
        for r in rows:
            fh.write(f"{r.dt_ms:g},{r.mean_error_px:.4f},{r.n_pairs},"
                     f"{r.n_tracks},{r.valid_pct:.2f}\n")
