"""Synthetic event-camera simulator with analytic corner ground truth.

Planar patterns move under a keyframed homography trajectory; events are
produced by log-intensity threshold crossings between finely spaced rendered
frames, with sub-step timestamp interpolation.  Parametric patterns
(checkerboard, step edge) carry their corner locations analytically, so
event labels need no image-based corner detector; a single-location Harris
test is kept as a fallback labeler for arbitrary image patterns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .errors import LabelingError, SceneError
from .events import EVENT_DTYPE, SensorGeometry, make_events

DEFAULT_CONTRAST = 0.15
DEFAULT_DT_US = 100
DEFAULT_D_POS = 2.0
DEFAULT_TAU_LABEL_US = 5_000

LABEL_DTYPE = np.dtype([("index", "<i8"), ("label", "i1"), ("distance", "<f8")])


class Trajectory:
    """Time-parameterized homography, linear in the matrix entries between
    keyframes and held constant outside the keyframed range."""

    def __init__(self, times_us, matrices):
        times = np.asarray(times_us, dtype=np.int64)
        mats = np.asarray(matrices, dtype=np.float64)
        if times.ndim != 1 or mats.shape != (len(times), 3, 3):
            raise SceneError("trajectory needs matching times and 3x3 matrices")
        if len(times) < 1 or np.any(np.diff(times) <= 0):
            raise SceneError("trajectory keyframe times must be strictly increasing")
        for i, H in enumerate(mats):
            if abs(np.linalg.det(H)) < 1e-12:
                raise SceneError(f"keyframe {i}: homography is singular")
        self.times = times
        self.matrices = mats

    def __call__(self, t_us) -> np.ndarray:
        t = float(t_us)
        times = self.times
        if t <= times[0]:
            H = self.matrices[0]
        elif t >= times[-1]:
            H = self.matrices[-1]
        else:
            j = int(np.searchsorted(times, t, side="right"))
            t0, t1 = times[j - 1], times[j]
            a = (t - t0) / (t1 - t0)
            H = (1 - a) * self.matrices[j - 1] + a * self.matrices[j]
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        if abs(np.linalg.det(H)) < 1e-12:
            raise SceneError(f"trajectory is singular at t={t_us}")
        return H

    def relative(self, t_ref, t_other) -> np.ndarray:
        """Homography mapping sensor points at t_other to sensor points at t_ref."""
        return self(t_ref) @ np.linalg.inv(self(t_other))

    def save(self, path, pattern_shape=None) -> None:
        with open(path, "w") as fh:
            if pattern_shape is not None:
                fh.write(f"# pattern {pattern_shape[1]} {pattern_shape[0]}\n")
            for t, H in zip(self.times, self.matrices):
                row = ",".join(repr(float(v)) for v in H.reshape(-1))
                fh.write(f"{int(t)},{row}\n")

    @classmethod
    def load(cls, path):
        times, mats = [], []
        pattern_shape = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if parts and parts[0] == "pattern":
                        pattern_shape = (int(parts[2]), int(parts[1]))
                    continue
                vals = line.split(",")
                if len(vals) != 10:
                    raise SceneError(f"{path}: bad trajectory row {line!r}")
                times.append(int(vals[0]))
                mats.append(np.array([float(v) for v in vals[1:]]).reshape(3, 3))
        traj = cls(times, mats)
        traj.pattern_shape = pattern_shape
        return traj


@dataclass
class ContrastModel:
    threshold: float = DEFAULT_CONTRAST  # log-intensity units, > 0
    noise_rate: float = 0.0              # background events / pixel / second

    def __post_init__(self):
        if self.threshold <= 0:
            raise SceneError("contrast threshold must be > 0")


@dataclass
class Scene:
    pattern: np.ndarray            # grayscale intensities in (0, 1]
    corners: np.ndarray            # (K, 2) pattern-frame corner points, may be empty
    trajectory: Trajectory         # pattern frame -> sensor frame
    duration_us: int
    geometry: SensorGeometry
    background: float = 0.5
    name: str = "scene"

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=np.float64)
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(-1, 2)
        if self.pattern.min() <= 0 or self.pattern.max() > 1:
            raise SceneError("pattern intensities must lie in (0, 1]")
        h, w = self.pattern.shape
        if self.corners.size and (
                np.any(self.corners[:, 0] < 0) or np.any(self.corners[:, 0] > w - 1)
                or np.any(self.corners[:, 1] < 0) or np.any(self.corners[:, 1] > h - 1)):
            raise SceneError("ground-truth corners must lie inside the pattern")


def checkerboard(rows: int, cols: int, square_px: int, dark: float = 0.2,
                 bright: float = 0.8):
    """Checkerboard pattern and its inner-corner ground truth points."""
    h, w = rows * square_px, cols * square_px
    ii, jj = np.meshgrid(np.arange(h) // square_px, np.arange(w) // square_px,
                         indexing="ij")
    pattern = np.where((ii + jj) % 2 == 0, bright, dark)
    corners = [(c * square_px - 0.5, r * square_px - 0.5)
               for r in range(1, rows) for c in range(1, cols)]
    return pattern, np.array(corners)


def step_edge(width: int, height: int, edge_x: int, dark: float = 0.2,
              bright: float = 0.8):
    """Vertical step edge (no corners)."""
    pattern = np.full((height, width), dark)
    pattern[:, edge_x:] = bright
    return pattern, np.empty((0, 2))


def render(scene: Scene, t_us) -> np.ndarray:
    """Pattern warped into the sensor frame at time t, bilinear sampling;
    pixels outside the pattern take the background intensity."""
    H = scene.trajectory(t_us)
    Hinv = np.linalg.inv(H)
    g = scene.geometry
    uu, vv = np.meshgrid(np.arange(g.width, dtype=np.float64),
                         np.arange(g.height, dtype=np.float64))
    denom = Hinv[2, 0] * uu + Hinv[2, 1] * vv + Hinv[2, 2]
    px = (Hinv[0, 0] * uu + Hinv[0, 1] * vv + Hinv[0, 2]) / denom
    py = (Hinv[1, 0] * uu + Hinv[1, 1] * vv + Hinv[1, 2]) / denom
    ph, pw = scene.pattern.shape
    inside = (px >= 0) & (px <= pw - 1) & (py >= 0) & (py <= ph - 1)
    x0 = np.clip(np.floor(px).astype(np.int64), 0, pw - 2)
    y0 = np.clip(np.floor(py).astype(np.int64), 0, ph - 2)
    fx = np.clip(px - x0, 0.0, 1.0)
    fy = np.clip(py - y0, 0.0, 1.0)
    pat = scene.pattern
    val = ((1 - fy) * ((1 - fx) * pat[y0, x0] + fx * pat[y0, x0 + 1])
           + fy * ((1 - fx) * pat[y0 + 1, x0] + fx * pat[y0 + 1, x0 + 1]))
    return np.where(inside, val, scene.background)


def generate_events(scene: Scene, contrast: ContrastModel | None = None,
                    dt_us: int = DEFAULT_DT_US,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Threshold-crossing event generation by fine-step frame differencing.

    Per pixel, one event is emitted for every contrast-threshold multiple
    crossed between consecutive samples, with timestamps linearly
    interpolated inside the step.  Output is globally time-sorted with a
    deterministic (t, y, x) tie order.
    """
    if dt_us <= 0:
        raise SceneError("dt must be > 0")
    contrast = contrast or ContrastModel()
    C = contrast.threshold
    ref = np.log(render(scene, 0))
    prev = ref.copy()
    chunks = []
    g = scene.geometry
    steps = int(np.ceil(scene.duration_us / dt_us))
    if contrast.noise_rate > 0 and rng is None:
        rng = np.random.default_rng(0)
    for s in range(1, steps + 1):
        t1 = min(s * dt_us, scene.duration_us)
        t0 = (s - 1) * dt_us
        cur = np.log(render(scene, t1))
        d = cur - ref
        k = np.where(d >= 0, np.floor(d / C), -np.floor(-d / C)).astype(np.int64)
        ys, xs = np.nonzero(k)
        if len(ys):
            counts = np.abs(k[ys, xs])
            pol = np.sign(k[ys, xs]).astype(np.int8)
            total = int(counts.sum())
            rx = np.repeat(xs, counts)
            ry = np.repeat(ys, counts)
            rp = np.repeat(pol, counts)
            # per-pixel crossing index 1..|k|
            offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
            j = np.arange(total) - np.repeat(offsets, counts) + 1
            level = ref[ry, rx] + rp * j * C
            slope = cur[ry, rx] - prev[ry, rx]
            frac = np.where(np.abs(slope) > 1e-15,
                            (level - prev[ry, rx]) / slope, 1.0)
            frac = np.clip(frac, 0.0, 1.0)
            te = (t0 + frac * (t1 - t0)).astype(np.int64)
            order = np.lexsort((rx, ry, te))
            chunks.append(make_events(rx[order], ry[order], te[order], rp[order]))
            ref[ys, xs] += k[ys, xs] * C
        if contrast.noise_rate > 0:
            lam = contrast.noise_rate * g.width * g.height * (t1 - t0) * 1e-6
            n_noise = rng.poisson(lam)
            if n_noise:
                nx = rng.integers(0, g.width, n_noise)
                ny = rng.integers(0, g.height, n_noise)
                nt = rng.integers(t0, t1, n_noise)
                npol = rng.choice(np.array([-1, 1], dtype=np.int8), n_noise)
                order = np.lexsort((nx, ny, nt))
                chunks.append(make_events(nx[order], ny[order], nt[order], npol[order]))
        prev = cur
    if not chunks:
        return np.empty(0, dtype=EVENT_DTYPE)
    events = np.concatenate(chunks)
    order = np.argsort(events["t"], kind="stable")
    return events[order]


def project_points(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.column_stack([pts, np.ones(len(pts))])
    q = ph @ H.T
    return q[:, :2] / q[:, 2:3]


def label_events(events: np.ndarray, scene: Scene,
                 d_pos: float = DEFAULT_D_POS,
                 tau_label_us: int = DEFAULT_TAU_LABEL_US) -> np.ndarray:
    """Label events positive iff within d_pos pixels of a projected ground
    truth corner; corner positions are sampled every tau_label_us."""
    if scene.corners.size == 0:
        raise LabelingError(
            "scene has no analytic corners; use harris_labels on rendered frames")
    labels = np.zeros(len(events), dtype=LABEL_DTYPE)
    labels["index"] = np.arange(len(events))
    labels["distance"] = np.inf
    if len(events) == 0:
        return labels
    t = events["t"].astype(np.int64)
    bucket = np.rint(t / tau_label_us).astype(np.int64)
    pts = np.column_stack([events["x"], events["y"]]).astype(np.float64)
    for b in np.unique(bucket):
        sel = bucket == b
        H = scene.trajectory(b * tau_label_us)
        proj = project_points(H, scene.corners)
        dist, _ = cKDTree(proj).query(pts[sel])
        labels["distance"][sel] = dist
        labels["label"][sel] = dist <= d_pos
    return labels


def write_labels(labels: np.ndarray, path) -> None:
    np.savetxt(path, np.column_stack([labels["index"], labels["label"]]),
               fmt="%d", delimiter=",")


def read_labels(path) -> np.ndarray:
    raw = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    labels = np.zeros(len(raw), dtype=LABEL_DTYPE)
    if len(raw):
        labels["index"] = raw[:, 0]
        labels["label"] = raw[:, 1]
    return labels


def harris_response(frame: np.ndarray, sigma: float = 1.5,
                    k: float = 0.04) -> np.ndarray:
    """Harris corner response over a full frame (structure tensor with a
    Gaussian window)."""
    gy, gx = np.gradient(frame.astype(np.float64))
    ixx = gaussian_filter(gx * gx, sigma)
    iyy = gaussian_filter(gy * gy, sigma)
    ixy = gaussian_filter(gx * gy, sigma)
    det = ixx * iyy - ixy * ixy
    tr = ixx + iyy
    return det - k * tr * tr


def harris_labels(frame: np.ndarray, location, sigma: float = 1.5,
                  k: float = 0.04, threshold: float = 1e-6) -> bool:
    """Fallback labeler: Harris response at a single location exceeds the
    threshold."""
    x, y = int(round(location[0])), int(round(location[1]))
    if not (0 <= x < frame.shape[1] and 0 <= y < frame.shape[0]):
        raise SceneError(f"location ({x},{y}) outside frame")
    return bool(harris_response(frame, sigma, k)[y, x] > threshold)


# ---------------------------------------------------------------------------
# presets and scene files

def _translation(tx, ty):
    H = np.eye(3)
    H[0, 2] = tx
    H[1, 2] = ty
    return H


def _rotation_about(cx, cy, angle):
    c, s = np.cos(angle), np.sin(angle)
    T = _translation(cx, cy)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return T @ R @ np.linalg.inv(T)


def preset_scene(name: str, geometry: SensorGeometry | None = None,
                 duration_us: int = 1_000_000, square_px: int = 16,
                 rows: int = 6, cols: int = 6, phase: float = 0.0) -> Scene:
    """Built-in scenes: checkerboard-translate (with direction reversals),
    checkerboard-rotate (varying angular speed), edge-sweep."""
    geometry = geometry or SensorGeometry(128, 128)
    if name == "checkerboard-translate":
        pattern, corners = checkerboard(rows, cols, square_px)
        ph, pw = pattern.shape
        cx = (geometry.width - pw) / 2
        cy = (geometry.height - ph) / 2
        amp = max(4.0, (geometry.width - pw) / 2 - 2)
        n_legs = 4
        # triangle wave: direction reverses at every keyframe
        times = [i * duration_us // n_legs for i in range(n_legs + 1)]
        mats = [_translation(cx + (amp if (i + round(phase)) % 2 else -amp), cy)
                for i in range(n_legs + 1)]
        traj = Trajectory(times, mats)
        return Scene(pattern, corners, traj, duration_us, geometry, name=name)
    if name == "checkerboard-rotate":
        pattern, corners = checkerboard(rows, cols, square_px)
        ph, pw = pattern.shape
        cx = (geometry.width - pw) / 2
        cy = (geometry.height - ph) / 2
        T = _translation(cx, cy)
        # angular speed doubles each leg; dense keyframes keep the linear
        # matrix interpolation close to a true rotation
        times, mats = [], []
        n_key = 80
        angle = phase
        for i in range(n_key + 1):
            t = i * duration_us // n_key
            speedup = 1.0 + i / n_key
            angle += speedup * (np.pi / 2) / n_key
            times.append(t)
            mats.append(T @ _rotation_about(pw / 2, ph / 2, angle))
        times[0] = 0
        return Scene(pattern, corners, Trajectory(times, mats), duration_us,
                     geometry, name=name)
    if name == "edge-sweep":
        pattern, corners = step_edge(geometry.width * 3, geometry.height, geometry.width)
        start = -geometry.width - 8.0
        end = float(geometry.width + 8)
        traj = Trajectory([0, duration_us],
                          [_translation(start, 0), _translation(end - geometry.width, 0)])
        # background matches the dark side so the pattern boundary is invisible
        return Scene(pattern, corners, traj, duration_us, geometry,
                     background=0.2, name=name)
    raise SceneError(f"unknown preset {name!r}")


def scene_to_dict(scene: Scene, pattern_spec: dict | None = None) -> dict:
    doc = {
        "geometry": {"width": scene.geometry.width, "height": scene.geometry.height},
        "duration_us": scene.duration_us,
        "background": scene.background,
        "name": scene.name,
        "trajectory": [
            {"t_us": int(t), "H": H.tolist()}
            for t, H in zip(scene.trajectory.times, scene.trajectory.matrices)
        ],
    }
    if pattern_spec is not None:
        doc["pattern"] = pattern_spec
    else:
        doc["pattern"] = {"type": "image", "values": scene.pattern.tolist(),
                          "corners": scene.corners.tolist()}
    return doc


def scene_from_dict(doc: dict) -> Scene:
    try:
        g = SensorGeometry(doc["geometry"]["width"], doc["geometry"]["height"])
        spec = doc["pattern"]
        if spec["type"] == "checkerboard":
            pattern, corners = checkerboard(spec["rows"], spec["cols"], spec["square_px"])
        elif spec["type"] == "image":
            pattern = np.asarray(spec["values"], dtype=np.float64)
            corners = np.asarray(spec.get("corners", []), dtype=np.float64)
        else:
            raise SceneError(f"unknown pattern type {spec['type']!r}")
        traj = Trajectory([kf["t_us"] for kf in doc["trajectory"]],
                          [np.asarray(kf["H"]) for kf in doc["trajectory"]])
        return Scene(pattern, corners, traj, int(doc["duration_us"]), g,
                     background=float(doc.get("background", 0.5)),
                     name=doc.get("name", "scene"))
    except (KeyError, TypeError) as exc:
        raise SceneError(f"malformed scene description: {exc}") from exc


def load_scene(path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene: Scene, path, pattern_spec: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene, pattern_spec), fh, indent=1)
        fh.write("\n")
