"""Nearest-neighbor data association of corner events into tracks.

Each incoming corner joins the live track whose last detection is nearest
within a spatial radius and a temporal window, otherwise it starts a new
track.  Association is greedy and deterministic: ties break by smallest
distance, then oldest track.  A per-cell spatial hash keeps lookups O(1)
amortized at sensor scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_RADIUS_PX = 3.0
DEFAULT_WINDOW_US = 10_000


@dataclass
class Track:
    id: int
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    ts: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    @property
    def birth_us(self) -> int:
        return self.ts[0]

    @property
    def last_us(self) -> int:
        return self.ts[-1]

    @property
    def lifetime_us(self) -> int:
        return self.ts[-1] - self.ts[0]

    def __len__(self) -> int:
        return len(self.ts)

    def append(self, x, y, t, score) -> None:
        self.xs.append(x)
        self.ys.append(y)
        self.ts.append(t)
        self.scores.append(score)

    def points(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys]).astype(np.float64)


def track(corners: np.ndarray, radius_px: float = DEFAULT_RADIUS_PX,
          window_us: int = DEFAULT_WINDOW_US) -> list[Track]:
    """Associate time-ordered corner events into tracks."""
    cell = max(1, int(math.ceil(radius_px)))
    grid: dict[tuple[int, int], list[Track]] = {}
    tracks: list[Track] = []
    for c in corners:
        x, y, t = float(c["x"]), float(c["y"]), int(c["t"])
        score = float(c["score"])
        cx, cy = int(x) // cell, int(y) // cell
        best = None
        for gx in range(cx - 1, cx + 2):
            for gy in range(cy - 1, cy + 2):
                bucket = grid.get((gx, gy))
                if not bucket:
                    continue
                live = []
                for tr in bucket:
                    if t - tr.last_us > window_us:
                        continue  # dead here; dropped lazily below
                    live.append(tr)
                    if tr.last_us == t:
                        continue  # one detection per track per timestamp
                    d = math.hypot(tr.xs[-1] - x, tr.ys[-1] - y)
                    if d <= radius_px:
                        key = (d, tr.birth_us, tr.id)
                        if best is None or key < best[0]:
                            best = (key, tr)
                if len(live) < len(bucket):
                    grid[(gx, gy)] = live
        if best is None:
            tr = Track(id=len(tracks))
            tracks.append(tr)
            grid.setdefault((cx, cy), []).append(tr)
        else:
            tr = best[1]
            old = (int(tr.xs[-1]) // cell, int(tr.ys[-1]) // cell)
            if old != (cx, cy):
                grid[old].remove(tr)
                grid.setdefault((cx, cy), []).append(tr)
        tr.append(x, y, t, score)
    return tracks


def lifetimes(tracks: list[Track], first_k: int = 100) -> dict:
    """Mean lifetime of the first first_k tracks ordered by birth time."""
    ordered = sorted(tracks, key=lambda tr: (tr.birth_us, tr.id))[:first_k]
    if not ordered:
        return {"mean_lifetime_us": 0.0, "n_tracks": 0, "truncated": True}
    return {
        "mean_lifetime_us": float(np.mean([tr.lifetime_us for tr in ordered])),
        "n_tracks": len(ordered),
        "truncated": len(tracks) < first_k,
    }


def write_tracks(tracks: list[Track], path) -> None:
    with open(path, "w") as fh:
        for tr in tracks:
            for x, y, t, s in zip(tr.xs, tr.ys, tr.ts, tr.scores):
                fh.write(f"{tr.id},{x:g},{y:g},{t},{s:.6f}\n")


def read_tracks(path) -> list[Track]:
    by_id: dict[int, Track] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            tid_s, x, y, t, s = line.split(",")
            tid = int(tid_s)
            tr = by_id.setdefault(tid, Track(id=tid))
            tr.append(float(x), float(y), int(t), float(s))
    return [by_id[k] for k in sorted(by_id)]
