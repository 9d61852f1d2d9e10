"""Time surfaces: standard last-timestamp map, the speed invariant surface,
the sorted-normalization baseline, and patch extraction.

Both surfaces keep one value per pixel and polarity.  Channel 0 holds
polarity -1, channel 1 polarity +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvcornerError
from .events import SensorGeometry
from ._kernels import sits_update_stream, sits_update_checked

DEFAULT_RADIUS = 6
DEFAULT_PATCH_SIZE = 8


class BoundsError(EvcornerError):
    """Event outside the declared sensor geometry."""


def polarity_channel(p: int) -> int:
    return 0 if p < 0 else 1


@dataclass
class Patch:
    """A square window of surface values centered on an event location."""
    values: np.ndarray  # (n, n), row-major
    center: tuple[int, int]
    polarity: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1).astype(np.float64)


class TimeSurface:
    """Per-pixel, per-polarity timestamp of the most recent event.

    Unset cells hold the sentinel 0.
    """

    def __init__(self, geometry: SensorGeometry):
        self.geometry = geometry
        self.values = np.zeros((2, geometry.height, geometry.width), dtype=np.int64)

    def update(self, x: int, y: int, t: int, p: int) -> None:
        if not self.geometry.contains(x, y):
            raise BoundsError(f"event ({x},{y}) outside {self.geometry}")
        self.values[polarity_channel(p), y, x] = t

    def update_all(self, events: np.ndarray) -> None:
        for e in events:
            self.update(int(e["x"]), int(e["y"]), int(e["t"]), int(e["p"]))


class SpeedInvariantSurface:
    """Bounded per-pixel activity surface updated per event.

    Each incoming event sets its own cell to (2r+1)^2 and decrements every
    neighborhood cell whose value is >= the center's pre-update value.  The
    resulting local profile around a moving contour does not depend on the
    contour's speed.  Decrements are clamped at 0 by default so values stay
    in [0, (2r+1)^2]; clamp=False reproduces the unclamped update for
    debugging.
    """

    def __init__(self, geometry: SensorGeometry, radius: int = DEFAULT_RADIUS,
                 clamp: bool = True):
        if radius < 1:
            raise ValueError(f"radius must be >= 1, got {radius}")
        self.geometry = geometry
        self.radius = radius
        self.clamp = clamp
        self.values = np.zeros((2, geometry.height, geometry.width), dtype=np.int16)

    @property
    def max_value(self) -> int:
        return (2 * self.radius + 1) ** 2

    def update(self, x: int, y: int, p: int) -> None:
        if not self.geometry.contains(x, y):
            raise BoundsError(f"event ({x},{y}) outside {self.geometry}")
        xs = np.array([x], dtype=np.int64)
        ys = np.array([y], dtype=np.int64)
        ps = np.array([p], dtype=np.int64)
        sits_update_stream(self.values, xs, ys, ps, self.radius, self.clamp)

    def update_all(self, events: np.ndarray) -> None:
        if len(events) == 0:
            return
        x, y = events["x"], events["y"]
        if x.max() >= self.geometry.width or y.max() >= self.geometry.height:
            raise BoundsError("event outside sensor geometry")
        sits_update_stream(self.values, x.astype(np.int64), y.astype(np.int64),
                           events["p"].astype(np.int64), self.radius, self.clamp)

    def update_all_checked(self, events: np.ndarray) -> int:
        """update_all verifying boundedness and freshness after every event.

        Returns -1, or the index of the first event whose neighborhood
        violates S in [0, (2r+1)^2] or whose own cell is not (2r+1)^2.
        """
        if len(events) == 0:
            return -1
        return int(sits_update_checked(
            self.values, events["x"].astype(np.int64), events["y"].astype(np.int64),
            events["p"].astype(np.int64), self.radius, self.clamp))

    def channel(self, p: int) -> np.ndarray:
        return self.values[polarity_channel(p)]


def patch_window(x: int, y: int, n: int) -> tuple[int, int, int, int]:
    """Window bounds (x0, x1, y0, y1), half-open, for an n-sized patch.

    For even n the window extends one cell further on the high side, e.g.
    n=8 covers columns x-3 .. x+4 with the event at local index (3, 3).
    """
    lo = (n - 1) // 2
    return x - lo, x + n - lo, y - lo, y + n - lo


def _clipped_window(values: np.ndarray, x: int, y: int, n: int,
                    fill: float = 0.0) -> np.ndarray:
    h, w = values.shape
    x0, x1, y0, y1 = patch_window(x, y, n)
    out = np.full((n, n), fill, dtype=values.dtype)
    sx0, sx1 = max(x0, 0), min(x1, w)
    sy0, sy1 = max(y0, 0), min(y1, h)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = values[sy0:sy1, sx0:sx1]
    return out


def extract_patch(surface: SpeedInvariantSurface, x: int, y: int, p: int,
                  n: int = DEFAULT_PATCH_SIZE) -> Patch:
    """n x n window of the event's own polarity channel; out-of-sensor cells 0."""
    win = _clipped_window(surface.channel(p), x, y, n)
    return Patch(values=win, center=(x, y), polarity=p)


def sorted_normalization(surface: TimeSurface, center: tuple[int, int], p: int,
                         n: int = DEFAULT_PATCH_SIZE,
                         rescale_max: float | None = (2 * DEFAULT_RADIUS + 1) ** 2) -> Patch:
    """Rank transform of the local timestamp window (baseline normalization).

    Each cell is replaced by its rank among the window's values (ties share
    the lowest rank), rescaled to [0, rescale_max] for comparability with
    the speed invariant surface.  rescale_max=None returns raw ranks.
    """
    x, y = center
    win = _clipped_window(surface.values[polarity_channel(p)], x, y, n)
    flat = win.reshape(-1)
    # rank = number of strictly smaller values; ties share the lowest rank
    order = np.argsort(flat, kind="stable")
    sorted_vals = flat[order]
    ranks_sorted = np.searchsorted(sorted_vals, sorted_vals, side="left")
    ranks = np.empty_like(ranks_sorted)
    ranks[order] = ranks_sorted
    ranks = ranks.astype(np.float64)
    denom = flat.size - 1
    if rescale_max is not None and denom:
        ranks *= rescale_max / denom
    return Patch(values=ranks.reshape(n, n), center=center, polarity=p)


def dump_surface(surface, path) -> None:
    """Write each polarity channel as a plain-text grid (debug aid)."""
    with open(path, "w") as fh:
        for pi, name in ((0, "-1"), (1, "+1")):
            fh.write(f"# polarity {name}\n")
            np.savetxt(fh, surface.values[pi], fmt="%d")
