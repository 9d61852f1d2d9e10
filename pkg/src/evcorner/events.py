"""Event data model, stream I/O and the trail filter.

Streams are numpy structured arrays with dtype ``EVENT_DTYPE``; timestamps
are microseconds, polarity is -1 or +1.  Two on-disk formats are supported:

* csv: header-less ``x,y,t,p`` lines with p encoded as {0,1}
* binary: little-endian records (u16 x, u16 y, u64 t, i8 p), p stored as -1/+1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StreamFormatError, StreamOrderError
from ._kernels import trail_filter_kernel

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1")])

DEFAULT_TRAIL_US = 10_000


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid sensor geometry {self.width}x{self.height}")

    def contains(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


def make_events(x, y, t, p) -> np.ndarray:
    """Assemble an event array from per-field sequences."""
    x = np.asarray(x)
    y = np.asarray(y)
    t = np.asarray(t)
    p = np.asarray(p)
    ev = np.empty(len(x), dtype=EVENT_DTYPE)
    ev["x"], ev["y"], ev["t"], ev["p"] = x, y, t, p
    return ev


def validate_events(events: np.ndarray, geometry: SensorGeometry | None = None,
                    strict_order: bool = True) -> None:
    """Raise if the stream violates the event invariants."""
    if len(events) == 0:
        return
    bad = np.flatnonzero((events["p"] != 1) & (events["p"] != -1))
    if bad.size:
        raise StreamFormatError(f"record {bad[0]}: polarity {events['p'][bad[0]]} not in {{-1,1}}")
    if geometry is not None:
        oob = np.flatnonzero((events["x"] >= geometry.width) | (events["y"] >= geometry.height))
        if oob.size:
            i = oob[0]
            raise StreamFormatError(
                f"record {i}: event ({events['x'][i]},{events['y'][i]}) outside "
                f"{geometry.width}x{geometry.height} sensor")
    if strict_order:
        drops = np.flatnonzero(np.diff(events["t"].astype(np.int64)) < 0)
        if drops.size:
            raise StreamOrderError(f"timestamp decreases at record {drops[0] + 1}")


def _sort_events(events: np.ndarray) -> np.ndarray:
    order = np.argsort(events["t"], kind="stable")
    return events[order]


def read_events(path, format: str = "csv", sort: bool = False,
                geometry: SensorGeometry | None = None) -> np.ndarray:
    """Read an event stream; rejects non-monotonic streams unless sort=True."""
    if format == "csv":
        events = _read_csv(path)
    elif format == "binary":
        events = _read_binary(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    if sort:
        events = _sort_events(events)
    validate_events(events, geometry=geometry, strict_order=not sort)
    return events


def _read_csv(path) -> np.ndarray:
    try:
        import warnings
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="loadtxt: input contained no data")
            raw = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError:
        _locate_csv_error(path)
        raise  # unreachable: _locate_csv_error always raises
    if raw.size == 0:
        return np.empty(0, dtype=EVENT_DTYPE)
    if raw.shape[1] != 4:
        raise StreamFormatError(f"{path}: expected 4 columns, got {raw.shape[1]}")
    x, y, t, p01 = raw.T
    if np.any((p01 != 0) & (p01 != 1)):
        i = int(np.flatnonzero((p01 != 0) & (p01 != 1))[0])
        raise StreamFormatError(f"{path}:{i + 1}: polarity {p01[i]} not in {{0,1}}")
    if np.any(x < 0) or np.any(y < 0) or np.any(t < 0):
        i = int(np.flatnonzero((x < 0) | (y < 0) | (t < 0))[0])
        raise StreamFormatError(f"{path}:{i + 1}: negative field")
    return make_events(x, y, t, 2 * p01 - 1)


def _locate_csv_error(path) -> None:
    """Re-scan a CSV that failed bulk parsing to report the offending line."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise StreamFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                [int(v) for v in parts]
            except ValueError:
                raise StreamFormatError(f"{path}:{lineno}: non-integer field in {line!r}") from None
    raise StreamFormatError(f"{path}: unparseable CSV")


def _read_binary(path) -> np.ndarray:
    data = np.fromfile(path, dtype=EVENT_DTYPE)
    validate_events(data, strict_order=False)
    return data


def write_events(events: np.ndarray, path, format: str = "csv") -> None:
    """Write a stream; read(write(s)) round-trips bit-exactly."""
    validate_events(events, strict_order=False)
    if format == "csv":
        cols = np.column_stack([
            events["x"].astype(np.int64),
            events["y"].astype(np.int64),
            events["t"].astype(np.int64),
            ((events["p"].astype(np.int64) + 1) // 2),
        ])
        np.savetxt(path, cols, fmt="%d", delimiter=",")
    elif format == "binary":
        np.asarray(events, dtype=EVENT_DTYPE).tofile(path)
    else:
        raise ValueError(f"unknown format {format!r}")


def trail_filter(events: np.ndarray, geometry: SensorGeometry,
                 trail_us: int = DEFAULT_TRAIL_US) -> np.ndarray:
    """Suppress repeated same-polarity events from a single contrast step.

    An event is kept iff it is the first at its pixel, its polarity differs
    from the last kept event there, or at least trail_us elapsed since the
    last kept event there.
    """
    mask = trail_filter_mask(events, geometry, trail_us)
    return events[mask]


def trail_filter_mask(events: np.ndarray, geometry: SensorGeometry,
                      trail_us: int = DEFAULT_TRAIL_US) -> np.ndarray:
    """Boolean keep-mask version of trail_filter (preserves source indices)."""
    last_p = np.zeros((geometry.height, geometry.width), dtype=np.int8)
    last_t = np.zeros((geometry.height, geometry.width), dtype=np.int64)
    mask = np.empty(len(events), dtype=np.bool_)
    trail_filter_kernel(
        events["x"].astype(np.int64), events["y"].astype(np.int64),
        events["t"].astype(np.int64), events["p"].astype(np.int64),
        last_p, last_t, int(trail_us), mask)
    return mask
