import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evcorner.errors import StreamFormatError, StreamOrderError
from evcorner.events import (EVENT_DTYPE, SensorGeometry, make_events,
                             read_events, trail_filter, trail_filter_mask,
                             write_events)

from oracles import random_events, trail_reference

GEO = SensorGeometry(64, 64)


def test_csv_line_maps_to_event(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("10,20,1000,1\n")
    ev = read_events(path)
    assert len(ev) == 1
    assert (ev["x"][0], ev["y"][0], ev["t"][0], ev["p"][0]) == (10, 20, 1000, 1)


def test_csv_zero_polarity_maps_to_minus_one(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("3,4,5,0\n")
    assert read_events(path)["p"][0] == -1


def test_empty_file_gives_empty_stream(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("")
    ev = read_events(path)
    assert len(ev) == 0
    assert ev.dtype == EVENT_DTYPE


def test_bad_polarity_rejected(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("10,20,1000,2\n")
    with pytest.raises(StreamFormatError):
        read_events(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1,2,3,1\n1,2,oops,1\n")
    with pytest.raises(StreamFormatError, match=":2:"):
        read_events(path)


def test_wrong_field_count_rejected(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1,2,3\n")
    with pytest.raises(StreamFormatError):
        read_events(path)


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_roundtrip_identity(tmp_path, rng, fmt):
    ev = random_events(rng, 1000, GEO.width, GEO.height)
    path = tmp_path / f"e.{fmt}"
    write_events(ev, path, format=fmt)
    back = read_events(path, format=fmt)
    assert np.array_equal(ev, back)


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_roundtrip_empty(tmp_path, fmt):
    path = tmp_path / f"e.{fmt}"
    write_events(np.empty(0, dtype=EVENT_DTYPE), path, format=fmt)
    assert len(read_events(path, format=fmt)) == 0


def test_write_unwritable_path(rng):
    ev = random_events(rng, 10, 8, 8)
    with pytest.raises(OSError):
        write_events(ev, "/nonexistent-dir/e.csv")


def test_nonmonotonic_rejected_by_default(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1,1,100,1\n1,1,50,1\n")
    with pytest.raises(StreamOrderError):
        read_events(path)


def test_sort_flag_stable_sorts(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1,1,100,1\n2,2,50,1\n3,3,100,0\n")
    ev = read_events(path, sort=True)
    assert list(ev["t"]) == [50, 100, 100]
    assert list(ev["x"]) == [2, 1, 3]  # stable on ties


def test_trail_same_polarity_burst():
    ev = make_events([5, 5, 5], [5, 5, 5], [0, 10, 20], [1, 1, 1])
    out = trail_filter(ev, GEO, trail_us=10_000)
    assert len(out) == 1 and out["t"][0] == 0


def test_trail_polarity_change_always_passes():
    ev = make_events([5] * 6, [5] * 6, range(6), [1, -1, 1, -1, 1, -1])
    out = trail_filter(ev, GEO, trail_us=10_000)
    assert len(out) == 6


def test_trail_timeout_passes():
    ev = make_events([5, 5], [5, 5], [0, 20_000], [1, 1])
    out = trail_filter(ev, GEO, trail_us=10_000)
    assert len(out) == 2


def test_trail_matches_reference(rng):
    ev = random_events(rng, 5000, 16, 16, max_dt=400)
    mask = trail_filter_mask(ev, SensorGeometry(16, 16), trail_us=1000)
    assert np.array_equal(mask, trail_reference(ev, 1000))


@settings(deadline=None, max_examples=50)
@given(seed=st.integers(0, 10_000), tau=st.sampled_from([0, 100, 5000]))
def test_trail_idempotent_and_subsequence(seed, tau):
    ev = random_events(np.random.default_rng(seed), 300, 8, 8, max_dt=300)
    once = trail_filter(ev, SensorGeometry(8, 8), trail_us=tau)
    twice = trail_filter(once, SensorGeometry(8, 8), trail_us=tau)
    assert np.array_equal(once, twice)
    # subsequence: every kept event appears in the input in order
    mask = trail_filter_mask(ev, SensorGeometry(8, 8), trail_us=tau)
    assert np.array_equal(ev[mask], once)
