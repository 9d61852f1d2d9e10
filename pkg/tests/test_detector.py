"""Streaming detector tests: threshold semantics, score correctness against
an offline replay, determinism, chunking, and detection quality on simulated
data with known corner labels."""

import numpy as np
import pytest

from evcorner.detector import (Detector, DetectorConfig, bench_throughput,
                               collect_patches, detect_stream, read_corners,
                               write_corners, CORNER_DTYPE)
from evcorner.errors import ConfigError
from evcorner.events import SensorGeometry, trail_filter_mask
from evcorner.forest import Forest, Tree


def _constant_forest(prob, n_features=64, metadata=None):
    tree = Tree(feature=np.array([-1], dtype=np.int32),
                threshold=np.array([0.0]),
                left=np.array([-1], dtype=np.int32),
                right=np.array([-1], dtype=np.int32),
                prob=np.array([prob]))
    return Forest(trees=[tree], n_features=n_features, metadata=metadata or {})


class TestThreshold:
    def test_zero_threshold_emits_all_filtered(self, sim_setup):
        events = sim_setup["held_events"][:20_000]
        geo = sim_setup["geometry"]
        config = DetectorConfig(threshold=0.0)
        corners = detect_stream(events, geo, sim_setup["forest_sits"], config)
        n_kept = int(trail_filter_mask(events, geo, config.trail_us).sum())
        assert len(corners) == n_kept

    def test_threshold_above_one_emits_nothing(self, sim_setup):
        events = sim_setup["held_events"][:20_000]
        config = DetectorConfig(threshold=1.0001)
        corners = detect_stream(events, sim_setup["geometry"],
                                sim_setup["forest_sits"], config)
        assert len(corners) == 0

    def test_constant_forest_boundary(self, sim_setup):
        # score == threshold passes (>= semantics)
        events = sim_setup["held_events"][:5_000]
        geo = sim_setup["geometry"]
        forest = _constant_forest(0.5)
        config = DetectorConfig(threshold=0.5)
        corners = detect_stream(events, geo, forest, config)
        n_kept = int(trail_filter_mask(events, geo, config.trail_us).sum())
        assert len(corners) == n_kept
        assert np.all(corners["score"] == 0.5)


class TestScores:
    @pytest.mark.parametrize("surface", ["sits", "ts"])
    def test_scores_match_offline_replay(self, sim_setup, surface):
        # the streaming kernel must agree exactly with collect_patches +
        # forest.predict_batch on the same stream
        events = sim_setup["held_events"][:30_000]
        geo = sim_setup["geometry"]
        forest = sim_setup[f"forest_{surface}"]
        config = DetectorConfig(threshold=0.0, surface=surface)
        corners = detect_stream(events, geo, forest, config)

        mask, patches = collect_patches(events, geo, config)
        expected = forest.predict_batch(patches)
        kept = events[mask]
        assert len(corners) == len(kept)
        assert np.array_equal(corners["x"], kept["x"])
        assert np.array_equal(corners["y"], kept["y"])
        assert np.array_equal(corners["t"], kept["t"])
        assert np.array_equal(corners["p"], kept["p"])
        assert np.array_equal(corners["score"], expected)

    def test_corners_are_time_ordered_subset(self, sim_setup):
        events = sim_setup["held_events"][:50_000]
        corners = detect_stream(events, sim_setup["geometry"],
                                sim_setup["forest_sits"], DetectorConfig())
        assert np.all(np.diff(corners["t"].astype(np.int64)) >= 0)
        # every corner is an event from the stream
        ev_keys = set(zip(events["x"].tolist(), events["y"].tolist(),
                          events["t"].tolist(), events["p"].tolist()))
        for c in corners[:200]:
            assert (c["x"], c["y"], c["t"], c["p"]) in ev_keys


class TestStatefulness:
    def test_chunked_equals_one_shot(self, sim_setup):
        events = sim_setup["held_events"][:40_000]
        geo = sim_setup["geometry"]
        forest = sim_setup["forest_sits"]
        whole = detect_stream(events, geo, forest, DetectorConfig())
        det = Detector(geo, forest, DetectorConfig())
        parts = [det.process(chunk) for chunk in
                 np.array_split(events, 7)]
        chunked = np.concatenate(parts)
        assert np.array_equal(whole, chunked)

    def test_deterministic(self, sim_setup):
        events = sim_setup["held_events"][:20_000]
        a = detect_stream(events, sim_setup["geometry"],
                          sim_setup["forest_sits"], DetectorConfig())
        b = detect_stream(events, sim_setup["geometry"],
                          sim_setup["forest_sits"], DetectorConfig())
        assert np.array_equal(a, b)


class TestConfigValidation:
    def test_feature_count_mismatch(self):
        geo = SensorGeometry(32, 32)
        forest = _constant_forest(0.5, n_features=49)
        with pytest.raises(ConfigError):
            Detector(geo, forest, DetectorConfig(patch_size=8))

    def test_metadata_patch_size_mismatch(self):
        geo = SensorGeometry(32, 32)
        forest = _constant_forest(0.5, n_features=64,
                                  metadata={"patch_size": 10})
        with pytest.raises(ConfigError):
            Detector(geo, forest, DetectorConfig(patch_size=8))

    def test_metadata_radius_mismatch(self):
        geo = SensorGeometry(32, 32)
        forest = _constant_forest(0.5, metadata={"patch_size": 8, "radius": 4})
        with pytest.raises(ConfigError):
            Detector(geo, forest, DetectorConfig(radius=6))

    def test_unknown_surface_kind(self):
        geo = SensorGeometry(32, 32)
        with pytest.raises(ConfigError):
            Detector(geo, _constant_forest(0.5),
                     DetectorConfig(surface="bogus"))


class TestQuality:
    def test_precision_beats_base_rate(self, sim_setup):
        # on held-out data the detector's hit rate among labeled corner
        # events must clearly exceed the stream's base corner rate
        events = sim_setup["held_events"]
        labels = sim_setup["held_labels"]
        geo = sim_setup["geometry"]
        forest = sim_setup["forest_sits"]
        config = DetectorConfig(threshold=0.5)

        truth = np.zeros(len(events), dtype=np.int64)
        truth[labels["index"]] = labels["label"]
        mask, patches = collect_patches(events, geo, config)
        y = truth[mask]
        scores = forest.predict_batch(patches)
        sel = scores >= config.threshold
        assert sel.sum() > 0
        precision = y[sel].mean()
        base_rate = y.mean()
        assert precision > 3.0 * base_rate
        # and it should recover a sizable share of true corner events
        recall = y[sel].sum() / max(y.sum(), 1)
        assert recall > 0.3


class TestBench:
    def test_bench_fields_and_sanity(self, sim_setup):
        events = sim_setup["held_events"][:100_000]
        result = bench_throughput(events, sim_setup["geometry"],
                                  sim_setup["forest_sits"])
        assert result["n_events"] == len(events)
        assert result["wall_s"] > 0
        assert result["events_per_s"] > 0
        assert result["real_time_factor"] > 0
        assert 0 <= result["n_corners"] <= result["n_events"]


class TestCornerIO:
    def test_roundtrip(self, tmp_path):
        corners = np.zeros(3, dtype=CORNER_DTYPE)
        corners["x"] = [1, 2, 3]
        corners["y"] = [4, 5, 6]
        corners["t"] = [10, 20, 30]
        corners["p"] = [1, -1, 1]
        corners["score"] = [0.5, 0.75, 1.0]
        path = tmp_path / "corners.csv"
        write_corners(corners, path)
        back = read_corners(path)
        assert np.array_equal(back, corners)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "corners.csv"
        write_corners(np.empty(0, dtype=CORNER_DTYPE), path)
        back = read_corners(path)
        assert len(back) == 0
        assert back.dtype == CORNER_DTYPE
