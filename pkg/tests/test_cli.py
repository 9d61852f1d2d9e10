"""Command line smoke tests for every subcommand plus exit-code contracts."""

import json

import numpy as np
import pytest

from evcorner.cli import EXIT_CONFIG, EXIT_DATA, EXIT_FORMAT, EXIT_IO, main
from evcorner.detector import read_corners
from evcorner.events import read_events
from evcorner.tracker import read_tracks


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> train -> detect -> track over a small scene; returns paths."""
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "events": root / "events.csv",
        "labels": root / "labels.csv",
        "trajectory": root / "trajectory.csv",
        "model": root / "model.json",
        "corners": root / "corners.csv",
        "tracks": root / "tracks.csv",
        "root": root,
    }
    rc = main(["simulate", "--preset", "checkerboard-translate",
               "--duration-us", "400000", "--dt-us", "400",
               "--rows", "4", "--cols", "4",
               "--out-events", str(paths["events"]),
               "--out-labels", str(paths["labels"]),
               "--out-trajectory", str(paths["trajectory"])])
    assert rc == 0
    rc = main(["train", "--events", str(paths["events"]),
               "--labels", str(paths["labels"]),
               "--out-model", str(paths["model"]),
               "--trees", "5", "--seed", "3"])
    assert rc == 0
    rc = main(["detect", "--events", str(paths["events"]),
               "--model", str(paths["model"]),
               "--out", str(paths["corners"])])
    assert rc == 0
    rc = main(["track", "--corners", str(paths["corners"]),
               "--out", str(paths["tracks"])])
    assert rc == 0
    return paths


class TestPipeline:
    def test_simulate_outputs(self, pipeline):
        events = read_events(pipeline["events"])
        assert len(events) > 10_000
        assert np.all(np.diff(events["t"].astype(np.int64)) >= 0)
        assert pipeline["labels"].stat().st_size > 0
        assert pipeline["trajectory"].read_text().startswith("# pattern ")

    def test_train_model_file(self, pipeline):
        model = json.loads(pipeline["model"].read_text())
        assert model["format"] == "evcorner-forest"
        assert len(model["trees"]) == 5
        assert model["metadata"]["patch_size"] == 8

    def test_detect_output(self, pipeline):
        corners = read_corners(pipeline["corners"])
        assert len(corners) > 0
        assert np.all((corners["score"] >= 0.5) & (corners["score"] <= 1.0))

    def test_track_output(self, pipeline):
        tracks = read_tracks(pipeline["tracks"])
        assert len(tracks) > 0

    def test_eval_with_trajectory(self, pipeline, capsys):
        report = pipeline["root"] / "report.csv"
        figure = pipeline["root"] / "report.png"
        rc = main(["eval", "--tracks", str(pipeline["tracks"]),
                   "--out-report", str(report),
                   "--trajectory", str(pipeline["trajectory"]),
                   "--dt-grid", "25,50", "--figure", str(figure)])
        assert rc == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "dt_ms,mean_error_px,n_pairs,n_tracks,valid_pct"
        assert len(lines) == 3
        assert figure.stat().st_size > 0
        assert "ground-truth H" in capsys.readouterr().out

    def test_eval_ransac_path(self, pipeline, capsys):
        report = pipeline["root"] / "report_ransac.csv"
        rc = main(["eval", "--tracks", str(pipeline["tracks"]),
                   "--out-report", str(report),
                   "--dt-grid", "50", "--iterations", "100"])
        assert rc == 0
        assert "RANSAC-estimated H" in capsys.readouterr().out

    def test_bench_json_line(self, pipeline, capsys):
        rc = main(["bench", "--events", str(pipeline["events"]),
                   "--model", str(pipeline["model"])])
        assert rc == 0
        line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert line["reference_mev_per_s"] == 1.61
        assert line["reference_real_time_factor"] == 3.53
        assert line["mev_per_s"] > 0

    def test_binary_format_roundtrip(self, pipeline, tmp_path):
        events_bin = tmp_path / "events.bin"
        rc = main(["simulate", "--preset", "edge-sweep",
                   "--duration-us", "100000", "--format", "binary",
                   "--out-events", str(events_bin)])
        assert rc == 0
        events = read_events(events_bin, format="binary")
        assert len(events) > 0


class TestFigures:
    def test_slope(self, tmp_path, capsys):
        out = tmp_path / "slope"
        rc = main(["figure", "slope", "--out-dir", str(out)])
        assert rc == 0
        assert (out / "slope.png").stat().st_size > 0
        assert (out / "slope_s_speed1.csv").exists()
        assert "identical across speeds: True" in capsys.readouterr().out

    def test_surfaces(self, tmp_path):
        out = tmp_path / "surfaces"
        rc = main(["figure", "surfaces", "--out-dir", str(out)])
        assert rc == 0
        assert (out / "surfaces.png").stat().st_size > 0
        assert (out / "surface_sits.csv").exists()

    def test_roc(self, pipeline):
        out = pipeline["root"] / "roc"
        rc = main(["figure", "roc", "--out-dir", str(out),
                   "--events", str(pipeline["events"]),
                   "--labels", str(pipeline["labels"]),
                   "--model", str(pipeline["model"])])
        assert rc == 0
        data = np.loadtxt(out / "roc.csv", delimiter=",", skiprows=1)
        assert data.shape[1] == 3
        assert (out / "roc.png").stat().st_size > 0


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["detect"])  # missing required arguments
        assert exc.value.code == 2

    def test_config_error(self, tmp_path):
        # simulate without a preset or scene file
        rc = main(["simulate", "--out-events", str(tmp_path / "e.csv")])
        assert rc == EXIT_CONFIG

    def test_surface_mismatch_is_config_error(self, pipeline, tmp_path):
        rc = main(["detect", "--events", str(pipeline["events"]),
                   "--model", str(pipeline["model"]),
                   "--surface", "ts", "--out", str(tmp_path / "c.csv")])
        assert rc == EXIT_CONFIG

    def test_missing_input_file_is_io_error(self, tmp_path):
        rc = main(["track", "--corners", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "t.csv")])
        assert rc == EXIT_IO

    def test_malformed_events_is_format_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,3\n")  # wrong column count
        rc = main(["detect", "--events", str(bad),
                   "--model", str(tmp_path / "irrelevant.json"),
                   "--out", str(tmp_path / "c.csv")])
        assert rc == EXIT_FORMAT

    def test_malformed_model_is_format_error(self, pipeline, tmp_path):
        bad = tmp_path / "model.json"
        bad.write_text("{\"format\": \"something-else\"}")
        rc = main(["detect", "--events", str(pipeline["events"]),
                   "--model", str(bad), "--out", str(tmp_path / "c.csv")])
        assert rc == EXIT_FORMAT

    def test_non_monotonic_stream_is_data_error(self, tmp_path):
        bad = tmp_path / "events.csv"
        bad.write_text("1,1,100,1\n1,1,50,1\n")
        rc = main(["train", "--events", str(bad),
                   "--labels", str(tmp_path / "labels.csv"),
                   "--out-model", str(tmp_path / "m.json")])
        assert rc == EXIT_DATA

    def test_edge_sweep_labels_is_data_error(self, tmp_path):
        # the edge scene has no corners, so labeling must fail loudly
        rc = main(["simulate", "--preset", "edge-sweep",
                   "--duration-us", "100000",
                   "--out-events", str(tmp_path / "e.csv"),
                   "--out-labels", str(tmp_path / "l.csv")])
        assert rc == EXIT_DATA
