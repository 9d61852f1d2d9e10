"""Command line interface: simulate -> train -> detect -> track -> eval,
plus bench and figure export.

Exit codes: 0 success, 2 usage error (argparse), 3 incompatible
configuration, 4 file I/O error, 5 malformed input file, 6 data error
(ordering, estimation, training).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import detector as det_mod
from . import evaluation as eval_mod
from . import simulator as sim_mod
from . import tracker as trk_mod
from . import report as report_mod
from .errors import (ConfigError, EstimationError, EvcornerError,
                     InsufficientDataError, LabelingError, ModelFormatError,
                     SceneError, StreamFormatError, StreamOrderError,
                     TrainingError)
from .events import (DEFAULT_TRAIL_US, SensorGeometry, read_events,
                     trail_filter, write_events)
from .forest import Forest, ForestConfig, TreeConfig, load_model, save_model, train_forest
from .timesurface import (DEFAULT_PATCH_SIZE, DEFAULT_RADIUS,
                          SpeedInvariantSurface, TimeSurface, extract_patch,
                          sorted_normalization)

EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_FORMAT = 5
EXIT_DATA = 6


def _infer_geometry(events, width, height) -> SensorGeometry:
    if width and height:
        return SensorGeometry(width, height)
    if len(events) == 0:
        return SensorGeometry(width or 1, height or 1)
    return SensorGeometry(width or int(events["x"].max()) + 1,
                          height or int(events["y"].max()) + 1)


def _add_geometry_args(p):
    p.add_argument("--width", type=int, default=0,
                   help="sensor width in px (default: inferred from the stream)")
    p.add_argument("--height", type=int, default=0,
                   help="sensor height in px (default: inferred from the stream)")


def _add_surface_args(p):
    p.add_argument("--radius", type=int, default=DEFAULT_RADIUS,
                   help="surface update radius r (default 6)")
    p.add_argument("--patch-size", type=int, default=DEFAULT_PATCH_SIZE,
                   help="classifier patch side n (default 8)")
    p.add_argument("--trail-us", type=int, default=DEFAULT_TRAIL_US,
                   help="trail filter timeout in microseconds (default 10000)")
    p.add_argument("--surface", choices=["sits", "ts"], default="sits",
                   help="patch source: speed invariant surface or timestamp age")
    p.add_argument("--no-clamp", action="store_true",
                   help="debug: allow surface decrements below zero")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evcorner",
                                 description="Event-camera corner detection toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic labeled event stream")
    p.add_argument("--preset", choices=["checkerboard-translate", "checkerboard-rotate",
                                        "edge-sweep"], default=None)
    p.add_argument("--scene", type=Path, default=None, help="scene description JSON")
    p.add_argument("--out-events", type=Path, required=True)
    p.add_argument("--out-labels", type=Path, default=None)
    p.add_argument("--out-trajectory", type=Path, default=None)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--duration-us", type=int, default=1_000_000)
    p.add_argument("--dt-us", type=int, default=sim_mod.DEFAULT_DT_US,
                   help="simulation step (default 100)")
    p.add_argument("--contrast", type=float, default=sim_mod.DEFAULT_CONTRAST,
                   help="log-intensity threshold (default 0.15)")
    p.add_argument("--noise-rate", type=float, default=0.0,
                   help="background events / pixel / second")
    p.add_argument("--d-pos", type=float, default=sim_mod.DEFAULT_D_POS,
                   help="positive-label distance in px (default 2)")
    p.add_argument("--tau-label-us", type=int, default=sim_mod.DEFAULT_TAU_LABEL_US,
                   help="label sampling cadence (default 5000)")
    p.add_argument("--rows", type=int, default=6)
    p.add_argument("--cols", type=int, default=6)
    p.add_argument("--square-px", type=int, default=16)
    p.add_argument("--phase", type=float, default=0.0,
                   help="preset trajectory phase (varies the motion)")
    p.add_argument("--seed", type=int, default=0)
    _add_geometry_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a corner classifier from labeled events")
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--out-model", type=Path, required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--sort", action="store_true", help="stable-sort non-monotonic input")
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--min-samples", type=int, default=50)
    p.add_argument("--bootstrap-fraction", type=float, default=1.0)
    p.add_argument("--neg-ratio", type=float, default=2.0,
                   help="max negatives kept per positive (0 = keep all)")
    p.add_argument("--seed", type=int, default=0)
    _add_surface_args(p)
    _add_geometry_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run the corner detector over a stream")
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--sort", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="corner probability threshold (default 0.5)")
    _add_surface_args(p)
    _add_geometry_args(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="associate corner events into tracks")
    p.add_argument("--corners", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--radius", type=float, default=trk_mod.DEFAULT_RADIUS_PX,
                   help="association radius in px (default 3)")
    p.add_argument("--window-us", type=int, default=trk_mod.DEFAULT_WINDOW_US,
                   help="association window in microseconds (default 10000)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="homography reprojection-error report")
    p.add_argument("--tracks", type=Path, required=True)
    p.add_argument("--out-report", type=Path, required=True)
    p.add_argument("--trajectory", type=Path, default=None,
                   help="ground-truth trajectory file (otherwise RANSAC estimate)")
    p.add_argument("--dt-grid", default="25,50,100",
                   help="comma-separated homography offsets in ms")
    p.add_argument("--window-us", type=int, default=eval_mod.DEFAULT_WINDOW_US)
    p.add_argument("--cadence-us", type=int, default=eval_mod.DEFAULT_CADENCE_US)
    p.add_argument("--inlier-tol", type=float, default=eval_mod.DEFAULT_INLIER_TOL)
    p.add_argument("--iterations", type=int, default=eval_mod.DEFAULT_ITERATIONS)
    p.add_argument("--valid-threshold", type=float,
                   default=eval_mod.DEFAULT_VALID_THRESHOLD_PX)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure", type=Path, default=None,
                   help="also render the report as a PNG")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="single-core throughput of the detect pipeline")
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_surface_args(p)
    _add_geometry_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("figure", help="emit figure data and PNG renderings")
    p.add_argument("kind", choices=["slope", "surfaces", "roc"])
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--events", type=Path, default=None, help="roc: event stream")
    p.add_argument("--labels", type=Path, default=None, help="roc: label file")
    p.add_argument("--model", type=Path, default=None, help="roc: trained model")
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--seed", type=int, default=0)
    _add_surface_args(p)
    _add_geometry_args(p)
    p.set_defaults(func=cmd_figure)

    return ap


def _detector_config(args) -> det_mod.DetectorConfig:
    return det_mod.DetectorConfig(
        radius=args.radius, patch_size=args.patch_size,
        threshold=getattr(args, "threshold", 0.5), trail_us=args.trail_us,
        clamp=not args.no_clamp, surface=args.surface)


def _build_scene(args) -> sim_mod.Scene:
    if args.scene is not None:
        return sim_mod.load_scene(args.scene)
    if args.preset is None:
        raise ConfigError("simulate needs --preset or --scene")
    geometry = SensorGeometry(args.width or 128, args.height or 128)
    return sim_mod.preset_scene(args.preset, geometry=geometry,
                                duration_us=args.duration_us,
                                square_px=args.square_px, rows=args.rows,
                                cols=args.cols, phase=args.phase)


def cmd_simulate(args) -> int:
    scene = _build_scene(args)
    contrast = sim_mod.ContrastModel(threshold=args.contrast,
                                     noise_rate=args.noise_rate)
    rng = np.random.default_rng(args.seed)
    events = sim_mod.generate_events(scene, contrast, dt_us=args.dt_us, rng=rng)
    write_events(events, args.out_events, format=args.format)
    if args.out_labels is not None:
        labels = sim_mod.label_events(events, scene, d_pos=args.d_pos,
                                      tau_label_us=args.tau_label_us)
        sim_mod.write_labels(labels, args.out_labels)
    if args.out_trajectory is not None:
        scene.trajectory.save(args.out_trajectory, pattern_shape=scene.pattern.shape)
    print(f"simulate: {len(events)} events over {scene.duration_us} us "
          f"({scene.name}, {scene.geometry.width}x{scene.geometry.height})")
    return 0


def _config_hash(parts: dict) -> str:
    blob = json.dumps(parts, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def build_training_set(events, labels, geometry, config: det_mod.DetectorConfig,
                       neg_ratio: float = 0.0, seed: int = 0):
    """Patches + labels for trail-filter survivors, optionally rebalanced."""
    mask, X = det_mod.collect_patches(events, geometry, config)
    y = np.zeros(len(events), dtype=np.int64)
    y[labels["index"]] = labels["label"]
    y = y[mask]
    if neg_ratio > 0:
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y == 0)
        max_neg = int(round(neg_ratio * max(len(pos), 1)))
        if len(neg) > max_neg:
            rng = np.random.default_rng(seed)
            neg = rng.choice(neg, size=max_neg, replace=False)
            keep = np.sort(np.concatenate([pos, neg]))
            X, y = X[keep], y[keep]
    return X, y


def cmd_train(args) -> int:
    events = read_events(args.events, format=args.format, sort=args.sort)
    labels = sim_mod.read_labels(args.labels)
    geometry = _infer_geometry(events, args.width, args.height)
    dconfig = _detector_config(args)
    X, y = build_training_set(events, labels, geometry, dconfig,
                              neg_ratio=args.neg_ratio, seed=args.seed)
    if y.sum() == 0:
        raise TrainingError("no positive samples survive the trail filter")
    fconfig = ForestConfig(
        n_trees=args.trees, bootstrap_fraction=args.bootstrap_fraction,
        seed=args.seed,
        tree=TreeConfig(max_depth=args.max_depth, min_samples=args.min_samples))
    meta = {
        "patch_size": args.patch_size,
        "radius": args.radius,
        "surface": args.surface,
        "config_hash": _config_hash({
            "trees": args.trees, "max_depth": args.max_depth,
            "min_samples": args.min_samples, "seed": args.seed,
            "bootstrap_fraction": args.bootstrap_fraction,
            "neg_ratio": args.neg_ratio, "surface": args.surface,
            "radius": args.radius, "patch_size": args.patch_size,
        }),
    }
    forest = train_forest(X, y, fconfig, metadata=meta)
    save_model(forest, args.out_model)
    print(f"train: {len(X)} samples ({int(y.sum())} positive), "
          f"{args.trees} trees -> {args.out_model}")
    return 0


def cmd_detect(args) -> int:
    events = read_events(args.events, format=args.format, sort=args.sort)
    forest = load_model(args.model)
    geometry = _infer_geometry(events, args.width, args.height)
    config = _detector_config(args)
    if forest.metadata.get("surface", config.surface) != config.surface:
        raise ConfigError(
            f"model was trained on {forest.metadata['surface']!r} patches, "
            f"detector configured for {config.surface!r}")
    corners = det_mod.detect_stream(events, geometry, forest, config)
    det_mod.write_corners(corners, args.out)
    print(f"detect: {len(corners)} corners from {len(events)} events -> {args.out}")
    return 0


def cmd_track(args) -> int:
    corners = det_mod.read_corners(args.corners)
    tracks = trk_mod.track(corners, radius_px=args.radius, window_us=args.window_us)
    trk_mod.write_tracks(tracks, args.out)
    stats = trk_mod.lifetimes(tracks)
    print(f"track: {len(tracks)} tracks from {len(corners)} corners, "
          f"mean lifetime (first 100) {stats['mean_lifetime_us'] / 1000:.1f} ms")
    return 0


def cmd_eval(args) -> int:
    tracks = trk_mod.read_tracks(args.tracks)
    trajectory = None
    pattern_shape = None
    if args.trajectory is not None:
        trajectory = sim_mod.Trajectory.load(args.trajectory)
        pattern_shape = getattr(trajectory, "pattern_shape", None)
    dt_grid = [int(float(v) * 1000) for v in str(args.dt_grid).split(",")]
    rows = eval_mod.evaluate_tracks(
        tracks, dt_grid, trajectory=trajectory, pattern_shape=pattern_shape,
        window_us=args.window_us, cadence_us=args.cadence_us,
        inlier_tol=args.inlier_tol, iterations=args.iterations,
        seed=args.seed, valid_threshold_px=args.valid_threshold)
    eval_mod.write_report(rows, args.out_report)
    mode = "ground-truth H" if trajectory is not None else "RANSAC-estimated H"
    print(f"eval ({mode}):")
    for r in rows:
        print(f"  dt={r.dt_ms:g}ms mean_error={r.mean_error_px:.3f}px "
              f"pairs={r.n_pairs} tracks={r.n_tracks} valid={r.valid_pct:.1f}%")
    if args.figure is not None:
        report_mod.render_error_figure(rows, args.figure)
    return 0


def cmd_bench(args) -> int:
    events = read_events(args.events, format=args.format)
    forest = load_model(args.model)
    geometry = _infer_geometry(events, args.width, args.height)
    config = _detector_config(args)
    result = det_mod.bench_throughput(events, geometry, forest, config)
    # reference figures measured on a Xeon E5-2603 v4 @ 1.70 GHz
    line = {
        "events": result["n_events"],
        "corners": result["n_corners"],
        "wall_s": round(result["wall_s"], 4),
        "mev_per_s": round(result["events_per_s"] / 1e6, 3),
        "real_time_factor": round(result["real_time_factor"], 2),
        "reference_mev_per_s": 1.61,
        "reference_real_time_factor": 3.53,
    }
    print(json.dumps(line))
    return 0


def _figure_slope(args) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    geometry = SensorGeometry(args.width or 64, args.height or 64)
    base_us = 640_000
    profiles_s = {}
    profiles_t = {}
    positions = np.arange(geometry.width)
    for speed in (1, 2):
        scene = sim_mod.preset_scene("edge-sweep", geometry=geometry,
                                     duration_us=base_us // speed)
        events = sim_mod.generate_events(scene, dt_us=1000 // speed)
        sits = SpeedInvariantSurface(geometry, radius=args.radius,
                                     clamp=not args.no_clamp)
        sits.update_all(events)
        ts = TimeSurface(geometry)
        ts.update_all(events)
        row = geometry.height // 2
        label = f"speed x{speed}"
        profiles_s[label] = sits.channel(+1)[row].astype(np.int64)
        tvals = ts.values[1][row].astype(np.float64)
        profiles_t[label] = tvals / max(tvals.max(), 1.0)
        report_mod.save_profile(out / f"slope_s_speed{speed}.csv",
                                positions, profiles_s[label])
        report_mod.save_profile(out / f"slope_t_speed{speed}.csv",
                                positions, profiles_t[label])
    report_mod.render_slope_figure(positions, profiles_s, profiles_t,
                                   out / "slope.png")
    same = np.array_equal(profiles_s["speed x1"], profiles_s["speed x2"])
    print(f"figure slope: profiles identical across speeds: {same} -> {out}")
    return 0


def _figure_surfaces(args) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    geometry = SensorGeometry(args.width or 96, args.height or 96)
    scene = sim_mod.preset_scene("checkerboard-translate", geometry=geometry,
                                 duration_us=400_000, square_px=24, rows=3, cols=3)
    events = sim_mod.generate_events(scene, dt_us=200)
    events = trail_filter(events, geometry, args.trail_us)
    sits = SpeedInvariantSurface(geometry, radius=args.radius,
                                 clamp=not args.no_clamp)
    sits.update_all(events)
    ts = TimeSurface(geometry)
    ts.update_all(events)
    e = events[-1]
    x, y, p = int(e["x"]), int(e["y"]), int(e["p"])
    n = max(args.patch_size, 2 * args.radius + 1)
    win = sorted_normalization(ts, (x, y), p, n,
                               rescale_max=(2 * args.radius + 1) ** 2)
    raw = sorted_normalization(ts, (x, y), p, n, rescale_max=None)
    sits_patch = extract_patch(sits, x, y, p, n)
    from .timesurface import _clipped_window, polarity_channel
    t_patch = _clipped_window(ts.values[polarity_channel(p)], x, y, n)
    patches = {
        "standard time surface": t_patch.astype(np.float64),
        "sorted normalization": win.values,
        "speed invariant surface": sits_patch.values.astype(np.float64),
    }
    for name, grid in (("surface_t.csv", patches["standard time surface"]),
                       ("surface_sorted.csv", patches["sorted normalization"]),
                       ("surface_sits.csv", patches["speed invariant surface"]),
                       ("surface_sorted_ranks.csv", raw.values)):
        np.savetxt(out / name, grid, fmt="%g", delimiter=",")
    report_mod.render_surface_comparison(patches, out / "surfaces.png")
    print(f"figure surfaces: patch at ({x},{y}) p={p} -> {out}")
    return 0


def _figure_roc(args) -> int:
    if not (args.events and args.labels and args.model):
        raise ConfigError("figure roc needs --events, --labels and --model")
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    events = read_events(args.events, format=args.format)
    labels = sim_mod.read_labels(args.labels)
    forest = load_model(args.model)
    geometry = _infer_geometry(events, args.width, args.height)
    config = _detector_config(args)
    config.threshold = 0.0  # collect every filtered event's score
    corners = det_mod.detect_stream(events, geometry, forest, config)
    truth = np.zeros(len(events), dtype=np.int64)
    truth[labels["index"]] = labels["label"]
    from .events import trail_filter_mask
    mask = trail_filter_mask(events, geometry, config.trail_us)
    y = truth[mask]
    scores = corners["score"]
    ths = np.round(np.arange(0.0, 1.0001, 0.05), 2)
    precision, recall = [], []
    n_pos = max(int(y.sum()), 1)
    for th in ths:
        sel = scores >= th
        tp = int((y[sel] == 1).sum())
        precision.append(tp / max(int(sel.sum()), 1))
        recall.append(tp / n_pos)
    data = np.column_stack([ths, precision, recall])
    np.savetxt(out / "roc.csv", data, fmt="%g", delimiter=",",
               header="threshold,precision,recall", comments="")
    report_mod.render_roc_figure(ths, precision, recall, out / "roc.png")
    print(f"figure roc: {len(ths)} thresholds over {len(scores)} events -> {out}")
    return 0


def cmd_figure(args) -> int:
    if args.kind == "slope":
        return _figure_slope(args)
    if args.kind == "surfaces":
        return _figure_surfaces(args)
    return _figure_roc(args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamFormatError, ModelFormatError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (StreamOrderError, TrainingError, LabelingError,
            EstimationError, InsufficientDataError, EvcornerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
