"""Event-camera corner detection toolkit.

Streaming corner detection for event cameras: a bounded, speed invariant
activity surface updated per event feeds a random forest that scores each
event as corner / not-corner, plus the simulator, tracker and evaluation
harness needed to train and measure it.
"""

from .events import (EVENT_DTYPE, SensorGeometry, make_events, read_events,
                     trail_filter, trail_filter_mask, write_events)
from .timesurface import (Patch, SpeedInvariantSurface, TimeSurface,
                          extract_patch, sorted_normalization)
from .forest import (Forest, ForestConfig, Tree, TreeConfig, load_model,
                     save_model, train_forest, train_tree)
from .simulator import (ContrastModel, Scene, Trajectory, checkerboard,
                        generate_events, harris_labels, label_events,
                        preset_scene, render)
from .detector import (CORNER_DTYPE, Detector, DetectorConfig,
                       bench_throughput, detect_stream)
from .tracker import Track, lifetimes, track
from .evaluation import (dlt_homography, evaluate_tracks, ransac_homography,
                         snapshot_correspondences)

__version__ = "0.1.0"
