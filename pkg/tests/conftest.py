import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evcorner.cli import build_training_set
from evcorner.detector import DetectorConfig
from evcorner.events import SensorGeometry
from evcorner.forest import ForestConfig, TreeConfig, train_forest
from evcorner.simulator import generate_events, label_events, preset_scene


@pytest.fixture(scope="session")
def sim_setup():
    """Shared simulated training/held-out data and trained forests.

    Training and held-out sequences use the same checkerboard pattern but
    different motion phase and speed, so the timestamp-based ablation model
    sees a genuinely different input distribution.
    """
    geometry = SensorGeometry(128, 128)
    train_scene = preset_scene("checkerboard-translate", geometry=geometry,
                               duration_us=600_000)
    train_events = generate_events(train_scene, dt_us=200)
    train_labels = label_events(train_events, train_scene)

    held_scene = preset_scene("checkerboard-translate", geometry=geometry,
                              duration_us=900_000, phase=1.0)
    held_events = generate_events(held_scene, dt_us=200)
    held_labels = label_events(held_events, held_scene)

    forests = {}
    for surface in ("sits", "ts"):
        config = DetectorConfig(surface=surface)
        X, y = build_training_set(train_events, train_labels, geometry, config,
                                  neg_ratio=2.0, seed=7)
        forests[surface] = train_forest(
            X, y,
            ForestConfig(n_trees=10, seed=7,
                         tree=TreeConfig(max_depth=10, min_samples=50)),
            metadata={"patch_size": 8, "radius": 6, "surface": surface})

    return {
        "geometry": geometry,
        "train_scene": train_scene,
        "train_events": train_events,
        "train_labels": train_labels,
        "held_scene": held_scene,
        "held_events": held_events,
        "held_labels": held_labels,
        "forest_sits": forests["sits"],
        "forest_ts": forests["ts"],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
