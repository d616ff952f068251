"""Session fixtures: full-size trained ensembles, cached on disk.

Training the four-member ensemble on the filtered 10k dataset takes a few
minutes, so the artifacts are cached under tests/.cache keyed by environment
and seed. Delete the directory for a cold rebuild; determinism of the
training path itself is covered by the unit tests on small configurations.
"""

import os

import numpy as np
import pytest

from ugcem import data, ensemble, envs

CACHE_DIR = os.path.join(os.path.dirname(__file__), ".cache")
DATASET_SEED = 0
TRAIN_SEED = 0


def _artifacts(env_id):
    os.makedirs(CACHE_DIR, exist_ok=True)
    ens_path = os.path.join(CACHE_DIR, f"{env_id}_s{TRAIN_SEED}.ensemble")
    loss_path = os.path.join(CACHE_DIR, f"{env_id}_s{TRAIN_SEED}.loss.npy")
    buf_path = os.path.join(CACHE_DIR, f"{env_id}_s{DATASET_SEED}.dataset")
    if os.path.exists(buf_path):
        buf = data.load(buf_path)
    else:
        raw = data.collect_random(env_id, 10000, DATASET_SEED)
        buf = data.filter_region(raw, envs.default_region(env_id))
        data.save(buf, buf_path)
    if os.path.exists(ens_path) and os.path.exists(loss_path):
        return buf, ensemble.load_ensemble(ens_path), np.load(loss_path)
    ens, history = ensemble.train_ensemble(buf, ensemble.TrainConfig(), TRAIN_SEED)
    ensemble.save_ensemble(ens, ens_path)
    np.save(loss_path, history)
    return buf, ens, history


@pytest.fixture(scope="session")
def cartpole_artifacts():
    return _artifacts("cartpole")


@pytest.fixture(scope="session")
def pendulum_artifacts():
    return _artifacts("pendulum")
