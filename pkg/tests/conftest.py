"""Shared fixtures.

The expensive session fixtures (50k+ labeled samples, a fully trained
surrogate) are built once and shared between the surrogate/evalbench tests
and the acceptance suite; small tests build their own throwaway data.
"""

import numpy as np
import pytest

from lcptools import (
    McConfig,
    MlpConfig,
    SyntheticSpec,
    TrainConfig,
    build_training_set,
    generate_synthetic,
    normalize_global,
    train,
)

ISOVALUES = [round(0.1 * k, 1) for k in range(1, 10)]
TRAIN_STEPS = list(range(6))  # first 60% of the 10 synthetic steps
HELDOUT_STEPS = list(range(6, 10))
GROUND_TRUTH_R = 8000
LABEL_R = 3000


@pytest.fixture(scope="session")
def dataset_small():
    spec = SyntheticSpec(width=17, height=17, members=8, timesteps=4)
    return normalize_global(generate_synthetic(spec, 7))


@pytest.fixture(scope="session")
def accept_dataset():
    spec = SyntheticSpec(width=33, height=33, members=12, timesteps=10,
                         modes=6, noise_scale=0.25, drift=0.35)
    return normalize_global(generate_synthetic(spec, 42))


@pytest.fixture(scope="session")
def train_samples(accept_dataset):
    samples = build_training_set(
        accept_dataset, TRAIN_STEPS, ISOVALUES,
        McConfig(r=LABEL_R, seed=11), workers=2,
    )
    assert samples.shape[0] >= 50_000
    return samples


@pytest.fixture(scope="session")
def heldout_samples(accept_dataset):
    return build_training_set(
        accept_dataset, HELDOUT_STEPS, ISOVALUES,
        McConfig(r=GROUND_TRUTH_R, seed=99), workers=2,
    )


@pytest.fixture(scope="session")
def surrogate_train_config():
    return TrainConfig(epochs=100, batch_size=1024, learning_rate=1e-3, seed=7)


@pytest.fixture(scope="session")
def trained_model(train_samples, surrogate_train_config):
    model, history = train(train_samples, MlpConfig(), surrogate_train_config)
    assert np.isfinite(history).all()
    return model
