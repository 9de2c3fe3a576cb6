"""Shared fixtures: deterministic images, a pretrained model, a toy checkpoint.

The expensive artifacts are session-scoped. golden48.ckpt ships with the
repo (see tests/assets/regen_golden.py); the 32x32 toy model is cheap
enough to train once per session.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from sinedit.editing import ModelBundle
from sinedit.training import TrainConfig, Trainer

ASSETS_DIR = os.path.join(os.path.dirname(__file__), "assets")
GOLDEN_CHECKPOINT = os.path.join(ASSETS_DIR, "golden48.ckpt")


def make_synthetic_image(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Smooth multi-frequency color field plus a little seeded noise.

    Structured enough that a single-image model has something to learn,
    and fully reproducible.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij"
    )
    img = np.stack(
        [
            0.6 * np.sin(2.2 * xx + 0.3) * np.cos(1.7 * yy),
            0.5 * np.cos(1.3 * xx) * np.sin(2.9 * yy + 1.0),
            0.4 * np.sin(1.1 * (xx + yy)),
        ],
        axis=-1,
    )
    img = img + 0.05 * rng.standard_normal((height, width, 3))
    return np.clip(img, -1, 1).astype(np.float32)


@pytest.fixture(scope="session")
def synth48() -> np.ndarray:
    return make_synthetic_image(48, 48, seed=0)


@pytest.fixture(scope="session")
def golden_bundle() -> ModelBundle:
    """Well-trained 48x48 model: 3 scales (21, 32, 48), t0=50."""
    if not os.path.exists(GOLDEN_CHECKPOINT):
        pytest.fail(
            f"missing {GOLDEN_CHECKPOINT}; run tests/assets/regen_golden.py"
        )
    return ModelBundle.load(GOLDEN_CHECKPOINT)


def toy_train_config(epochs: int = 60) -> TrainConfig:
    """Smallest config that still exercises a multi-scale model."""
    return TrainConfig(
        epochs=epochs,
        batch_size=4,
        channels=16,
        blocks=2,
        embed_dim=16,
        t0=12,
        min_dim=12,
        seed=3,
    )


@pytest.fixture(scope="session")
def toy32_checkpoint(tmp_path_factory) -> str:
    """A briefly trained 32x32 model; cheap, used by CLI and service tests."""
    image = make_synthetic_image(32, 32, seed=7)
    trainer = Trainer.new(image, toy_train_config())
    trainer.run()
    path = str(tmp_path_factory.mktemp("toy") / "toy32.ckpt")
    trainer.save(path)
    return path


@pytest.fixture(scope="session")
def toy32_bundle(toy32_checkpoint) -> ModelBundle:
    return ModelBundle.load(toy32_checkpoint)
