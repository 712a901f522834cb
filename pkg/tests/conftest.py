"""Shared fixtures: a tiny model configuration and a rendered triplet."""

from pathlib import Path
from typing import Tuple

import numpy as np
import pytest

from src.core.config import RunConfig
from src.pairing.corpus import render_image
from src.pairing.pairs import Triplet, make_triplet
from src.pairing.scenes import SEMANTIC_KEYS
from src.training.dual_loss import PreparedSample, prepare_sample

TINY_MODEL = {
    "T": 20,
    "side": 32,
    "base_channels": 8,
    "channel_mults": [1, 2],
    "num_res_blocks": 1,
    "time_embed_dim": 16,
    "caption_dim": 8,
    "adapter_channels": 8,
}


@pytest.fixture
def tiny_config(tmp_path: Path) -> RunConfig:
    return RunConfig(
        **TINY_MODEL,
        num_sample_steps=4,
        batch_size=2,
        steps=2,
        log_interval=1,
        checkpoint_interval=1,
        learning_rate=1e-3,
        eval_seeds=[0],
        ablation_seeds=[0],
        ablation_steps=1,
        num_images=68,
        corpus_dir=str(tmp_path / "corpus"),
        out_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def triplet(tiny_config: RunConfig) -> Triplet:
    corpus = tiny_config.corpus_config()
    # ids 0 and len(SEMANTIC_KEYS) share a scene class
    return make_triplet(render_image(0, corpus), render_image(len(SEMANTIC_KEYS), corpus))


@pytest.fixture
def prepared(triplet: Triplet) -> PreparedSample:
    return prepare_sample(triplet)


def square_image(
    side: int = 32, lo: int = 8, hi: int = 16, background: float = 0.65, subject: float = 0.25
) -> Tuple[np.ndarray, np.ndarray]:
    """Grey background with a sharp grey square, and the square's mask."""
    image = np.full((side, side, 3), background, dtype=np.float64)
    image[lo:hi, lo:hi] = subject
    mask = np.zeros((side, side), dtype=bool)
    mask[lo:hi, lo:hi] = True
    return image, mask
