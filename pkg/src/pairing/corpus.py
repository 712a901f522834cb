"""
Synthetic corpus generation.

Image ``i`` draws everything from ``default_rng([seed, i])`` so generation
is order-free and can run in a thread pool.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Sequence

import numpy as np

from src.core.config import CorpusConfig, get_num_threads
from src.core.logging_config import get_logger
from src.pairing.mos import THIRDS, assessment_text, parametric_mos
from src.pairing.pairs import ScoredImage
from src.pairing.params import AestheticParams
from src.pairing.scenes import PALETTES, SEMANTIC_KEYS, SceneSpec, fit_params, generate_scene
from src.persistence.models import CorpusStats, ImageRecord, MosBands

logger = get_logger(__name__)


def sample_params(rng: np.random.Generator, high_quality: bool) -> AestheticParams:
    """
    Draw aesthetic parameters.

    High-quality draws cluster around the MOS optimum; the rest are broad
    uniform draws that mostly land in the low band.
    """
    if high_quality:
        tx, ty = rng.choice(THIRDS, size=2)
        return AestheticParams.create(
            saturation=rng.uniform(0.68, 0.82),
            brightness=rng.uniform(0.58, 0.72),
            hue_shift=rng.uniform(0.0, 1.0 - 1e-9),
            cx=float(np.clip(tx + rng.normal(0.0, 0.02), 0.0, 1.0)),
            cy=float(np.clip(ty + rng.normal(0.0, 0.02), 0.0, 1.0)),
            blur=rng.uniform(0.0, 0.1),
            size=rng.uniform(0.08, 0.35),
        )
    return AestheticParams.create(
        saturation=rng.uniform(0.0, 1.0),
        brightness=rng.uniform(0.15, 1.0),
        hue_shift=rng.uniform(0.0, 1.0 - 1e-9),
        cx=rng.uniform(0.15, 0.85),
        cy=rng.uniform(0.15, 0.85),
        blur=rng.uniform(0.0, 2.0),
        size=rng.uniform(0.05, 0.45),
    )


def render_image(image_id: int, config: CorpusConfig) -> ScoredImage:
    """Render and score corpus image ``image_id``."""
    rng = np.random.default_rng([config.seed, image_id])
    key = SEMANTIC_KEYS[image_id % len(SEMANTIC_KEYS)]
    spec = SceneSpec(
        semantic_key=key,
        layout_seed=int(rng.integers(0, 2**31 - 1)),
        palette_id=int(rng.integers(0, len(PALETTES))),
    )
    params = fit_params(spec, sample_params(rng, high_quality=rng.uniform() < config.high_quality_fraction))
    image, mask = generate_scene(spec, params, config.side)
    record = ImageRecord(
        id=image_id,
        semantic_key=key.value,
        params=params,
        mos=parametric_mos(params),
        caption=spec.caption,
        assessment_string=assessment_text(params, framed=spec.framed).render(),
        image_png_path=f"images/{image_id:06d}.png",
        mask_png_path=f"masks/{image_id:06d}.png",
        scene=spec,
    )
    return ScoredImage(record=record, image=image, mask=mask)


def generate_corpus(config: CorpusConfig, num_threads: int = 0) -> List[ScoredImage]:
    """
    Render ``config.num_images`` scored images in id order.

    Args:
        config: Corpus options
        num_threads: Worker count (0 uses DIAE_NUM_THREADS or the CPU count)

    Returns:
        list: Scored images sorted by id
    """
    workers = num_threads or get_num_threads()
    logger.info("corpus_generation_started", num_images=config.num_images, side=config.side, workers=workers)
    ids = range(config.num_images)
    if workers == 1:
        images = [render_image(i, config) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(lambda i: render_image(i, config), ids))
    logger.info("corpus_generation_completed", num_images=len(images))
    return images


def corpus_stats(records: Sequence[ImageRecord], config: CorpusConfig) -> CorpusStats:
    """Per-key counts and MOS band counts."""
    per_key: Dict[str, int] = {}
    bands = MosBands()
    for record in records:
        per_key[record.semantic_key] = per_key.get(record.semantic_key, 0) + 1
        if record.mos <= config.low_max:
            bands.low += 1
        elif record.mos >= config.high_min:
            bands.high += 1
        else:
            bands.middle += 1
    return CorpusStats(
        num_images=len(records),
        side=config.side,
        per_key=dict(sorted(per_key.items())),
        bands=bands,
        mean_mos=float(np.mean([r.mos for r in records])) if records else 0.0,
        metadata={"seed": config.seed, "low_max": config.low_max, "high_min": config.high_min},
    )
