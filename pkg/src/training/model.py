"""The denoiser together with its aesthetic control adapter."""

from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence

import numpy as np

from src.conditioning.adapter import (
    TEXT_TABLE,
    ControlSignal,
    assemble_control,
    encode_assessment,
    encode_visual,
    init_adapter_params,
)
from src.conditioning.assessment import Assessment
from src.conditioning.maps import aesthetic_maps
from src.core.config import AdapterConfig, MapMode, RunConfig, UNetConfig
from src.diffusion.unet import CAPTION_TABLE, init_denoiser_params, predict_noise
from src.numerics.initializers import Params
from src.numerics.tensor import Tensor
from src.pairing.scenes import SEMANTIC_KEYS

TEXT_TABLES = (TEXT_TABLE, CAPTION_TABLE)


@dataclass(frozen=True)
class DenoiserModel:
    """Architecture of the conditioned denoiser; parameters live in a flat dict."""

    unet: UNetConfig
    adapter: AdapterConfig

    @classmethod
    def from_config(cls, config: RunConfig) -> "DenoiserModel":
        return cls(unet=config.unet_config(), adapter=config.adapter_config())

    def init_params(self, seed: int) -> Params:
        """Seeded denoiser and adapter parameters; adapter projections start at zero."""
        params = init_denoiser_params(self.unet, len(SEMANTIC_KEYS), np.random.default_rng([seed, 0]))
        params.update(init_adapter_params(self.adapter, self.unet, np.random.default_rng([seed, 1])))
        return params

    @staticmethod
    def trainable_names(params: Mapping[str, np.ndarray], freeze_text_tables: bool = False) -> List[str]:
        """Sorted names of the parameters the optimizer updates."""
        frozen = set(TEXT_TABLES) if freeze_text_tables else set()
        return sorted(name for name in params if name not in frozen)

    def control(
        self,
        tensors: Mapping[str, Tensor],
        hsv: np.ndarray,
        contour: np.ndarray,
        assessments: Sequence[Assessment],
        mode: MapMode = MapMode.FULL,
    ) -> ControlSignal:
        """Control signal from precomputed maps (N, H, W, 3) / (N, H, W)."""
        colour_maps, structure_maps = encode_visual(tensors, self.adapter, hsv, contour)
        text_colour, text_structure = encode_assessment(tensors, assessments)
        return assemble_control(colour_maps, text_colour, structure_maps, text_structure, mode)

    def control_from_images(
        self,
        tensors: Mapping[str, Tensor],
        images: np.ndarray,
        assessments: Sequence[Assessment],
        mode: MapMode = MapMode.FULL,
    ) -> ControlSignal:
        hsv, contour = aesthetic_maps(images)
        return self.control(tensors, hsv, contour, assessments, mode)

    def predict(
        self,
        tensors: Mapping[str, Tensor],
        x_t: Tensor,
        t: Sequence[int],
        caption_ids: Sequence[int],
        x_clean: Tensor,
        cond: Optional[ControlSignal],
    ) -> Tensor:
        return predict_noise(tensors, self.unet, x_t, t, caption_ids, x_clean, cond)

