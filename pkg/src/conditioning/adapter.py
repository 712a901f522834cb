"""
Aesthetic control adapter.

Encodes the visual maps (HSV and contour) into per-level features, encodes
the textual assessment into colour and structure vectors, and injects both
into the denoiser's encoder activations through zero-initialised 1x1
projections::

    h_l' = h_l + P_h_l([F_col_l ; bcast(T_col)]) + P_c_l([F_str_l ; bcast(T_str)])

Colour features go through P_h; structure features through P_c.
"""

from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.conditioning.assessment import VOCABULARY_SIZE, Assessment
from src.conditioning.maps import aesthetic_maps
from src.core.config import AdapterConfig, MapMode, UNetConfig
from src.core.exceptions import AdapterNotInitializedError, MissingComponentError, ShapeMismatchError
from src.numerics.initializers import Params, conv_params, embedding_params
from src.numerics.ops import add, concat, conv2d, embedding_mean, silu, spatial_broadcast
from src.numerics.tensor import Tensor

TEXT_TABLE = "adapter.text.table"
ENCODERS = (("col", 3), ("str", 1))


@dataclass(frozen=True)
class ControlSignal:
    """
    Control signal for one batch.

    ``cond_h`` pairs the colour feature pyramid with the colour text vector;
    ``cond_c`` pairs the structure pyramid with the structure text vector.
    """

    cond_h: Tuple[List[Tensor], Tensor]
    cond_c: Tuple[List[Tensor], Tensor]

    @property
    def levels(self) -> int:
        return len(self.cond_h[0])


def init_adapter_params(config: AdapterConfig, unet: UNetConfig, rng: np.random.Generator) -> Params:
    """Visual encoders, the assessment table and zero-initialised projections."""
    params: Params = {}
    embedding_params(params, TEXT_TABLE, VOCABULARY_SIZE, config.text_dim, rng)
    for prefix, in_channels in ENCODERS:
        conv_params(params, f"adapter.{prefix}.stem", in_channels, config.channels, 3, rng)
        for level in range(config.levels):
            conv_params(params, f"adapter.{prefix}.level.{level}", config.channels, config.channels, 3, rng)
    for level, width in enumerate(unet.level_channels()):
        for proj in ("proj_h", "proj_c"):
            conv_params(
                params, f"adapter.{proj}.{level}", config.channels + config.text_dim, width, 1, rng, zero=True
            )
    return params


def _require(params: Mapping[str, Tensor], name: str) -> Tensor:
    tensor = params.get(name)
    if tensor is None:
        raise AdapterNotInitializedError(
            message=f"Adapter parameter missing: {name}",
            error_code="ADAPTER_NOT_INITIALIZED",
            details={"param": name},
        )
    return tensor


def _encode_pyramid(params: Mapping[str, Tensor], prefix: str, x: Tensor, levels: int) -> List[Tensor]:
    h = silu(conv2d(x, _require(params, f"adapter.{prefix}.stem.w"), _require(params, f"adapter.{prefix}.stem.b")))
    features: List[Tensor] = []
    for level in range(levels):
        w = _require(params, f"adapter.{prefix}.level.{level}.w")
        b = _require(params, f"adapter.{prefix}.level.{level}.b")
        h = silu(conv2d(h, w, b, stride=1 if level == 0 else 2))
        features.append(h)
    return features


def encode_visual(
    params: Mapping[str, Tensor], config: AdapterConfig, hsv: np.ndarray, contour: np.ndarray
) -> Tuple[List[Tensor], List[Tensor]]:
    """
    Feature pyramids of the HSV and contour maps.

    Args:
        params: Adapter tensors
        config: Adapter shape
        hsv: HSV maps (N, H, W, 3)
        contour: Contour maps (N, H, W)

    Returns:
        tuple: (colour pyramid, structure pyramid), level l at side H / 2^l
    """
    hsv = np.asarray(hsv)
    contour = np.asarray(contour)
    if hsv.ndim != 4 or contour.ndim != 3 or hsv.shape[:3] != contour.shape:
        raise ShapeMismatchError("encode_visual", [hsv.shape, contour.shape])
    colour_in = Tensor(hsv.transpose(0, 3, 1, 2))
    structure_in = Tensor(contour[:, None])
    return (
        _encode_pyramid(params, "col", colour_in, config.levels),
        _encode_pyramid(params, "str", structure_in, config.levels),
    )


def encode_assessment(params: Mapping[str, Tensor], assessments: Sequence[Assessment]) -> Tuple[Tensor, Tensor]:
    """Mean token embeddings of the colour and structure parts, (N, D) each."""
    table = _require(params, TEXT_TABLE)
    colour = embedding_mean(table, [a.color_ids() for a in assessments])
    structure = embedding_mean(table, [a.structure_ids() for a in assessments])
    return colour, structure


def assemble_control(
    visual_colour: Optional[List[Tensor]],
    text_colour: Optional[Tensor],
    visual_structure: Optional[List[Tensor]],
    text_structure: Optional[Tensor],
    mode: MapMode = MapMode.FULL,
) -> ControlSignal:
    """
    Combine encoded parts into a control signal, zeroing withdrawn modalities.

    Raises:
        MissingComponentError: If any part is absent
    """
    parts = {
        "visual_colour": visual_colour,
        "text_colour": text_colour,
        "visual_structure": visual_structure,
        "text_structure": text_structure,
    }
    missing = [name for name, value in parts.items() if value is None]
    if missing:
        raise MissingComponentError(
            message=f"Control signal is missing: {', '.join(missing)}",
            error_code="MISSING_COMPONENT",
            details={"missing": missing},
        )
    if mode == MapMode.TEXT_ONLY:
        visual_colour = [Tensor(np.zeros_like(f.data)) for f in visual_colour]
        visual_structure = [Tensor(np.zeros_like(f.data)) for f in visual_structure]
    elif mode == MapMode.VISUAL_ONLY:
        text_colour = Tensor(np.zeros_like(text_colour.data))
        text_structure = Tensor(np.zeros_like(text_structure.data))
    return ControlSignal(cond_h=(visual_colour, text_colour), cond_c=(visual_structure, text_structure))


def build_control(
    params: Mapping[str, Tensor],
    config: AdapterConfig,
    images: np.ndarray,
    assessments: Sequence[Assessment],
    mode: MapMode = MapMode.FULL,
) -> ControlSignal:
    """Control signal of a batch of (N, H, W, 3) images in [0, 1] and their assessments."""
    hsv, contour = aesthetic_maps(images)
    colour_maps, structure_maps = encode_visual(params, config, hsv, contour)
    text_colour, text_structure = encode_assessment(params, assessments)
    return assemble_control(colour_maps, text_colour, structure_maps, text_structure, mode)


def inject_level(h: Tensor, level: int, signal: ControlSignal, params: Mapping[str, Tensor]) -> Tensor:
    """
    Add both projected control branches to one encoder activation.

    Raises:
        AdapterNotInitializedError: If the projection for this level is missing
        ShapeMismatchError: If the signal does not match the activation's batch or side
    """
    if level >= signal.levels:
        raise ShapeMismatchError("inject", [h.shape], f"no control features for level {level}")
    n, _, height, width = h.shape
    for proj, (features, text) in (("proj_h", signal.cond_h), ("proj_c", signal.cond_c)):
        visual = features[level]
        if visual.shape[0] != n or visual.shape[2:] != (height, width):
            raise ShapeMismatchError("inject", [h.shape, visual.shape])
        fused = concat([visual, spatial_broadcast(text, height, width)])
        w = _require(params, f"adapter.{proj}.{level}.w")
        b = _require(params, f"adapter.{proj}.{level}.b")
        h = add(h, conv2d(fused, w, b))
    return h


def inject(
    activations: Sequence[Tensor], signal: ControlSignal, params: Mapping[str, Tensor]
) -> List[Tensor]:
    """Apply ``inject_level`` to every encoder activation."""
    return [inject_level(h, level, signal, params) for level, h in enumerate(activations)]
