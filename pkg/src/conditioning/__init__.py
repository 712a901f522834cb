"""Visual and textual aesthetic maps and the adapter that injects them."""

from src.conditioning.adapter import (
    ControlSignal,
    assemble_control,
    build_control,
    encode_assessment,
    encode_visual,
    init_adapter_params,
    inject,
    inject_level,
)
from src.conditioning.assessment import Assessment
from src.conditioning.maps import contour_map, rgb_to_hsv_map

__all__ = [
    "Assessment",
    "ControlSignal",
    "assemble_control",
    "build_control",
    "contour_map",
    "encode_assessment",
    "encode_visual",
    "init_adapter_params",
    "inject",
    "inject_level",
    "rgb_to_hsv_map",
]
