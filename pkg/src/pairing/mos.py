"""
Parametric MOS oracle and the parameter-to-assessment mapping.

MOS = clamp(1, 10, 10 − 6·|s − 0.75| − 6·|v − 0.65| − 8·d₃ − 4·min(σ, 1))

where d₃ is the distance from the subject centroid to the nearest
rule-of-thirds intersection, divided by its maximum over the unit square.
"""

import math

from src.conditioning.assessment import Assessment
from src.pairing.params import AestheticParams

IDEAL_SATURATION = 0.75
IDEAL_BRIGHTNESS = 0.65
SATURATION_WEIGHT = 6.0
BRIGHTNESS_WEIGHT = 6.0
COMPOSITION_WEIGHT = 8.0
BLUR_WEIGHT = 4.0
MOS_MIN = 1.0
MOS_MAX = 10.0

THIRDS = (1.0 / 3.0, 2.0 / 3.0)
# A corner of the unit square is the farthest point from every thirds intersection.
THIRDS_MAX_DISTANCE = math.sqrt(2.0) / 3.0


def thirds_distance(cx: float, cy: float) -> float:
    """Scaled distance d₃ ∈ [0, 1] to the nearest thirds intersection."""
    nearest = min(math.hypot(cx - x, cy - y) for x in THIRDS for y in THIRDS)
    return nearest / THIRDS_MAX_DISTANCE


def mos_from_values(saturation: float, brightness: float, cx: float, cy: float, blur: float) -> float:
    """MOS formula on raw values; shared by the generator and the measurement side."""
    score = (
        MOS_MAX
        - SATURATION_WEIGHT * abs(saturation - IDEAL_SATURATION)
        - BRIGHTNESS_WEIGHT * abs(brightness - IDEAL_BRIGHTNESS)
        - COMPOSITION_WEIGHT * thirds_distance(cx, cy)
        - BLUR_WEIGHT * min(blur, 1.0)
    )
    return min(MOS_MAX, max(MOS_MIN, score))


def parametric_mos(params: AestheticParams) -> float:
    """
    Oracle score in [1, 10].

    Raises:
        ParameterRangeError: If the parameters are out of range
    """
    p = params.check()
    return mos_from_values(p.saturation, p.brightness, p.cx, p.cy, p.blur)


def _tone(hue_shift: float) -> str:
    if 0.45 <= hue_shift < 0.95:
        return "cool tone"
    if 0.2 <= hue_shift < 0.45 or hue_shift >= 0.95:
        return "neutral tone"
    return "warm tone"


def assessment_text(params: AestheticParams, framed: bool = False) -> Assessment:
    """
    Threshold the parameters into assessment tokens.

    Args:
        params: Rendering parameters
        framed: Whether the scene class draws an explicit frame

    Returns:
        Assessment: Three colour tokens and four structure tokens
    """
    if params.saturation < 0.4:
        saturation = "undersaturated"
    elif params.saturation > 0.9:
        saturation = "oversaturated"
    else:
        saturation = "well-saturated"

    if params.brightness < 0.35:
        lighting = "poor light"
    elif params.brightness > 0.85:
        lighting = "bright light"
    else:
        lighting = "balanced light"

    focus = "soft focus" if params.blur > 0.5 else "sharp focus"

    if params.size > 0.5:
        shot = "close-up"
    elif params.size < 0.15:
        shot = "wide shot"
    else:
        shot = "medium shot"

    if thirds_distance(params.cx, params.cy) < 0.1:
        composition = "rule-of-thirds composition"
    elif math.hypot(params.cx - 0.5, params.cy - 0.5) < 0.1:
        composition = "centered composition"
    else:
        composition = "off-balance composition"

    if framed:
        technique = "framing"
    elif abs(params.cx - 0.5) < 0.05:
        technique = "symmetry"
    else:
        technique = "none"

    return Assessment(
        color=[saturation, lighting, _tone(params.hue_shift)],
        structure=[focus, shot, composition, technique],
    )
