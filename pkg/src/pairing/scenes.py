"""
Procedural scene renderer.

A scene is a hue-gradient background plus a darker subject silhouette made of
simple shapes. The base rendering is built in HSV (S = 1, V = 1 for the
background and V = ``SUBJECT_VALUE`` for the subject); aesthetic parameters
then rotate hue, scale S and V, place the subject and blur the whole image.
Only value separates subject from background, so hue-only decorations (the
horizon band, frames) never leak into value-based segmentation.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Tuple

import numpy as np
from matplotlib.colors import hsv_to_rgb
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from src.core.config import SUPPORTED_SIDES
from src.core.exceptions import SceneSpecError
from src.pairing.params import AestheticParams

SUBJECT_VALUE = 0.55
BACKGROUND_HUE_SPAN = 0.06
FRAME_INSET = 0.06
FRAME_WIDTH = 0.06
SEARCH_ITERATIONS = 24
CENTROID_PASSES = 5
GEOMETRY_EXTENT = 3.0
GEOMETRY_SAMPLES = 601
# Share of the largest placeable size that fit_params allows; leaves room for pixel rounding.
FIT_MARGIN = 0.85
MIN_FITTED_SIZE = 0.005


class SemanticKey(str, Enum):
    """Scene classes. Portrait-like classes are deliberately absent."""

    CIRCLE_ON_HORIZON = "circle-on-horizon"
    TRIANGLE_CLUSTER = "triangle-cluster"
    RECT_GRID = "rect-grid"
    CRESCENT = "crescent"
    STAR = "star"
    DIAMOND = "diamond"
    CROSS = "cross"
    ELLIPSE_PAIR = "ellipse-pair"
    HEXAGON = "hexagon"
    HOUSE = "house"
    TREE = "tree"
    SAILBOAT = "sailboat"
    MOUNTAIN = "mountain"
    PILLAR_PAIR = "pillar-pair"
    FRAMED_WINDOW = "framed-window"
    MOON_AND_STAR = "moon-and-star"
    FRAMED_DISK = "framed-disk"


SEMANTIC_KEYS: Tuple[SemanticKey, ...] = tuple(SemanticKey)
CAPTION_IDS: Dict[str, int] = {key.value: index for index, key in enumerate(SEMANTIC_KEYS)}

# (background hue, subject hue, decoration hue)
PALETTES: Tuple[Tuple[float, float, float], ...] = (
    (0.58, 0.08, 0.70),
    (0.33, 0.95, 0.45),
    (0.12, 0.62, 0.02),
    (0.80, 0.30, 0.90),
    (0.50, 0.00, 0.40),
    (0.05, 0.55, 0.15),
    (0.70, 0.15, 0.60),
    (0.25, 0.75, 0.35),
)


class SceneSpec(BaseModel):
    """Semantic class, layout jitter seed and palette of a scene."""

    semantic_key: SemanticKey
    layout_seed: int = Field(default=0, ge=0)
    palette_id: int = Field(default=0, ge=0, lt=len(PALETTES))

    model_config = ConfigDict(frozen=True)

    @property
    def caption(self) -> str:
        return caption_for(self.semantic_key)

    @property
    def framed(self) -> bool:
        return SHAPES[SemanticKey(self.semantic_key)].framed


# Shape primitives on normalized coordinates (u, v) relative to the subject
# origin, in units of the subject scale r. v grows downwards.

Field2D = Tuple[np.ndarray, np.ndarray]
Primitive = Callable[[np.ndarray, np.ndarray], np.ndarray]


def disk(x0: float, y0: float, radius: float) -> Primitive:
    return lambda u, v: (u - x0) ** 2 + (v - y0) ** 2 <= radius**2


def ellipse(x0: float, y0: float, a: float, b: float) -> Primitive:
    return lambda u, v: ((u - x0) / a) ** 2 + ((v - y0) / b) ** 2 <= 1.0


def rect(x0: float, y0: float, half_w: float, half_h: float) -> Primitive:
    return lambda u, v: (np.abs(u - x0) <= half_w) & (np.abs(v - y0) <= half_h)


def triangle(x0: float, y0: float, half_w: float, height: float) -> Primitive:
    """Apex-up isosceles triangle centred on (x0, y0)."""

    def inside(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        depth = (v - (y0 - height / 2.0)) / height
        return (depth >= 0.0) & (depth <= 1.0) & (np.abs(u - x0) <= half_w * depth)

    return inside


def diamond(x0: float, y0: float, half_w: float, half_h: float) -> Primitive:
    return lambda u, v: np.abs(u - x0) / half_w + np.abs(v - y0) / half_h <= 1.0


def star(x0: float, y0: float, radius: float, points: int = 5, inner: float = 0.45) -> Primitive:
    def inside(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        du, dv = u - x0, v - y0
        theta = np.arctan2(dv, du) + np.pi / 2.0
        bound = radius * (inner + (1.0 - inner) * ((1.0 + np.cos(points * theta)) / 2.0) ** 2)
        return np.hypot(du, dv) <= bound

    return inside


def hexagon(x0: float, y0: float, radius: float) -> Primitive:
    s3 = np.sqrt(3.0)
    return lambda u, v: (np.abs(v - y0) <= s3 / 2.0 * radius) & (
        s3 * np.abs(u - x0) + np.abs(v - y0) <= s3 * radius
    )


@dataclass(frozen=True)
class ShapeSet:
    """Union of ``parts`` minus the union of ``holes``."""

    parts: Tuple[Tuple[str, Tuple[float, ...]], ...]
    holes: Tuple[Tuple[str, Tuple[float, ...]], ...] = ()
    caption: str = ""
    framed: bool = False
    horizon: bool = False


PRIMITIVES: Dict[str, Callable[..., Primitive]] = {
    "disk": disk,
    "ellipse": ellipse,
    "rect": rect,
    "triangle": triangle,
    "diamond": diamond,
    "star": star,
    "hexagon": hexagon,
}

SHAPES: Dict[SemanticKey, ShapeSet] = {
    SemanticKey.CIRCLE_ON_HORIZON: ShapeSet(
        parts=(("disk", (0.0, 0.0, 1.0)),), caption="a dark circle above a horizon", horizon=True
    ),
    SemanticKey.TRIANGLE_CLUSTER: ShapeSet(
        parts=(
            ("triangle", (-0.9, 0.3, 0.6, 1.0)),
            ("triangle", (0.9, 0.3, 0.6, 1.0)),
            ("triangle", (0.0, -0.5, 0.6, 1.0)),
        ),
        caption="a cluster of three triangles",
    ),
    SemanticKey.RECT_GRID: ShapeSet(
        parts=tuple(("rect", (x, y, 0.4, 0.4)) for x in (-0.55, 0.55) for y in (-0.55, 0.55)),
        caption="a grid of four squares",
    ),
    SemanticKey.CRESCENT: ShapeSet(
        parts=(("disk", (0.0, 0.0, 1.0)),), holes=(("disk", (0.9, 0.0, 0.8)),), caption="a crescent moon"
    ),
    SemanticKey.STAR: ShapeSet(parts=(("star", (0.0, 0.0, 1.2)),), caption="a five-pointed star"),
    SemanticKey.DIAMOND: ShapeSet(parts=(("diamond", (0.0, 0.0, 0.8, 1.2)),), caption="a tall diamond"),
    SemanticKey.CROSS: ShapeSet(
        parts=(("rect", (0.0, 0.0, 1.1, 0.3)), ("rect", (0.0, 0.0, 0.3, 1.1))), caption="a plus-shaped cross"
    ),
    SemanticKey.ELLIPSE_PAIR: ShapeSet(
        parts=(("ellipse", (-0.6, 0.0, 0.55, 0.9)), ("ellipse", (0.6, 0.0, 0.55, 0.9))),
        caption="two upright ellipses side by side",
    ),
    SemanticKey.HEXAGON: ShapeSet(parts=(("hexagon", (0.0, 0.0, 1.0)),), caption="a hexagon"),
    SemanticKey.HOUSE: ShapeSet(
        parts=(("rect", (0.0, 0.35, 0.8, 0.6)), ("triangle", (0.0, -0.6, 1.0, 0.7))),
        caption="a small house with a pointed roof",
    ),
    SemanticKey.TREE: ShapeSet(
        parts=(("triangle", (0.0, -0.3, 0.8, 1.4)), ("rect", (0.0, 0.7, 0.15, 0.35))),
        caption="a pine tree",
        horizon=True,
    ),
    SemanticKey.SAILBOAT: ShapeSet(
        parts=(("triangle", (0.1, -0.35, 0.55, 1.2)), ("rect", (0.0, 0.5, 0.9, 0.15))),
        caption="a sailboat on the water",
        horizon=True,
    ),
    SemanticKey.MOUNTAIN: ShapeSet(parts=(("triangle", (0.0, 0.0, 1.3, 1.4)),), caption="a lone mountain peak"),
    SemanticKey.PILLAR_PAIR: ShapeSet(
        parts=(("rect", (-0.6, 0.0, 0.25, 1.1)), ("rect", (0.6, 0.0, 0.25, 1.1))), caption="a pair of pillars"
    ),
    SemanticKey.FRAMED_WINDOW: ShapeSet(
        parts=(("rect", (0.0, 0.0, 0.8, 0.8)),), caption="a square window inside a frame", framed=True
    ),
    SemanticKey.MOON_AND_STAR: ShapeSet(
        parts=(("disk", (-0.4, 0.0, 0.8)), ("star", (0.9, -0.5, 0.45))),
        holes=(("disk", (0.3, 0.0, 0.65)),),
        caption="a crescent moon next to a star",
    ),
    SemanticKey.FRAMED_DISK: ShapeSet(
        parts=(("disk", (0.0, 0.0, 1.0)),), caption="a round disk inside a frame", framed=True
    ),
}


def caption_for(key: SemanticKey) -> str:
    """Caption template of a semantic class."""
    return SHAPES[SemanticKey(key)].caption


def _build_shape(spec: SceneSpec) -> Tuple[List[Primitive], List[Primitive]]:
    shape = SHAPES[SemanticKey(spec.semantic_key)]
    rng = np.random.default_rng(spec.layout_seed)

    def build(entries: Tuple[Tuple[str, Tuple[float, ...]], ...]) -> List[Primitive]:
        built = []
        for kind, args in entries:
            jitter = rng.uniform(-0.12, 0.12, size=2)
            built.append(PRIMITIVES[kind](args[0] + jitter[0], args[1] + jitter[1], *args[2:]))
        return built

    return build(shape.parts), build(shape.holes)


@dataclass(frozen=True)
class ShapeGeometry:
    """Area, centroid and bounding box of a subject at unit scale, in shape units."""

    area: float
    centroid: Tuple[float, float]
    lower: Tuple[float, float]
    upper: Tuple[float, float]

    def fit_scale(self) -> float:
        """Largest scale at which the whole subject fits inside the frame."""
        return min(1.0 / (self.upper[axis] - self.lower[axis]) for axis in (0, 1))

    def max_scale(self, cx: float, cy: float) -> float:
        """Largest scale at which the subject, with its centroid on (cx, cy), stays inside the frame."""
        limits = []
        for axis, target in enumerate((cx, cy)):
            limits.append(target / (self.centroid[axis] - self.lower[axis]))
            limits.append((1.0 - target) / (self.upper[axis] - self.centroid[axis]))
        return max(0.0, min(limits))

    def max_size(self, cx: float, cy: float) -> float:
        """Largest area share that can be placed with its centroid on (cx, cy)."""
        return self.area * self.max_scale(cx, cy) ** 2

    def clamp_origin(self, origin: Tuple[float, float], scale: float) -> Tuple[float, float]:
        """Move ``origin`` so the scaled bounding box lies inside [0, 1]²; centre it if it cannot."""
        clamped = []
        for axis in (0, 1):
            low = -scale * self.lower[axis]
            high = 1.0 - scale * self.upper[axis]
            clamped.append((low + high) / 2.0 if low > high else min(max(origin[axis], low), high))
        return clamped[0], clamped[1]


@lru_cache(maxsize=4096)
def shape_geometry(spec: SceneSpec) -> ShapeGeometry:
    """Geometry of the jittered subject of ``spec``, sampled on a fine grid."""
    parts, holes = _build_shape(spec)
    axis = np.linspace(-GEOMETRY_EXTENT, GEOMETRY_EXTENT, GEOMETRY_SAMPLES)
    step = float(axis[1] - axis[0])
    mask = _subject_mask(parts, holes, np.meshgrid(axis, axis), (0.0, 0.0), 1.0)
    rows, cols = np.nonzero(mask)
    us, vs = axis[cols], axis[rows]
    return ShapeGeometry(
        area=float(mask.sum()) * step * step,
        centroid=(float(us.mean()), float(vs.mean())),
        lower=(float(us.min()) - step / 2.0, float(vs.min()) - step / 2.0),
        upper=(float(us.max()) + step / 2.0, float(vs.max()) + step / 2.0),
    )


def fit_params(spec: SceneSpec, params: AestheticParams) -> AestheticParams:
    """
    Shrink ``params.size`` until the subject of ``spec`` can sit on (cx, cy) without leaving the frame.

    Parameters that already fit are returned unchanged.
    """
    cap = FIT_MARGIN * shape_geometry(spec).max_size(params.cx, params.cy)
    if params.size <= cap:
        return params
    return params.replace(size=max(cap, MIN_FITTED_SIZE))


def _subject_mask(
    parts: List[Primitive], holes: List[Primitive], grid: Field2D, origin: Tuple[float, float], scale: float
) -> np.ndarray:
    gx, gy = grid
    u = (gx - origin[0]) / scale
    v = (gy - origin[1]) / scale
    mask = np.zeros(gx.shape, dtype=bool)
    for part in parts:
        mask |= part(u, v)
    for hole in holes:
        mask &= ~hole(u, v)
    return mask


def _centroid(mask: np.ndarray, side: int) -> Tuple[float, float]:
    rows, cols = np.nonzero(mask)
    return (cols.mean() + 0.5) / side, (rows.mean() + 0.5) / side


def _place(
    parts: List[Primitive],
    holes: List[Primitive],
    geometry: ShapeGeometry,
    grid: Field2D,
    side: int,
    cx: float,
    cy: float,
    scale: float,
) -> np.ndarray:
    """Mask at ``scale`` with its centroid pulled onto (cx, cy) as far as the frame allows."""
    origin = geometry.clamp_origin((cx - scale * geometry.centroid[0], cy - scale * geometry.centroid[1]), scale)
    mask = _subject_mask(parts, holes, grid, origin, scale)
    if not mask.any():
        return mask
    best, best_error = mask, np.inf
    for _ in range(CENTROID_PASSES):
        mx, my = _centroid(mask, side)
        error = np.hypot(mx - cx, my - cy)
        if error < best_error:
            best, best_error = mask, error
        if error < 1e-9:
            break
        origin = geometry.clamp_origin((origin[0] + cx - mx, origin[1] + cy - my), scale)
        mask = _subject_mask(parts, holes, grid, origin, scale)
        if not mask.any():
            break
    return best


def render_mask(spec: SceneSpec, params: AestheticParams, side: int) -> np.ndarray:
    """
    Subject mask whose area matches ``params.size`` and centroid ``(cx, cy)``.

    The subject scale is found by bisection on the placed mask's pixel count,
    never beyond the scale at which the subject fills the frame. Placement
    keeps the subject's bounding box inside the image, so a request that does
    not fit (see ``fit_params``) lands as close to (cx, cy) as the frame allows.

    Raises:
        SceneSpecError: If no scale yields a visible subject
    """
    parts, holes = _build_shape(spec)
    geometry = shape_geometry(spec)
    centres = (np.arange(side) + 0.5) / side
    grid = np.meshgrid(centres, centres)
    target = params.size * side * side

    def place(scale: float) -> np.ndarray:
        return _place(parts, holes, geometry, grid, side, params.cx, params.cy, scale)

    low, high = 0.0, geometry.fit_scale()
    for _ in range(SEARCH_ITERATIONS):
        mid = (low + high) / 2.0
        if place(mid).sum() < target:
            low = mid
        else:
            high = mid
    above = place(high)
    below = place(low) if low > 0.0 else np.zeros_like(above)
    if below.any() and target - below.sum() < above.sum() - target:
        return below
    if above.any():
        return above
    raise SceneSpecError(
        message=f"Subject of {spec.semantic_key} is not visible at side {side}",
        error_code="SCENE_EMPTY_SUBJECT",
        details={"semantic_key": str(spec.semantic_key), "layout_seed": spec.layout_seed, "size": params.size},
    )


def base_hsv(spec: SceneSpec, mask: np.ndarray) -> np.ndarray:
    """Unmodified HSV rendering: hue-gradient background, darker subject."""
    side = mask.shape[0]
    background_hue, subject_hue, decoration_hue = PALETTES[spec.palette_id]
    shape = SHAPES[SemanticKey(spec.semantic_key)]
    rows = (np.arange(side) + 0.5) / side
    hue = np.repeat(((background_hue + BACKGROUND_HUE_SPAN * rows) % 1.0)[:, None], side, axis=1)

    if shape.horizon:
        hue[rows > 0.7, :] = decoration_hue
    if shape.framed:
        coords = (np.arange(side) + 0.5) / side
        outer = (coords >= FRAME_INSET) & (coords <= 1.0 - FRAME_INSET)
        inner = (coords >= FRAME_INSET + FRAME_WIDTH) & (coords <= 1.0 - FRAME_INSET - FRAME_WIDTH)
        band = np.outer(outer, outer) & ~np.outer(inner, inner)
        hue[band] = decoration_hue

    hue[mask] = subject_hue
    saturation = np.ones((side, side))
    value = np.where(mask, SUBJECT_VALUE, 1.0)
    return np.stack([hue, saturation, value], axis=-1)


def apply_aesthetics(hsv: np.ndarray, params: AestheticParams) -> np.ndarray:
    """Hue rotation, S and V scaling, conversion to RGB and Gaussian blur."""
    adjusted = np.stack(
        [
            (hsv[..., 0] + params.hue_shift) % 1.0,
            hsv[..., 1] * params.saturation,
            hsv[..., 2] * params.brightness,
        ],
        axis=-1,
    )
    rgb = hsv_to_rgb(adjusted)
    if params.blur > 0.0:
        rgb = ndimage.gaussian_filter(rgb, sigma=(params.blur, params.blur, 0.0), mode="nearest")
    return np.clip(rgb, 0.0, 1.0).astype(np.float32)


def generate_scene(spec: SceneSpec, params: AestheticParams, side: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render one scene.

    Args:
        spec: Semantic class, layout seed and palette
        params: Aesthetic parameters
        side: Output side in pixels

    Returns:
        tuple: (image (side, side, 3) float32 in [0, 1], subject mask (side, side) bool before blur)

    Raises:
        SceneSpecError: If the spec or side is invalid
    """
    if side not in SUPPORTED_SIDES:
        raise SceneSpecError(
            message=f"Unsupported side {side}; expected one of {SUPPORTED_SIDES}",
            error_code="SCENE_SIDE",
            details={"side": side},
        )
    if spec.semantic_key not in SHAPES or not 0 <= spec.palette_id < len(PALETTES) or spec.layout_seed < 0:
        raise SceneSpecError(
            message=f"Invalid scene spec: {spec!r}",
            error_code="SCENE_SPEC",
            details={"semantic_key": str(spec.semantic_key), "palette_id": spec.palette_id},
        )
    params = params.check()
    mask = render_mask(spec, params, side)
    return apply_aesthetics(base_hsv(spec, mask), params), mask


def base_rendering(spec: SceneSpec, params: AestheticParams, side: int) -> np.ndarray:
    """The scene before colour and blur modifications; subject size and placement come from ``params``."""
    mask = render_mask(spec, params.check(), side)
    return np.clip(hsv_to_rgb(base_hsv(spec, mask)), 0.0, 1.0).astype(np.float32)
