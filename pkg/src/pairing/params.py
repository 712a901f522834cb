"""Aesthetic parameters controlling a rendered scene."""

from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.core.exceptions import ParameterRangeError


class AestheticParams(BaseModel):
    """
    Rendering knobs of one image.

    ``saturation`` and ``brightness`` scale the HSV S and V channels,
    ``hue_shift`` rotates hue, ``(cx, cy)`` is the subject centroid in
    normalized image coordinates (y grows downwards), ``blur`` is a Gaussian
    std in pixels and ``size`` the subject's share of the image area.
    """

    saturation: float = Field(default=0.75, ge=0.0, le=1.0)
    brightness: float = Field(default=0.65, ge=0.0, le=1.0)
    hue_shift: float = Field(default=0.0, ge=0.0, lt=1.0)
    cx: float = Field(default=1.0 / 3.0, ge=0.0, le=1.0)
    cy: float = Field(default=1.0 / 3.0, ge=0.0, le=1.0)
    blur: float = Field(default=0.0, ge=0.0, le=2.0)
    size: float = Field(default=0.2, gt=0.0, le=0.9)

    model_config = ConfigDict(frozen=True)

    @classmethod
    def create(cls, **values: Any) -> "AestheticParams":
        """
        Validate and build parameters.

        Raises:
            ParameterRangeError: If any field is outside its range
        """
        try:
            return cls(**{name: float(value) for name, value in values.items()})
        except ValidationError as e:
            raise ParameterRangeError(
                message=f"Aesthetic parameters out of range: {e.errors()[0]['loc'][0]}",
                error_code="PARAMETER_RANGE",
                details={"errors": [
                    {"field": str(err["loc"][0]), "message": err["msg"]} for err in e.errors()
                ]},
            ) from e

    def check(self) -> "AestheticParams":
        """Re-validate an instance that may have bypassed validation."""
        return AestheticParams.create(**self.model_dump())

    def replace(self, **changes: Any) -> "AestheticParams":
        values: Dict[str, Any] = self.model_dump()
        values.update(changes)
        return AestheticParams.create(**values)
