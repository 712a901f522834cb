"""
Data models for the persistence layer.

This module defines the records stored on disk for the synthetic corpus:
one metadata line per image, one index line per triplet and the corpus
statistics summary.
"""

import json
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.pairing.params import AestheticParams
from src.pairing.scenes import SceneSpec


class ImageRecord(BaseModel):
    """
    Metadata of one corpus image.

    This is the primary record of the corpus; image and mask pixels live
    in PNG files referenced by relative path.
    """

    id: int = Field(ge=0)
    semantic_key: str
    params: AestheticParams
    mos: float = Field(ge=1.0, le=10.0)
    caption: str
    assessment_string: str
    image_png_path: str
    mask_png_path: str
    scene: SceneSpec

    model_config = ConfigDict(frozen=True)

    def to_json_line(self) -> str:
        """
        Serialize as one JSON-Lines record with sorted keys.

        Returns:
            str: JSON text without a trailing newline
        """
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "ImageRecord":
        """
        Parse a record written by ``to_json_line``.

        Args:
            line: JSON text

        Returns:
            ImageRecord: Parsed record
        """
        return cls.model_validate(json.loads(line))


class TripletIndexEntry(BaseModel):
    """One input/reference pairing in a triplet index file."""

    input_id: int = Field(ge=0)
    reference_id: int = Field(ge=0)

    model_config = ConfigDict(frozen=True)

    def to_json_line(self) -> str:
        return json.dumps({"input_id": self.input_id, "reference_id": self.reference_id})


class MosBands(BaseModel):
    """Image counts per MOS band."""

    low: int = 0
    middle: int = 0
    high: int = 0


class CorpusStats(BaseModel):
    """Summary written next to the corpus after generation and pairing."""

    num_images: int = 0
    side: int = 32
    per_key: Dict[str, int] = Field(default_factory=dict)
    bands: MosBands = Field(default_factory=MosBands)
    mean_mos: float = 0.0
    train_triplets: Optional[int] = None
    test_triplets: Optional[int] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)
