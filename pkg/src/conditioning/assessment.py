"""
Standardised textual aesthetic assessments.

An assessment names one token per colour category (saturation, lighting,
lighting technique) and one per structure category (focus, shot type,
composition, composition technique). Its canonical string form is::

    Color: well-saturated; balanced light; warm tone. Structure: sharp focus; medium shot; rule-of-thirds composition; none.
"""

from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

from src.core.exceptions import UnknownTokenError

COLOR_CATEGORIES: Tuple[Tuple[str, Tuple[str, ...]], ...] = (
    ("saturation", ("undersaturated", "well-saturated", "oversaturated")),
    ("lighting", ("poor light", "balanced light", "bright light")),
    ("lighting technique", ("warm tone", "cool tone", "neutral tone")),
)

STRUCTURE_CATEGORIES: Tuple[Tuple[str, Tuple[str, ...]], ...] = (
    ("focus", ("sharp focus", "soft focus")),
    ("shot type", ("close-up", "medium shot", "wide shot")),
    (
        "composition",
        ("centered composition", "rule-of-thirds composition", "off-balance composition"),
    ),
    ("composition technique", ("framing", "symmetry", "none")),
)

COLOR_VOCABULARY: Tuple[str, ...] = tuple(t for _, tokens in COLOR_CATEGORIES for t in tokens)
STRUCTURE_VOCABULARY: Tuple[str, ...] = tuple(t for _, tokens in STRUCTURE_CATEGORIES for t in tokens)

# One shared id space: colour tokens first, then structure tokens.
TOKEN_IDS: Dict[str, int] = {
    token: index for index, token in enumerate(COLOR_VOCABULARY + STRUCTURE_VOCABULARY)
}
VOCABULARY_SIZE = len(TOKEN_IDS)


def _canonical_order(tokens: List[str], vocabulary: Tuple[str, ...]) -> List[str]:
    for token in tokens:
        if token not in vocabulary:
            raise UnknownTokenError(token)
    return sorted(tokens, key=vocabulary.index)


class Assessment(BaseModel):
    """A standardised assessment split into colour and structure tokens."""

    color: List[str]
    structure: List[str]

    model_config = ConfigDict(frozen=True)

    @field_validator("color", mode="before")
    @classmethod
    def check_color(cls, v: List[str]) -> List[str]:
        return _canonical_order(list(v), COLOR_VOCABULARY)

    @field_validator("structure", mode="before")
    @classmethod
    def check_structure(cls, v: List[str]) -> List[str]:
        return _canonical_order(list(v), STRUCTURE_VOCABULARY)

    def render(self) -> str:
        """Canonical string form."""
        return f"Color: {'; '.join(self.color)}. Structure: {'; '.join(self.structure)}."

    def color_ids(self) -> List[int]:
        return [TOKEN_IDS[t] for t in self.color]

    def structure_ids(self) -> List[int]:
        return [TOKEN_IDS[t] for t in self.structure]

    @classmethod
    def parse(cls, text: str) -> "Assessment":
        """
        Parse the canonical string form.

        Raises:
            UnknownTokenError: If the text does not follow the canonical form or names an unknown token
        """
        stripped = text.strip()
        if not stripped.startswith("Color:") or ". Structure:" not in stripped or not stripped.endswith("."):
            raise UnknownTokenError(stripped)
        color_part, structure_part = stripped[len("Color:") : -1].split(". Structure:", 1)
        return cls(color=_split_tokens(color_part), structure=_split_tokens(structure_part))


def _split_tokens(part: str) -> List[str]:
    return [token.strip() for token in part.split(";") if token.strip()]
