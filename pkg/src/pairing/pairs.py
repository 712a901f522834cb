"""
Imperfectly-paired triplet formation.

Within a semantic key every low-MOS image becomes an input and is paired with
the same-key image of highest MOS at or above ``high_min`` (lowest id on
ties). Images in the middle band are excluded.
"""

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from src.conditioning.assessment import Assessment
from src.core.exceptions import EmptyCorpusError, PairingError
from src.pairing.params import AestheticParams
from src.persistence.models import ImageRecord, TripletIndexEntry


@dataclass(frozen=True)
class ScoredImage:
    """An image with its metadata record and ground-truth subject mask."""

    record: ImageRecord
    image: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class Triplet:
    """Input image, same-key reference image and the input's caption and assessment."""

    input_id: int
    reference_id: int
    semantic_key: str
    input_image: np.ndarray
    reference_image: np.ndarray
    caption: str
    assessment: Assessment
    input_mask: np.ndarray
    reference_mask: np.ndarray
    input_params: AestheticParams
    reference_params: AestheticParams
    input_mos: float
    reference_mos: float

    def violations(self, low_max: float, high_min: float) -> List[str]:
        """Names of the triplet invariants this instance breaks."""
        problems = []
        if self.input_mos > low_max:
            problems.append("input_mos_above_low_max")
        if self.reference_mos < high_min:
            problems.append("reference_mos_below_high_min")
        if self.input_image.shape != self.reference_image.shape:
            problems.append("image_shape_mismatch")
        return problems


def check_bands(low_max: float, high_min: float) -> None:
    if not low_max < high_min:
        raise PairingError(
            message=f"low_max ({low_max}) must be below high_min ({high_min})",
            error_code="MOS_BANDS",
            details={"low_max": low_max, "high_min": high_min},
        )


def group_by_key(items: Iterable[ScoredImage]) -> Dict[str, List[ScoredImage]]:
    grouped: Dict[str, List[ScoredImage]] = defaultdict(list)
    for item in items:
        grouped[item.record.semantic_key].append(item)
    return dict(grouped)


def select_pairs(
    records: Mapping[str, Sequence[ImageRecord]], low_max: float, high_min: float
) -> List[TripletIndexEntry]:
    """
    Pairing rule over metadata only.

    Args:
        records: Image records grouped by semantic key
        low_max: Highest MOS an input may have
        high_min: Lowest MOS a reference may have

    Returns:
        list: Index entries sorted by (semantic key, input id)

    Raises:
        EmptyCorpusError: If there are no records
        PairingError: If low_max >= high_min
    """
    check_bands(low_max, high_min)
    if not any(records.get(key) for key in records):
        raise EmptyCorpusError(message="Cannot form pairs from an empty corpus", error_code="EMPTY_CORPUS")

    entries: List[TripletIndexEntry] = []
    for key in sorted(records):
        group = records[key]
        references = [r for r in group if r.mos >= high_min]
        if not references:
            continue
        best = min(references, key=lambda r: (-r.mos, r.id))
        for record in sorted((r for r in group if r.mos <= low_max), key=lambda r: r.id):
            entries.append(TripletIndexEntry(input_id=record.id, reference_id=best.id))
    return entries


def make_triplet(source: ScoredImage, reference: ScoredImage) -> Triplet:
    """Assemble a triplet from an input and its reference."""
    record = source.record
    if record.semantic_key != reference.record.semantic_key:
        raise PairingError(
            message="Input and reference must share a semantic key",
            error_code="KEY_MISMATCH",
            details={"input_id": record.id, "reference_id": reference.record.id},
        )
    return Triplet(
        input_id=record.id,
        reference_id=reference.record.id,
        semantic_key=record.semantic_key,
        input_image=source.image,
        reference_image=reference.image,
        caption=record.caption,
        assessment=Assessment.parse(record.assessment_string),
        input_mask=source.mask,
        reference_mask=reference.mask,
        input_params=record.params,
        reference_params=reference.record.params,
        input_mos=record.mos,
        reference_mos=reference.record.mos,
    )


def form_pairs(corpus: Mapping[str, Sequence[ScoredImage]], low_max: float, high_min: float) -> List[Triplet]:
    """
    Form triplets from scored images grouped by semantic key.

    The result depends only on the set of images, not on their order.

    Raises:
        EmptyCorpusError: If the corpus is empty
        PairingError: If low_max >= high_min
    """
    records = {key: [item.record for item in items] for key, items in corpus.items()}
    by_id = {item.record.id: item for items in corpus.values() for item in items}
    return [
        make_triplet(by_id[entry.input_id], by_id[entry.reference_id])
        for entry in select_pairs(records, low_max, high_min)
    ]


def split_entries(
    entries: Sequence[TripletIndexEntry], train_count: int, test_count: int, seed: int
) -> Tuple[List[TripletIndexEntry], List[TripletIndexEntry]]:
    """
    Seeded train/test split; the test set is taken first so it stays fixed as train_count varies.

    Returns:
        tuple: (train entries, test entries), each sorted by input id
    """
    order = np.random.default_rng(seed).permutation(len(entries))
    shuffled = [entries[i] for i in order]
    test = shuffled[:test_count]
    train = shuffled[test_count : test_count + train_count]
    return sorted(train, key=lambda e: e.input_id), sorted(test, key=lambda e: e.input_id)
