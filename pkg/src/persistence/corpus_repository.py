"""
File-system repository for the synthetic corpus.

Layout under the corpus root::

    images/000000.png      8-bit RGB
    masks/000000.png       8-bit grayscale, 255 marks the subject
    metadata.jsonl         one ImageRecord per line, sorted by id
    triplets_train.jsonl   TripletIndexEntry lines
    triplets_test.jsonl
    corpus_stats.json
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from PIL import Image

from src.core.exceptions import CorpusIOError
from src.core.logging_config import LoggerMixin
from src.pairing.pairs import ScoredImage, Triplet, make_triplet
from src.persistence.models import CorpusStats, ImageRecord, TripletIndexEntry

METADATA_FILE = "metadata.jsonl"
STATS_FILE = "corpus_stats.json"


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: Path, array: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] or an (H, W) boolean mask."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if array.dtype == bool:
        Image.fromarray(array.astype(np.uint8) * 255).save(path, format="PNG")
    else:
        Image.fromarray(quantize(array)).save(path, format="PNG")


def read_png(path: Path, mask: bool = False) -> np.ndarray:
    with Image.open(path) as img:
        if mask:
            return np.asarray(img.convert("L")) > 127
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


class CorpusRepository(LoggerMixin):
    """
    Repository for corpus images, metadata and triplet indexes.

    All I/O failures surface as CorpusIOError.
    """

    def __init__(self, root: Path):
        """Initialize the repository rooted at ``root``."""
        self.root = Path(root)

    def index_path(self, split: str) -> Path:
        return self.root / f"triplets_{split}.jsonl"

    def write_corpus(self, images: Sequence[ScoredImage]) -> None:
        """
        Write image and mask PNGs plus the metadata file.

        Args:
            images: Scored images

        Raises:
            CorpusIOError: If writing fails
        """
        try:
            self.logger.info("writing_corpus", root=str(self.root), num_images=len(images))
            self.root.mkdir(parents=True, exist_ok=True)
            ordered = sorted(images, key=lambda item: item.record.id)
            for item in ordered:
                write_png(self.root / item.record.image_png_path, item.image)
                write_png(self.root / item.record.mask_png_path, item.mask)
            self._write_lines(self.root / METADATA_FILE, (item.record.to_json_line() for item in ordered))
            self.logger.info("corpus_written", root=str(self.root), num_images=len(images))
        except OSError as e:
            self.logger.error("corpus_write_failed", root=str(self.root), error=str(e), exc_info=True)
            raise CorpusIOError(
                message=f"Failed to write corpus: {self.root}",
                error_code="CORPUS_WRITE",
                details={"root": str(self.root), "error": str(e)},
            ) from e

    def read_records(self) -> List[ImageRecord]:
        """
        Read all metadata records.

        Raises:
            CorpusIOError: If the metadata file is missing or malformed
        """
        path = self.root / METADATA_FILE
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
            records = [ImageRecord.from_json_line(line) for line in lines if line.strip()]
        except OSError as e:
            raise CorpusIOError(
                message=f"Cannot read corpus metadata: {path}",
                error_code="CORPUS_READ",
                details={"path": str(path), "error": str(e)},
            ) from e
        except ValueError as e:
            raise CorpusIOError(
                message=f"Malformed corpus metadata: {path}",
                error_code="CORPUS_METADATA",
                details={"path": str(path), "error": str(e)},
            ) from e
        self.logger.debug("corpus_records_read", count=len(records))
        return records

    def read_images(self, records: Optional[Iterable[ImageRecord]] = None) -> List[ScoredImage]:
        """Load pixels and masks for ``records`` (all records by default)."""
        records = list(records) if records is not None else self.read_records()
        try:
            return [
                ScoredImage(
                    record=record,
                    image=read_png(self.root / record.image_png_path),
                    mask=read_png(self.root / record.mask_png_path, mask=True),
                )
                for record in records
            ]
        except OSError as e:
            raise CorpusIOError(
                message=f"Cannot read corpus images under {self.root}",
                error_code="CORPUS_READ",
                details={"root": str(self.root), "error": str(e)},
            ) from e

    def write_index(self, split: str, entries: Sequence[TripletIndexEntry]) -> Path:
        """Write a triplet index file for ``split``."""
        path = self.index_path(split)
        try:
            self._write_lines(path, (entry.to_json_line() for entry in entries))
        except OSError as e:
            raise CorpusIOError(
                message=f"Failed to write triplet index: {path}",
                error_code="CORPUS_WRITE",
                details={"path": str(path), "error": str(e)},
            ) from e
        self.logger.info("triplet_index_written", split=split, count=len(entries))
        return path

    def read_index(self, split: str) -> List[TripletIndexEntry]:
        path = self.index_path(split)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
            return [TripletIndexEntry.model_validate_json(line) for line in lines if line.strip()]
        except OSError as e:
            raise CorpusIOError(
                message=f"Cannot read triplet index: {path}",
                error_code="CORPUS_READ",
                details={"path": str(path), "error": str(e)},
            ) from e
        except ValueError as e:
            raise CorpusIOError(
                message=f"Malformed triplet index: {path}",
                error_code="CORPUS_INDEX",
                details={"path": str(path), "error": str(e)},
            ) from e

    def load_triplets(self, split: str, limit: int = 0) -> List[Triplet]:
        """
        Materialize the triplets of an index file.

        Args:
            split: ``train`` or ``test``
            limit: Keep only the first ``limit`` entries (0 keeps all)

        Raises:
            CorpusIOError: If files are missing or an id is unknown
        """
        entries = self.read_index(split)
        if limit:
            entries = entries[:limit]
        records: Dict[int, ImageRecord] = {r.id: r for r in self.read_records()}
        wanted = sorted({e.input_id for e in entries} | {e.reference_id for e in entries})
        missing = [i for i in wanted if i not in records]
        if missing:
            raise CorpusIOError(
                message=f"Triplet index references unknown image ids: {missing[:5]}",
                error_code="CORPUS_INDEX",
                details={"missing": missing[:20]},
            )
        loaded = {item.record.id: item for item in self.read_images(records[i] for i in wanted)}
        triplets = [make_triplet(loaded[e.input_id], loaded[e.reference_id]) for e in entries]
        self.logger.info("triplets_loaded", split=split, count=len(triplets))
        return triplets

    def write_stats(self, stats: CorpusStats) -> Path:
        path = self.root / STATS_FILE
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            path.write_text(stats.model_dump_json(indent=2), encoding="utf-8")
        except OSError as e:
            raise CorpusIOError(
                message=f"Failed to write corpus stats: {path}",
                error_code="CORPUS_WRITE",
                details={"path": str(path), "error": str(e)},
            ) from e
        return path

    def read_stats(self) -> Optional[CorpusStats]:
        path = self.root / STATS_FILE
        if not path.exists():
            return None
        return CorpusStats.model_validate_json(path.read_text(encoding="utf-8"))

    @staticmethod
    def _write_lines(path: Path, lines: Iterable[str]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for line in lines:
                handle.write(line + "\n")
