"""
Binary checkpoint codec.

Layout (all integers unsigned 32-bit little-endian)::

    b"DIAE" | version | config length | config text (UTF-8)
    record*: name length | name (UTF-8) | rank | extent*rank | float32 LE data

Records are written sorted by name, so encoding is canonical and
save → load → save is byte-identical. Parameters are stored as
``param/<name>``, AdamW moments as ``adam.m/<name>`` and ``adam.v/<name>``,
counters under ``meta/``. A counter is an unsigned 64-bit integer split into
low and high 32-bit words whose bits are stored as the two float32 values of
its record, so it survives the codec exactly.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from src.core.config import RunConfig, parse_config_text
from src.core.exceptions import CheckpointFormatError, CheckpointMismatchError, ConfigurationError
from src.core.logging_config import LoggerMixin
from src.numerics.optim import AdamWState

MAGIC = b"DIAE"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_WORD = 1 << 32

PARAM_PREFIX = "param/"
ADAM_M_PREFIX = "adam.m/"
ADAM_V_PREFIX = "adam.v/"
STEP_RECORD = "meta/step"
ADAM_STEP_RECORD = "meta/adam_step"


def encode_counter(value: int) -> np.ndarray:
    """Bit-cast a non-negative integer below 2**64 into a two-element float32 record."""
    words = np.array([value % _WORD, value // _WORD], dtype="<u4")
    return words.view("<f4")


def decode_counter(record: np.ndarray) -> int:
    """
    Inverse of ``encode_counter``.

    Raises:
        CheckpointFormatError: If the record is not a two-word counter
    """
    if record.shape != (2,):
        raise CheckpointFormatError(
            message="Counter record must hold two 32-bit words",
            error_code="CHECKPOINT_COUNTER",
            details={"shape": list(record.shape)},
        )
    low, high = np.ascontiguousarray(record, dtype="<f4").view("<u4").tolist()
    return int(low) + int(high) * _WORD


@dataclass
class Checkpoint:
    """Model parameters, optimizer state, resolved config and step counter."""

    config: RunConfig
    params: Dict[str, np.ndarray]
    optimizer: AdamWState = field(default_factory=AdamWState)
    step: int = 0

    def records(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for name, value in self.params.items():
            out[PARAM_PREFIX + name] = value
        for name, value in self.optimizer.m.items():
            out[ADAM_M_PREFIX + name] = value
        for name, value in self.optimizer.v.items():
            out[ADAM_V_PREFIX + name] = value
        out[STEP_RECORD] = encode_counter(self.step)
        out[ADAM_STEP_RECORD] = encode_counter(self.optimizer.step)
        return out


@dataclass(frozen=True)
class RecordInfo:
    """Name, shape and checksum of one record, for inspection."""

    name: str
    shape: Tuple[int, ...]
    sha256: str


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize to the canonical binary layout."""
    config_blob = checkpoint.config.to_config_text().encode("utf-8")
    parts: List[bytes] = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(config_blob)), config_blob]
    for name, value in sorted(checkpoint.records().items()):
        array = np.ascontiguousarray(value, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(extent) for extent in array.shape)
        parts.append(array.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise CheckpointFormatError(
                message="Checkpoint is truncated",
                error_code="CHECKPOINT_TRUNCATED",
                details={"offset": self.offset, "wanted": count, "size": len(self.data)},
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    @property
    def done(self) -> bool:
        return self.offset >= len(self.data)


def decode_records(data: bytes) -> Tuple[str, Dict[str, np.ndarray]]:
    """
    Parse raw bytes into the config text and the named records.

    Raises:
        CheckpointFormatError: On bad magic, unsupported version or truncation
    """
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointFormatError(message="Not a checkpoint file (bad magic)", error_code="CHECKPOINT_MAGIC")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            message=f"Unsupported checkpoint version {version}",
            error_code="CHECKPOINT_VERSION",
            details={"version": version, "supported": FORMAT_VERSION},
        )
    config_text = reader.take(reader.u32()).decode("utf-8")
    records: Dict[str, np.ndarray] = {}
    while not reader.done:
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        array = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        records[name] = array.astype(np.float32)
    return config_text, records


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parse bytes produced by ``encode_checkpoint``.

    Raises:
        CheckpointFormatError: On malformed content or an invalid embedded config
    """
    config_text, records = decode_records(data)
    try:
        config = RunConfig.model_validate(parse_config_text(config_text))
    except (ConfigurationError, ValueError) as e:
        raise CheckpointFormatError(
            message="Checkpoint carries an invalid configuration",
            error_code="CHECKPOINT_CONFIG",
            details={"error": str(e)},
        ) from e

    params: Dict[str, np.ndarray] = {}
    moments_m: Dict[str, np.ndarray] = {}
    moments_v: Dict[str, np.ndarray] = {}
    for name, value in records.items():
        if name.startswith(PARAM_PREFIX):
            params[name[len(PARAM_PREFIX) :]] = value
        elif name.startswith(ADAM_M_PREFIX):
            moments_m[name[len(ADAM_M_PREFIX) :]] = value
        elif name.startswith(ADAM_V_PREFIX):
            moments_v[name[len(ADAM_V_PREFIX) :]] = value
    step = decode_counter(records[STEP_RECORD]) if STEP_RECORD in records else 0
    adam_step = decode_counter(records[ADAM_STEP_RECORD]) if ADAM_STEP_RECORD in records else 0
    return Checkpoint(
        config=config,
        params=params,
        optimizer=AdamWState(m=moments_m, v=moments_v, step=adam_step),
        step=step,
    )


def inspect_records(data: bytes) -> Tuple[str, List[RecordInfo]]:
    """Config text plus name, shape and SHA-256 of every record."""
    config_text, records = decode_records(data)
    infos = [
        RecordInfo(
            name=name,
            shape=tuple(value.shape),
            sha256=hashlib.sha256(value.astype("<f4").tobytes()).hexdigest(),
        )
        for name, value in records.items()
    ]
    return config_text, infos


def check_compatible(params: Dict[str, np.ndarray], expected: Dict[str, np.ndarray]) -> None:
    """
    Require identical parameter names and shapes.

    Raises:
        CheckpointMismatchError: If names or shapes differ
    """
    missing = sorted(set(expected) - set(params))
    unexpected = sorted(set(params) - set(expected))
    wrong = sorted(n for n in set(params) & set(expected) if params[n].shape != expected[n].shape)
    if missing or unexpected or wrong:
        raise CheckpointMismatchError(
            message="Checkpoint parameters do not match the configured model",
            error_code="CHECKPOINT_MISMATCH",
            details={"missing": missing[:10], "unexpected": unexpected[:10], "wrong_shape": wrong[:10]},
        )


class CheckpointRepository(LoggerMixin):
    """Reads and writes checkpoint files."""

    def save(self, checkpoint: Checkpoint, path: Path) -> Path:
        """
        Write a checkpoint atomically.

        Raises:
            PersistenceError: If writing fails
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(encode_checkpoint(checkpoint))
            tmp.replace(path)
        except OSError as e:
            self.logger.error("checkpoint_save_failed", path=str(path), error=str(e))
            raise CheckpointFormatError(
                message=f"Failed to write checkpoint: {path}",
                error_code="CHECKPOINT_WRITE",
                details={"path": str(path), "error": str(e)},
            ) from e
        self.logger.info("checkpoint_saved", path=str(path), step=checkpoint.step)
        return path

    def load(self, path: Path) -> Checkpoint:
        """
        Read a checkpoint.

        Raises:
            CheckpointFormatError: If the file is missing or malformed
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointFormatError(
                message=f"Cannot read checkpoint: {path}",
                error_code="CHECKPOINT_READ",
                details={"path": str(path), "error": str(e)},
            ) from e
        checkpoint = decode_checkpoint(data)
        self.logger.info("checkpoint_loaded", path=str(path), step=checkpoint.step)
        return checkpoint
