"""
Checkpoint container

Binary layout (all integers little-endian):

    magic        8 bytes  b"SNMTCKPT"
    version      1 byte
    header_len   u32
    header       UTF-8 JSON (CheckpointHeader)
    array_count  u32
    per array:   u16 name_len, name (UTF-8), u8 rank, rank x u32 extents,
                 product(extents) x float64 payload

Arrays are written in sorted name order so identical parameters give
identical bytes.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from backend.app.core.exceptions import CheckpointError
from backend.app.modules.model.parameters import ModelParameters
from backend.app.modules.model.schemas import EmbeddingSpec, ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"SNMTCKPT"
VERSION = 1


class CheckpointHeader(BaseModel):
    """Self-description stored ahead of the arrays"""
    model: ModelConfig
    embedding: EmbeddingSpec
    decoders: Dict[str, int] = Field(..., description="Target vocabulary size per decoder prefix")
    vocab_hashes: Dict[str, str] = Field(
        default_factory=dict,
        description="Content hash per vocabulary role (source, target, tag, feature:<name>)"
    )
    mode: str = Field("baseline", description="Integration strategy the model was trained for")
    step: int = Field(0, description="Optimizer updates applied")
    dev_bleu: Optional[float] = Field(None, description="Dev BLEU at save time")


def save_checkpoint(
    path: Union[str, Path],
    params: ModelParameters,
    vocab_hashes: Optional[Dict[str, str]] = None,
    mode: str = "baseline",
    step: int = 0,
    dev_bleu: Optional[float] = None
) -> Path:
    """
    Write parameters and their layout to one file.

    Returns:
        Path written
    """
    header = CheckpointHeader(
        model=params.config,
        embedding=params.spec,
        decoders=params.decoders,
        vocab_hashes=dict(sorted((vocab_hashes or {}).items())),
        mode=mode,
        step=step,
        dev_bleu=dev_bleu
    )
    header_bytes = header.model_dump_json().encode("utf-8")

    chunks = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(header_bytes)), header_bytes]
    names = sorted(params.arrays)
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        array = np.ascontiguousarray(params.arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.tobytes(order="C"))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.debug(f"Checkpoint written: {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint", details={"offset": self.offset})
        chunk = self.data[self.offset: self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(
    path: Union[str, Path],
    expected_hashes: Optional[Dict[str, str]] = None
) -> Tuple[ModelParameters, CheckpointHeader]:
    """
    Read a checkpoint written by save_checkpoint.

    Args:
        path: Checkpoint file
        expected_hashes: Vocabulary hashes the caller is using; every role
            present in both must match

    Returns:
        (parameters, header)

    Raises:
        CheckpointError: Bad magic, unsupported version, truncation or vocabulary mismatch
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = reader.unpack("<B")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}",
            details={"version": version, "supported": VERSION}
        )
    (header_len,) = reader.unpack("<I")
    try:
        header = CheckpointHeader.model_validate_json(reader.take(header_len))
    except ValidationError as e:
        raise CheckpointError(f"{path}: unreadable header", details={"errors": str(e)})

    for role, expected in (expected_hashes or {}).items():
        stored = header.vocab_hashes.get(role)
        if stored is not None and stored != expected:
            raise CheckpointError(
                f"{path}: {role} vocabulary differs from the one the checkpoint was trained with",
                details={"role": role, "stored": stored, "expected": expected}
            )

    (count,) = reader.unpack("<I")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if shape else 1
        payload = reader.take(8 * size)
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)

    if reader.offset != len(reader.data):
        raise CheckpointError(f"{path}: trailing bytes after the last array")
    try:
        params = ModelParameters(header.model, header.embedding, header.decoders, arrays)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: arrays do not match the stored layout: {e}")
    return params, header
