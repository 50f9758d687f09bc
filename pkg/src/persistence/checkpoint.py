"""
Checkpoint Container
Versioned single-file store for a trained model:

    magic (8 bytes) | version (u32) | header length (u64) | JSON header
    | per tensor: payload length (u64) | little-endian float64 values

The header names every tensor with its shape, in payload order, and carries
the vocabulary, schema, model configuration and training seed. Values are
written bit for bit, so a loaded model reproduces predictions exactly.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, List, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from errors import CheckpointError
from features.schema import Schema
from features.vocabulary import Vocabulary
from minet.embedding import ReprSpec
from minet.model import MiNetConfig, ModelParams, build_model

logger = logging.getLogger(__name__)

MAGIC = b"MINETCKP"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")


class TensorEntry(BaseModel):
    name: str
    shape: List[int]


class CheckpointHeader(BaseModel):
    version: int
    seed: int
    network: MiNetConfig
    feature_schema: Schema
    features: List[str]
    tensors: List[TensorEntry]


@dataclass
class Checkpoint:
    """A loaded model with everything needed to score new instances"""
    params: ModelParams
    config: MiNetConfig
    schema: Schema
    vocabulary: Vocabulary
    seed: int
    version: int = FORMAT_VERSION


def save_checkpoint(
    path: Union[str, Path],
    params: ModelParams,
    config: MiNetConfig,
    schema: Schema,
    vocabulary: Vocabulary,
    seed: int,
) -> Path:
    """Write a checkpoint; returns the path written"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = params.parameters()
    header = CheckpointHeader(
        version=FORMAT_VERSION,
        seed=seed,
        network=config,
        feature_schema=schema,
        features=vocabulary.features,
        tensors=[TensorEntry(name=name, shape=t.shape) for name, t in named.items()],
    )
    header_bytes = header.model_dump_json().encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for tensor in named.values():
            payload = np.ascontiguousarray(tensor.data, dtype=PAYLOAD_DTYPE).tobytes()
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)

    logger.info(f"Saved checkpoint {path} ({len(named)} tensors)")
    return path


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_header(f: BinaryIO) -> CheckpointHeader:
    if _read_exact(f, len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a minet checkpoint (bad magic)")
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {FORMAT_VERSION})")
    (length,) = struct.unpack("<Q", _read_exact(f, 8, "header length"))
    try:
        return CheckpointHeader.model_validate_json(_read_exact(f, length, "header"))
    except ValidationError as e:
        raise CheckpointError(f"invalid checkpoint header: {e.error_count()} errors") from None


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint and rebuild its model.

    Raises:
        CheckpointError: bad magic, unsupported version, truncated data or
            tensors that do not match the configured architecture
    """
    path = Path(path)
    with open(path, "rb") as f:
        header = _read_header(f)
        arrays: Dict[str, np.ndarray] = {}
        for entry in header.tensors:
            (length,) = struct.unpack("<Q", _read_exact(f, 8, f"{entry.name} length"))
            expected = int(np.prod(entry.shape)) * PAYLOAD_DTYPE.itemsize
            if length != expected:
                raise CheckpointError(f"{entry.name}: payload of {length} bytes, shape {entry.shape} needs {expected}")
            payload = _read_exact(f, length, entry.name)
            arrays[entry.name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(entry.shape)
        if f.read(1):
            raise CheckpointError("trailing bytes after the last tensor")

    try:
        vocabulary = Vocabulary(features=header.features)
    except ValueError as e:
        raise CheckpointError(f"invalid vocabulary: {e}") from None
    config = header.network
    spec = ReprSpec.from_schema(header.feature_schema, config.embedding_dim)
    params = build_model(config, spec, vocabulary.size, header.seed)

    named = params.parameters()
    if set(named) != set(arrays):
        missing = sorted(set(named) - set(arrays))
        extra = sorted(set(arrays) - set(named))
        raise CheckpointError(f"tensor names do not match the model: missing {missing}, unexpected {extra}")
    for name, tensor in named.items():
        if tensor.shape != list(arrays[name].shape):
            raise CheckpointError(f"{name}: stored shape {list(arrays[name].shape)}, model expects {tensor.shape}")
        tensor.data[...] = arrays[name]

    logger.info(f"Loaded checkpoint {path} ({len(named)} tensors, {vocabulary.size} features)")
    return Checkpoint(
        params=params, config=config, schema=header.feature_schema, vocabulary=vocabulary,
        seed=header.seed, version=header.version,
    )
