"""
Module: sr_brcnn.models.checkpoint
Purpose: Versioned binary checkpoint container
Dependencies: numpy, torch

Layout (all integers little-endian):

    magic        4 bytes  b"SRBR"
    version      u32      currently 1
    schema_len   u32      length of the schema JSON
    schema       bytes    UTF-8 JSON of ModelSchema (sorted keys)
    count        u32      number of tensors
    per tensor:
      name_len   u32
      name       bytes    UTF-8 parameter name
      ndim       u32
      dims       u64 x ndim
      data       f64 x prod(dims), row-major

Tensors are written in ``named_parameters`` order, so two identical models
produce byte-identical files.
"""

from pathlib import Path
from typing import Optional, Union
import logging
import os

import numpy as np
import torch

from sr_brcnn.errors import SchemaError
from sr_brcnn.models.brcnn import ModelParams, ModelSchema

logger = logging.getLogger(__name__)

MAGIC = b"SRBR"
VERSION = 1

_U32 = np.dtype("<u4")
_U64 = np.dtype("<u8")
_F64 = np.dtype("<f8")


def _u32(value: int) -> bytes:
    return np.array([value], dtype=_U32).tobytes()


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise SchemaError(f"{self.source}: truncated checkpoint at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype)

    def u32(self) -> int:
        return int(self.array(_U32, 1)[0])


def encode_checkpoint(params: ModelParams) -> bytes:
    schema = params.schema.to_json().encode("utf-8")
    named = list(params.named_parameters())
    chunks = [MAGIC, _u32(VERSION), _u32(len(schema)), schema, _u32(len(named))]
    for name, tensor in named:
        raw_name = name.encode("utf-8")
        values = tensor.detach().cpu().numpy().astype(_F64, copy=False)
        chunks += [
            _u32(len(raw_name)),
            raw_name,
            _u32(values.ndim),
            np.array(values.shape, dtype=_U64).tobytes(),
            np.ascontiguousarray(values).tobytes(),
        ]
    return b"".join(chunks)


def decode_checkpoint(
    data: bytes,
    expected_relations: Optional[tuple] = None,
    source: str = "<bytes>",
) -> ModelParams:
    """
    Rebuild parameters from checkpoint bytes.

    Args:
        data: Checkpoint contents
        expected_relations: If given, the checkpoint's relation list must equal it
        source: Name used in error messages

    Raises:
        SchemaError: Bad magic, unsupported version, truncation, wrong relation
            list, or tensors that do not match the schema
    """
    reader = _Reader(data, source)
    if reader.take(4) != MAGIC:
        raise SchemaError(f"{source}: not an SR-BRCNN checkpoint (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise SchemaError(f"{source}: unsupported checkpoint version {version}")
    schema = ModelSchema.from_json(reader.take(reader.u32()).decode("utf-8"))
    if expected_relations is not None and tuple(schema.relations) != tuple(expected_relations):
        raise SchemaError(
            f"{source}: checkpoint has K={len(schema.relations)} relations {list(schema.relations)}, "
            f"expected K={len(expected_relations)} {list(expected_relations)}"
        )

    params = ModelParams(schema)
    slots = dict(params.named_parameters())
    count = reader.u32()
    if count != len(slots):
        raise SchemaError(f"{source}: checkpoint holds {count} tensors, schema needs {len(slots)}")
    with torch.no_grad():
        for _ in range(count):
            name = reader.take(reader.u32()).decode("utf-8")
            shape = tuple(int(d) for d in reader.array(_U64, reader.u32()))
            values = reader.array(_F64, int(np.prod(shape, dtype=np.int64)))
            slot = slots.pop(name, None)
            if slot is None:
                raise SchemaError(f"{source}: unexpected tensor {name!r}")
            if tuple(slot.shape) != shape:
                raise SchemaError(f"{source}: tensor {name!r} has shape {shape}, schema needs {tuple(slot.shape)}")
            slot.copy_(torch.from_numpy(values.reshape(shape).copy()))
    if reader.offset != len(data):
        raise SchemaError(f"{source}: {len(data) - reader.offset} trailing bytes after the last tensor")
    return params


def save_checkpoint(path: Union[str, Path], params: ModelParams) -> Path:
    """Write a checkpoint atomically (temporary file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(params))
    os.replace(tmp, path)
    logger.debug(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path], expected_relations: Optional[tuple] = None) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"checkpoint not found: {path}")
    params = decode_checkpoint(path.read_bytes(), expected_relations, source=str(path))
    logger.info(f"Loaded checkpoint {path} (K={params.schema.labels.num_relations})")
    return params
