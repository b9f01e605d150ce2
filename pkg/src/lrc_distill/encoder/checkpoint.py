import json
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from lrc_distill.encoder.model import EncoderModel, parameter_shapes
from lrc_distill.encoder.models import EncoderConfig
from lrc_distill.errors import CheckpointError
from lrc_distill.tensor import Tensor

FORMAT_VERSION = 1
MANIFEST_NAME = "model.json"
BLOB_NAME = "model.bin"
_DTYPE = np.dtype("<f8")


class ParameterDescriptor(BaseModel):
    name: str
    shape: list[int]
    offset: int = Field(ge=0, description="Byte offset into the float64 blob")


class CheckpointManifest(BaseModel):
    """JSON side of a checkpoint; the values live in a little-endian float64 blob."""

    format_version: int
    config: EncoderConfig
    parameters: list[ParameterDescriptor]


def save_checkpoint(model: EncoderModel, directory: Path) -> Path:
    """
    Write ``model.json`` and ``model.bin`` under ``directory``.

    Output is a pure function of the parameters, so re-saving identical
    parameters produces byte-identical files.
    """
    directory.mkdir(parents=True, exist_ok=True)
    descriptors: list[ParameterDescriptor] = []
    chunks: list[bytes] = []
    offset = 0
    for name, param in model.named_parameters():
        raw = param.data.astype(_DTYPE, copy=False).tobytes(order="C")
        descriptors.append(
            ParameterDescriptor(name=name, shape=list(param.shape), offset=offset)
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = CheckpointManifest(
        format_version=FORMAT_VERSION, config=model.config, parameters=descriptors
    )
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n",
        encoding="utf-8",
    )
    (directory / BLOB_NAME).write_bytes(b"".join(chunks))
    logger.info(f"Wrote checkpoint to {directory} ({offset:,} bytes)")
    return directory


def load_checkpoint(directory: Path) -> EncoderModel:
    """Read a checkpoint written by ``save_checkpoint``; round-trip is bit-exact."""
    manifest_path = directory / MANIFEST_NAME
    blob_path = directory / BLOB_NAME
    if not manifest_path.exists() or not blob_path.exists():
        raise CheckpointError(f"Checkpoint not found under {directory}")

    try:
        manifest = CheckpointManifest.model_validate_json(
            manifest_path.read_text(encoding="utf-8")
        )
    except ValidationError as e:
        raise CheckpointError(f"Invalid checkpoint manifest {manifest_path}: {e}")

    if manifest.format_version != FORMAT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint format_version={manifest.format_version}"
        )

    expected = parameter_shapes(manifest.config)
    described = [(p.name, tuple(p.shape)) for p in manifest.parameters]
    if described != expected:
        raise CheckpointError("Checkpoint parameters do not match its encoder config")

    blob = blob_path.read_bytes()
    params: dict[str, Tensor] = {}
    for descriptor in manifest.parameters:
        count = int(np.prod(descriptor.shape, dtype=np.int64))
        end = descriptor.offset + count * _DTYPE.itemsize
        if end > len(blob):
            raise CheckpointError(f"Blob truncated while reading {descriptor.name}")
        values = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=descriptor.offset)
        params[descriptor.name] = Tensor(
            values.reshape(descriptor.shape), requires_grad=True, name=descriptor.name
        )

    logger.debug(f"Loaded checkpoint from {directory}")
    return EncoderModel(manifest.config, params)
