import json
import logging
import struct
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import Tensor
from typing_extensions import NotRequired, TypedDict

from otsvad.utils import DataError, FloatArray

logger = logging.getLogger(__name__)

MAGIC = b"OTSVADCK"
SCHEMA_VERSION = 1
_HEADER = struct.Struct("<IQ")


class CheckpointError(DataError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointMetadata(TypedDict, total=False):
    # plain-data copy of the ModelConfig the tensors were saved from
    model: dict[str, Any]
    stage: int
    step: int
    der: float


class TensorEntry(TypedDict):
    name: str
    shape: list[int]
    # byte offset into the payload that follows the manifest
    offset: int


class Manifest(TypedDict):
    schema_version: int
    metadata: NotRequired[CheckpointMetadata]
    tensors: list[TensorEntry]


class Checkpoint:
    def __init__(self, tensors: dict[str, FloatArray], metadata: CheckpointMetadata) -> None:
        self.tensors = tensors
        self.metadata = metadata

    def namespace(self, prefix: str) -> dict[str, Tensor]:
        """Tensors under ``prefix/`` with the prefix stripped."""
        head = prefix + "/"
        return {
            name[len(head) :]: torch.from_numpy(values.copy())
            for name, values in self.tensors.items()
            if name.startswith(head)
        }

    def namespaces(self) -> set[str]:
        return {name.split("/", 1)[0] for name in self.tensors}


def save_checkpoint(
    path: str | Path,
    tensors: Mapping[str, Tensor | FloatArray],
    metadata: CheckpointMetadata | None = None,
) -> None:
    entries: list[TensorEntry] = []
    chunks = []
    offset = 0
    for name, tensor in tensors.items():
        if isinstance(tensor, Tensor):
            tensor = tensor.detach().cpu().numpy()
        data = np.ascontiguousarray(tensor, dtype="<f4")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    manifest: Manifest = {"schema_version": SCHEMA_VERSION, "metadata": metadata or {}, "tensors": entries}
    encoded = json.dumps(manifest, sort_keys=True).encode()
    with Path(path).open("wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(SCHEMA_VERSION, len(encoded)))
        f.write(encoded)
        for chunk in chunks:
            f.write(chunk)
    logger.info("checkpoint_saved path=%s tensors=%d bytes=%d", path, len(entries), offset)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        msg = f"Cannot read checkpoint {path}: {e}"
        raise CheckpointError(msg) from e
    if not raw.startswith(MAGIC):
        msg = f"{path} is not an otsvad checkpoint"
        raise CheckpointError(msg)
    start = len(MAGIC)
    try:
        version, manifest_len = _HEADER.unpack_from(raw, start)
    except struct.error as e:
        msg = f"Truncated checkpoint header in {path}"
        raise CheckpointError(msg) from e
    if version != SCHEMA_VERSION:
        msg = f"Checkpoint schema version {version} is not supported (expected {SCHEMA_VERSION})"
        raise CheckpointVersionError(msg)
    start += _HEADER.size
    try:
        manifest: Manifest = json.loads(raw[start : start + manifest_len])
    except json.JSONDecodeError as e:
        msg = f"Corrupt checkpoint manifest in {path}: {e}"
        raise CheckpointError(msg) from e
    payload = memoryview(raw)[start + manifest_len :]

    tensors: dict[str, FloatArray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        offset = int(entry["offset"])
        if offset + 4 * count > len(payload):
            msg = f"Checkpoint tensor {entry['name']} runs past the end of the payload"
            raise CheckpointError(msg)
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = values.reshape(shape).astype(np.float32)
    return Checkpoint(tensors, manifest.get("metadata", {}))
