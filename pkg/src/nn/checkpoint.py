"""
Checkpoint Storage
manifest.json (name → shape/dtype/offset/length) + params.bin (little-endian float32)
+ model.json (the model spec the weights belong to)
"""
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ValidationError
import structlog

from ..errors import CheckpointError
from .registry import ParamRegistry

logger = structlog.get_logger()

MANIFEST_FILE = "manifest.json"
BLOB_FILE = "params.bin"
MODEL_FILE = "model.json"
BLOB_DTYPE = np.dtype("<f4")


class ManifestEntry(BaseModel):
    shape: list[int]
    dtype: str = "float32"
    offset: int
    length: int


def save_checkpoint(directory: Path, registry: ParamRegistry, model: Optional[dict[str, Any]] = None) -> Path:
    """Write every leaf (trainable and buffers) in registry order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    manifest: dict[str, dict[str, Any]] = {}
    offset = 0
    with open(directory / BLOB_FILE, "wb") as blob:
        for name, tensor in registry.items():
            raw = np.ascontiguousarray(tensor.data, dtype=BLOB_DTYPE).tobytes()
            blob.write(raw)
            manifest[name] = ManifestEntry(
                shape=list(tensor.shape), offset=offset, length=len(raw)
            ).model_dump()
            offset += len(raw)

    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    if model is not None:
        (directory / MODEL_FILE).write_text(json.dumps(model, indent=2, sort_keys=True), encoding="utf-8")

    logger.info("checkpoint_written", path=str(directory), leaves=len(manifest), bytes=offset)
    return directory


def read_model_spec(directory: Path) -> Optional[dict[str, Any]]:
    path = Path(directory) / MODEL_FILE
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt {MODEL_FILE}: {exc}", path=str(path)) from exc


def load_checkpoint(directory: Path) -> dict[str, np.ndarray]:
    """Read and validate a checkpoint; returns name → float32 array."""
    directory = Path(directory)
    manifest_path, blob_path = directory / MANIFEST_FILE, directory / BLOB_FILE
    if not manifest_path.exists() or not blob_path.exists():
        raise CheckpointError(f"checkpoint not found at {directory}", path=str(directory))

    try:
        raw_manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries = {name: ManifestEntry.model_validate(e) for name, e in raw_manifest.items()}
    except (json.JSONDecodeError, ValidationError, AttributeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}", path=str(manifest_path)) from exc

    blob = blob_path.read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for name, entry in entries.items():
        expected = int(np.prod(entry.shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
        if entry.dtype != "float32" or entry.length != expected:
            raise CheckpointError(f"manifest entry {name} has inconsistent length/dtype", name=name)
        if entry.offset < 0 or entry.offset + entry.length > len(blob):
            raise CheckpointError(f"manifest entry {name} points past the end of {BLOB_FILE}", name=name)
        chunk = blob[entry.offset:entry.offset + entry.length]
        arrays[name] = np.frombuffer(chunk, dtype=BLOB_DTYPE).reshape(entry.shape).astype(np.float32)

    logger.debug("checkpoint_loaded", path=str(directory), leaves=len(arrays))
    return arrays


def restore_checkpoint(directory: Path, registry: ParamRegistry) -> ParamRegistry:
    registry.load_state_dict(load_checkpoint(directory))
    return registry
