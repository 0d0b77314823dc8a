"""
Checkpoint files.

Layout (all integers little-endian):

    b"CSCF" | uint16 version | uint32 header length | JSON header | arrays | sha256

The header is compact, key-sorted JSON holding the model kind, the run
configuration echo and the (name, shape) list of stored arrays. The arrays
follow in header order as 32-bit floats, and the last 32 bytes are the
SHA-256 digest of everything before them.
"""

import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from cscfuse.config import RunConfig, run_config_from_dict
from cscfuse.errors import CheckpointIntegrityError, CheckpointKindError, CheckpointVersionError
from cscfuse.pipelines.models import FusionModel, build_model

logger = logging.getLogger(__name__)

MAGIC = b"CSCF"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<HI")
DIGEST_SIZE = 32


@dataclass
class Checkpoint:
    """Model kind, configuration echo and named parameter arrays."""

    kind: str
    config: Dict[str, Any]
    arrays: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    @classmethod
    def from_model(cls, model: FusionModel, run_config: RunConfig) -> "Checkpoint":
        arrays = OrderedDict(
            (name, np.array(value, dtype=np.float32)) for name, value in model.state_arrays().items()
        )
        return cls(kind=model.kind, config=run_config.to_dict(), arrays=arrays)

    def run_config(self) -> RunConfig:
        return run_config_from_dict(self.config)

    def build(self) -> FusionModel:
        """Instantiate the model and load the stored arrays into it."""
        cfg = self.run_config()
        model = build_model(self.kind, cfg.model, cfg.train.seed)
        model.load_state_arrays(self.arrays)
        return model

    def to_bytes(self) -> bytes:
        header = {
            "kind": self.kind,
            "config": self.config,
            "params": [{"name": name, "shape": list(arr.shape)} for name, arr in self.arrays.items()],
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        body = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in self.arrays.values())
        content = MAGIC + _PREFIX.pack(FORMAT_VERSION, len(header_bytes)) + header_bytes + body
        return content + hashlib.sha256(content).digest()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        minimum = len(MAGIC) + _PREFIX.size + DIGEST_SIZE
        if len(data) < minimum:
            raise CheckpointIntegrityError(f"Checkpoint is truncated ({len(data)} bytes)")
        if data[:len(MAGIC)] != MAGIC:
            raise CheckpointIntegrityError("Not a checkpoint file (bad magic)")
        version, header_length = _PREFIX.unpack_from(data, len(MAGIC))
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"Unsupported checkpoint format version {version}; this build reads version {FORMAT_VERSION}"
            )
        content, stored = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
        if hashlib.sha256(content).digest() != stored:
            raise CheckpointIntegrityError("Checkpoint digest mismatch (file truncated or corrupted)")

        start = len(MAGIC) + _PREFIX.size
        if start + header_length > len(content):
            raise CheckpointIntegrityError("Checkpoint header runs past the end of the file")
        try:
            header = json.loads(content[start:start + header_length].decode("utf-8"))
            kind, config, params = header["kind"], header["config"], header["params"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise CheckpointIntegrityError(f"Checkpoint header is unreadable: {e}")

        arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
        offset = start + header_length
        for entry in params:
            shape = tuple(int(d) for d in entry["shape"])
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if offset + nbytes > len(content):
                raise CheckpointIntegrityError(f"Checkpoint data for {entry['name']} is truncated")
            arrays[entry["name"]] = np.frombuffer(content, dtype="<f4", count=nbytes // 4,
                                                  offset=offset).reshape(shape).astype(np.float32)
            offset += nbytes
        if offset != len(content):
            raise CheckpointIntegrityError(f"Checkpoint has {len(content) - offset} unexpected trailing bytes")
        return cls(kind=kind, config=config, arrays=arrays)


def save_checkpoint(checkpoint: Union[Checkpoint, FusionModel], path: Union[str, Path],
                    run_config: Optional[RunConfig] = None) -> Checkpoint:
    """
    Write a checkpoint (or a model plus its run configuration) to `path`.

    Returns:
        The Checkpoint that was written
    """
    if isinstance(checkpoint, FusionModel):
        if run_config is None:
            raise ValueError("Saving a model needs its run configuration")
        checkpoint = Checkpoint.from_model(checkpoint, run_config)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = checkpoint.to_bytes()
    path.write_bytes(data)
    logger.info(f"Wrote {checkpoint.kind} checkpoint to {path} (sha256 {hashlib.sha256(data).hexdigest()[:12]})")
    return checkpoint


def load_checkpoint(path: Union[str, Path], kind: Optional[str] = None) -> Checkpoint:
    """
    Read and verify a checkpoint.

    Args:
        path: Checkpoint file
        kind: When given, the stored model kind must match it

    Raises:
        CheckpointIntegrityError: missing, truncated or corrupted file
        CheckpointVersionError: unsupported format version
        CheckpointKindError: stored kind differs from `kind`
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointIntegrityError(f"Cannot read checkpoint {path}: {e}")
    checkpoint = Checkpoint.from_bytes(data)
    if kind is not None and checkpoint.kind != kind:
        raise CheckpointKindError(f"Checkpoint {path} holds a {checkpoint.kind!r} model, expected {kind!r}")
    return checkpoint


def load_model(path: Union[str, Path], kind: Optional[str] = None) -> FusionModel:
    return load_checkpoint(path, kind).build()


def resolve_model(source: Union[Checkpoint, FusionModel], kind: str) -> FusionModel:
    """Accept a model or a checkpoint wherever a trained network is needed."""
    if isinstance(source, Checkpoint):
        if source.kind != kind:
            raise CheckpointKindError(f"Checkpoint holds a {source.kind!r} model, expected {kind!r}")
        return source.build()
    if source.kind != kind:
        raise CheckpointKindError(f"Model is a {source.kind!r} network, expected {kind!r}")
    return source
