"""Deterministic binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a JSON
header (sorted keys, no whitespace, UTF-8), then the raw array payloads
concatenated in header order. Arrays are little-endian C-order. Because the
header is canonical and the payload order is fixed by it, saving a loaded
checkpoint reproduces the original file byte for byte.

The header carries a sha256 over the payload region so corruption is caught
at load time. Writes go to a temp file in the target directory and are
renamed into place, so a crash never leaves a half-written checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    CheckpointCorruptError,
    CheckpointVersionError,
    DigestMismatchError,
)

MAGIC = b"SINEDIT\x00"
FORMAT_VERSION = 1

# numpy dtype name <-> on-disk code; all stored little-endian
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "|u1"}


@dataclass
class CheckpointData:
    """Everything needed to resume training or sample from a model.

    arrays maps flat string keys to numpy arrays: model parameters under
    "param/<name>", optimizer slots under "opt/<name>/<slot>", the source
    image under "source", the loss curve under "loss_curve".
    meta holds JSON-safe scalars: denoiser config, schedule params, pyramid
    factor and min_dim, training step, seed, optimizer step counts.
    """

    arrays: dict[str, np.ndarray]
    meta: dict[str, Any] = field(default_factory=dict)


def _canonical_header(data: CheckpointData) -> tuple[bytes, list[str]]:
    keys = sorted(data.arrays)
    entries = {}
    for k in keys:
        arr = data.arrays[k]
        name = arr.dtype.name
        if name not in _DTYPES:
            raise CheckpointCorruptError(f"unsupported dtype {name} for array {k!r}")
        entries[k] = {"dtype": name, "shape": list(arr.shape)}
    header = {"arrays": entries, "meta": data.meta}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return blob, keys


def _payload(data: CheckpointData, keys: list[str]) -> bytes:
    chunks = []
    for k in keys:
        arr = np.ascontiguousarray(data.arrays[k])
        chunks.append(arr.astype(_DTYPES[arr.dtype.name]).tobytes())
    return b"".join(chunks)


def save_checkpoint(path: str, data: CheckpointData) -> str:
    """Write atomically; returns the sha256 hex digest of the payload."""
    keys_blob, keys = _canonical_header(data)
    payload = _payload(data, keys)
    digest = hashlib.sha256(payload).hexdigest()

    meta = dict(data.meta)
    meta["payload_sha256"] = digest
    final = CheckpointData(arrays=data.arrays, meta=meta)
    header_blob, keys = _canonical_header(final)

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(FORMAT_VERSION).tobytes())
            fh.write(np.uint64(len(header_blob)).tobytes())
            fh.write(header_blob)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return digest


def read_checkpoint_meta(path: str) -> dict[str, Any]:
    """Header metadata without loading the array payload."""
    with open(path, "rb") as fh:
        prefix = fh.read(len(MAGIC) + 12)
        if len(prefix) < len(MAGIC) + 12 or prefix[: len(MAGIC)] != MAGIC:
            raise CheckpointCorruptError(f"{path}: not a checkpoint file")
        version = int(np.frombuffer(prefix, dtype="<u4", count=1, offset=len(MAGIC))[0])
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"{path}: format version {version}, expected {FORMAT_VERSION}"
            )
        header_len = int(
            np.frombuffer(prefix, dtype="<u8", count=1, offset=len(MAGIC) + 4)[0]
        )
        blob = fh.read(header_len)
    if len(blob) != header_len:
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: bad header: {exc}") from exc
    meta = dict(header.get("meta", {}))
    source = header.get("arrays", {}).get("source")
    if source is not None:
        meta.setdefault("source_shape", source.get("shape"))
    return meta


def load_checkpoint(path: str) -> CheckpointData:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointCorruptError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version = int(np.frombuffer(raw, dtype="<u4", count=1, offset=off)[0])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    off += 4
    header_len = int(np.frombuffer(raw, dtype="<u8", count=1, offset=off)[0])
    off += 8
    if off + header_len > len(raw):
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: bad header: {exc}") from exc
    off += header_len

    payload = raw[off:]
    meta = header.get("meta", {})
    stored = meta.get("payload_sha256")
    actual = hashlib.sha256(payload).hexdigest()
    if stored is not None and stored != actual:
        raise DigestMismatchError(f"{path}: payload sha256 mismatch")

    arrays: dict[str, np.ndarray] = {}
    pos = 0
    for key in sorted(header.get("arrays", {})):
        entry = header["arrays"][key]
        dtype_name = entry["dtype"]
        if dtype_name not in _DTYPES:
            raise CheckpointCorruptError(f"{path}: unknown dtype {dtype_name!r}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        wire = np.dtype(_DTYPES[dtype_name])
        nbytes = count * wire.itemsize
        if pos + nbytes > len(payload):
            raise CheckpointCorruptError(f"{path}: truncated payload at {key!r}")
        arr = np.frombuffer(payload, dtype=wire, count=count, offset=pos)
        arrays[key] = arr.astype(dtype_name).reshape(shape)
        pos += nbytes
    if pos != len(payload):
        raise CheckpointCorruptError(f"{path}: {len(payload) - pos} trailing payload bytes")
    return CheckpointData(arrays=arrays, meta=meta)
