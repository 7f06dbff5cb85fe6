"""Self-describing binary checkpoint container.

Layout (little-endian): magic ``GRLP``, format version u32, 32-byte
sha256 digest of the canonical config JSON, step counter u64, then two
length-prefixed JSON blobs (rng state, full config), a u32 tensor count,
per-tensor records (u32 name length + name, u32 rank, u64 dims, row-major
float64 payload), and a trailing sha256 checksum of everything before it.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IntegrityError

MAGIC = b"GRLP"
FORMAT_VERSION = 1


def config_digest(config: dict) -> bytes:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).digest()


@dataclass
class Checkpoint:
    config: dict
    step: int
    rng_state: dict
    tensors: dict[str, np.ndarray]
    format_version: int = FORMAT_VERSION

    @property
    def digest(self) -> bytes:
        return config_digest(self.config)


def _encode_json(payload) -> bytes:
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    chunks = [
        MAGIC,
        struct.pack("<I", checkpoint.format_version),
        checkpoint.digest,
        struct.pack("<Q", checkpoint.step),
        _encode_json(checkpoint.rng_state),
        _encode_json(checkpoint.config),
        struct.pack("<I", len(checkpoint.tensors)),
    ]
    for name in sorted(checkpoint.tensors):
        tensor = np.asarray(checkpoint.tensors[name], dtype=np.float64)
        if tensor.ndim and not tensor.flags["C_CONTIGUOUS"]:  # 0-d would be promoted to (1,)
            tensor = np.ascontiguousarray(tensor)
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<I", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}Q", *tensor.shape) if tensor.ndim else b"")
        chunks.append(tensor.tobytes())
    body = b"".join(chunks)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise IntegrityError("checkpoint is truncated")
        out = self.raw[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def json_blob(self):
        raw = self.take(self.u32())
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"corrupt JSON blob in checkpoint: {exc}") from exc


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 32 + len(MAGIC):
        raise IntegrityError("checkpoint is truncated")
    body, checksum = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise IntegrityError("checkpoint checksum mismatch")
    reader = _Reader(body)
    if reader.take(4) != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise IntegrityError(f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}")
    digest = reader.take(32)
    step = reader.u64()
    rng_state = reader.json_blob()
    config = reader.json_blob()
    if config_digest(config) != digest:
        raise IntegrityError("checkpoint config does not match its digest")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u64() for _ in range(rank))
        count = int(np.prod(shape)) if rank else 1
        payload = reader.take(count * 8)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if reader.pos != len(body):
        raise IntegrityError("trailing bytes after checkpoint payload")
    return Checkpoint(config=config, step=step, rng_state=rng_state, tensors=tensors, format_version=version)
