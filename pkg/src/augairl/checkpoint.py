"""Binary checkpoint files.

Layout (all integers little-endian ``uint32``, all reals little-endian
``float64``)::

    magic        b"AAIRL\\x01"          (last byte is the format version)
    n_vectors    uint32
    lengths      n_vectors x uint32
    vectors      concatenated float64 data
    rng_len      uint32, then rng_len bytes (JSON of generator states)
    meta_len     uint32, then meta_len bytes (JSON metadata)
    crc32        uint32 over every preceding byte

Vectors are stored in the order policy, value, discriminator.  A missing
discriminator is stored as an empty vector.  Files are written to a
temporary name and renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

MAGIC = b"AAIRL"
VERSION = 1
VECTOR_NAMES = ("policy", "value", "discriminator")


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    iteration: int
    policy: np.ndarray
    value: np.ndarray
    discriminator: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rng_state: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def vectors(self) -> List[np.ndarray]:
        return [np.asarray(getattr(self, n), dtype=np.float64) for n in VECTOR_NAMES]

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (self.iteration == other.iteration
                and all(np.array_equal(a, b) for a, b in zip(self.vectors(), other.vectors()))
                and self.rng_state == other.rng_state and self.metadata == other.metadata)


def to_bytes(ckpt: Checkpoint) -> bytes:
    vecs = ckpt.vectors()
    meta = dict(ckpt.metadata)
    meta["iteration"] = int(ckpt.iteration)
    parts = [MAGIC, bytes([VERSION]), struct.pack("<I", len(vecs))]
    parts += [struct.pack("<I", v.size) for v in vecs]
    parts += [v.astype("<f8").tobytes() for v in vecs]
    rng_blob = json.dumps(ckpt.rng_state, sort_keys=True).encode()
    meta_blob = json.dumps(meta, sort_keys=True).encode()
    parts += [struct.pack("<I", len(rng_blob)), rng_blob, struct.pack("<I", len(meta_blob)), meta_blob]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < 6 or data[:5] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    if data[5] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data[5]} (expected {VERSION})")
    if len(data) < 10:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    pos = 6

    def read_u32():
        nonlocal pos
        if pos + 4 > len(body):
            raise CheckpointError("checkpoint truncated")
        (v,) = struct.unpack_from("<I", body, pos)
        pos += 4
        return v

    def read_bytes(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("length field points past the end of the checkpoint")
        out = body[pos:pos + n]
        pos += n
        return out

    n_vec = read_u32()
    if n_vec != len(VECTOR_NAMES):
        raise CheckpointError(f"expected {len(VECTOR_NAMES)} parameter vectors, found {n_vec}")
    lengths = [read_u32() for _ in range(n_vec)]
    vecs = [np.frombuffer(read_bytes(8 * n), dtype="<f8").astype(np.float64) for n in lengths]
    try:
        rng_state = json.loads(read_bytes(read_u32()))
        meta = json.loads(read_bytes(read_u32()))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint metadata unreadable: {exc}") from None
    if pos != len(body):
        raise CheckpointError("trailing bytes after checkpoint payload")
    iteration = meta.pop("iteration", None)
    if not isinstance(iteration, int):
        raise CheckpointError("checkpoint metadata lacks the iteration number")
    return Checkpoint(iteration, *vecs, rng_state=rng_state, metadata=meta)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = os.fspath(path)
    data = to_bytes(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {os.fspath(path)!r}: {exc.strerror}") from None
    return from_bytes(data)


def generator_states(rngs: Dict[str, np.random.Generator]) -> dict:
    return {k: g.bit_generator.state for k, g in rngs.items()}


def restore_generator(state: dict) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)
