"""Flat binary containers used across the pipeline.

All containers are little-endian and begin with a distinct 8-byte magic:

* ``FGFRAM01`` raw frame planes: {H, W, count, u8 payload row-major}
* ``FGFEAT01`` precomputed features: {count, dim, f32 payload}
* ``FGBANK01`` class-average spectrogram bank
* ``FGCKPT01`` model checkpoint: named tensor table + config snapshot

Readers validate sizes as they go and raise :class:`CodecError` with the
offending byte offset; nothing partially decoded is ever returned.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import CodecError

MAGIC_FRAMES = b"FGFRAM01"
MAGIC_FEATURES = b"FGFEAT01"
MAGIC_BANK = b"FGBANK01"
MAGIC_CHECKPOINT = b"FGCKPT01"

_DTYPE_FLAGS = {0: "<f4", 1: "<f8"}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class _Reader:
    """Cursor over a byte buffer that fails loudly with offsets."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CodecError(
                f"{self.label}: truncated (needed {n} more bytes)", offset=self.pos
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise CodecError(
                f"{self.label}: bad magic {got!r}, expected {magic!r}", offset=0
            )

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise CodecError(
                f"{self.label}: {len(self.data) - self.pos} trailing bytes",
                offset=self.pos,
            )


def _read_file(path) -> _Reader:
    return _Reader(Path(path).read_bytes(), str(path))


# -- raw frame planes -------------------------------------------------------

def write_frames_raw(path, frames: np.ndarray) -> None:
    """Write a [count x H x W] u8 frame stack."""
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    if frames.ndim != 3:
        raise ValueError("frames must be a [count x H x W] array")
    count, height, width = frames.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_FRAMES)
        fh.write(struct.pack("<III", height, width, count))
        fh.write(frames.tobytes())


def read_frames_raw(path) -> np.ndarray:
    reader = _read_file(path)
    reader.expect_magic(MAGIC_FRAMES)
    height, width, count = reader.unpack("<III")
    payload = reader.take(height * width * count)
    reader.finish()
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, height, width).copy()


# -- precomputed feature vectors --------------------------------------------

def write_features(path, features: np.ndarray) -> None:
    """Write a [count x dim] feature matrix as f32."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError("features must be a [count x dim] matrix")
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(struct.pack("<II", features.shape[0], features.shape[1]))
        fh.write(features.tobytes())


def read_features(path) -> np.ndarray:
    reader = _read_file(path)
    reader.expect_magic(MAGIC_FEATURES)
    count, dim = reader.unpack("<II")
    payload = reader.take(count * dim * 4)
    reader.finish()
    return (
        np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float64)
    )


# -- named tensor tables -----------------------------------------------------

def pack_tensor_table(tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize {name: array} preserving dtype (f32/f64) and shape."""
    parts = [struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        array = np.ascontiguousarray(array)
        if array.dtype not in _DTYPE_CODES:
            array = array.astype(np.float64)
        code = _DTYPE_CODES[array.dtype]
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.astype(array.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def unpack_tensor_table(reader: _Reader) -> dict[str, np.ndarray]:
    (count,) = reader.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in _DTYPE_FLAGS:
            raise CodecError(
                f"{reader.label}: unknown dtype flag {code} for tensor {name!r}",
                offset=reader.pos,
            )
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = np.dtype(_DTYPE_FLAGS[code])
        n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        payload = reader.take(n_items * dtype.itemsize)
        if name in tensors:
            raise CodecError(
                f"{reader.label}: duplicate tensor name {name!r}", offset=reader.pos
            )
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return tensors


# -- checkpoints -------------------------------------------------------------

def config_digest(config_text: str) -> bytes:
    return hashlib.sha256(config_text.encode("utf-8")).digest()


def checkpoint_save(
    path,
    tensors: dict[str, np.ndarray],
    config_text: str,
    seed: int,
    step: int = 0,
    kind: str = "model",
) -> None:
    """Write a versioned checkpoint: config snapshot + named tensors."""
    raw_kind = kind.encode("utf-8")
    raw_config = config_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<I", 1))  # version
        fh.write(struct.pack("<H", len(raw_kind)))
        fh.write(raw_kind)
        fh.write(struct.pack("<I", len(raw_config)))
        fh.write(raw_config)
        fh.write(config_digest(config_text))
        fh.write(struct.pack("<qQ", int(seed), int(step)))
        fh.write(pack_tensor_table(tensors))


def checkpoint_load(path) -> dict:
    """Read a checkpoint; returns {kind, config_text, seed, step, tensors}.

    The stored config digest is re-verified so silent corruption of the
    config snapshot cannot go unnoticed.
    """
    reader = _read_file(path)
    reader.expect_magic(MAGIC_CHECKPOINT)
    (version,) = reader.unpack("<I")
    if version != 1:
        raise CodecError(f"{path}: unsupported checkpoint version {version}", offset=8)
    (kind_len,) = reader.unpack("<H")
    kind = reader.take(kind_len).decode("utf-8")
    (config_len,) = reader.unpack("<I")
    config_text = reader.take(config_len).decode("utf-8")
    stored_digest = reader.take(32)
    if stored_digest != config_digest(config_text):
        raise CodecError(
            f"{path}: config snapshot fails its hash check", offset=reader.pos - 32
        )
    seed, step = reader.unpack("<qQ")
    tensors = unpack_tensor_table(reader)
    reader.finish()
    return {
        "kind": kind,
        "config_text": config_text,
        "seed": seed,
        "step": step,
        "tensors": tensors,
    }
