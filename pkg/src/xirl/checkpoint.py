"""Binary checkpoint serialization.

Layout (little-endian throughout):

    magic "XCKP" | version u16 | tensor_count u32
    per tensor:  name_len u16 | name UTF-8 | rank u32 | dims u32 * rank
                 | payload f32 C-order
    meta_len u32 | metadata JSON UTF-8 (sorted keys)
    crc32 u32  (over every preceding byte)

Training math runs in float64; payloads are stored as float32 and widened
back on load, so a loaded model is only ever a float32 rounding of the
trained one. Anything derived from checkpointed weights (goal embeddings,
reward scales) is computed from the rounded values for that reason.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"XCKP"
VERSION = 1


class FormatError(ValueError):
    """Malformed binary artifact; message names the offending file."""


def _canonical_json(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        a = np.asarray(arr, dtype=np.float32)
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    mj = _canonical_json(meta)
    parts.append(struct.pack("<I", len(mj)))
    parts.append(mj)
    body = b"".join(parts)
    body += struct.pack("<I", zlib.crc32(body))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body)


class _Reader:
    def __init__(self, buf: bytes, path: Path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated (need {n} bytes at offset {self.off})")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (tensors as float64, metadata dict)."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 4:
        raise FormatError(f"{path}: truncated (no room for checksum)")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise FormatError(f"{path}: checksum mismatch")

    r = _Reader(buf[:-4], path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, count = r.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        if rank > 8:
            raise FormatError(f"{path}: implausible tensor rank {rank}")
        dims = r.unpack(f"<{rank}I")
        n = int(np.prod(dims)) if rank else 1
        payload = r.take(4 * n)
        tensors[name] = (
            np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
        )

    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad metadata blob ({e})") from None
    if r.off != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.off} trailing bytes")
    return tensors, meta
