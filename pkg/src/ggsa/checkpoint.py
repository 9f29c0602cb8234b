"""Binary checkpoint format.

Layout, all integers little-endian:

    magic "GGSACKPT" | u32 version | u64 config length | config key=value text
    repeated parameter records:
        u32 name length | name utf-8 | u32 rank | rank x u64 extents | payload
    u32 CRC32 (zlib) over every preceding byte

Payload floats use the precision named by the embedded config. Records are
read until exactly four bytes remain, which must be the checksum.
"""

from __future__ import annotations

import io
import os
import struct
import zlib

import numpy as np

from .config import ModelConfig, config_from_kv_text
from .encoder import EncoderParams, init_params
from .errors import (CheckpointError, ChecksumMismatchError, ConfigConflictError,
                     ContractError, GgsaError, TruncatedCheckpointError,
                     VersionMismatchError)

MAGIC = b"GGSACKPT"
VERSION = 1


def _named(params) -> dict:
    if isinstance(params, EncoderParams):
        return params.named()
    return dict(params)


def _payload_dtype(cfg: ModelConfig):
    return np.dtype("<f8") if cfg.precision == "double" else np.dtype("<f4")


def _encode(cfg: ModelConfig, named: dict, version: int) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", version))
    blob = cfg.to_kv_text().encode("utf-8")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    dt = _payload_dtype(cfg)
    for name, tensor in named.items():
        arr = np.ascontiguousarray(tensor.data)
        if arr.dtype != cfg.np_dtype:
            raise ContractError(f"parameter {name!r} has dtype {arr.dtype}, "
                                f"config precision says {cfg.np_dtype}")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", arr.ndim))
        for extent in arr.shape:
            buf.write(struct.pack("<Q", extent))
        buf.write(arr.astype(dt, copy=False).tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(path, cfg: ModelConfig, params) -> None:
    """Write params (EncoderParams or name -> Tensor mapping) atomically."""
    data = _encode(cfg, _named(params), VERSION)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, limit: int):
        self.data = data
        self.pos = 0
        self.limit = limit

    def remaining(self) -> int:
        return self.limit - self.pos

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.limit:
            raise TruncatedCheckpointError(f"file ends inside {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def load_arrays(path, expected_cfg: ModelConfig | None = None):
    """Read a checkpoint into (config, name -> array); validates everything."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 + 8 + 4:
        raise TruncatedCheckpointError(f"{path}: {len(data)} bytes is too short for a checkpoint")
    r = _Reader(data, len(data) - 4)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = r.u32("version")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {VERSION}")
    blob_len = r.u64("config length")
    blob = r.take(blob_len, "config blob")
    try:
        cfg = config_from_kv_text(blob.decode("utf-8"))
    except (GgsaError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable config blob: {exc}") from exc
    dt = _payload_dtype(cfg)
    arrays: dict[str, np.ndarray] = {}
    # Walk the record structure first so truncation is reported as truncation,
    # then verify the checksum over the intact byte stream.
    while r.remaining() > 0:
        name_len = r.u32("parameter name length")
        name = r.take(name_len, "parameter name").decode("utf-8", errors="replace")
        rank = r.u32(f"rank of {name!r}")
        if rank < 1 or rank > 3:
            raise CheckpointError(f"{path}: parameter {name!r} has rank {rank}, expected 1..3")
        extents = tuple(r.u64(f"extent of {name!r}") for _ in range(rank))
        count = int(np.prod(extents))
        payload = r.take(count * dt.itemsize, f"payload of {name!r}")
        if name in arrays:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        arrays[name] = np.frombuffer(payload, dtype=dt).reshape(extents).astype(cfg.np_dtype)
    stored = struct.unpack("<I", data[-4:])[0]
    actual = zlib.crc32(data[:-4])
    if stored != actual:
        raise ChecksumMismatchError(f"{path}: checksum {stored:#010x} does not match "
                                    f"contents ({actual:#010x})")
    if not arrays:
        raise CheckpointError(f"{path}: no parameter records")
    if expected_cfg is not None and cfg != expected_cfg:
        diffs = []
        for name in type(cfg).__dataclass_fields__:
            a, b = getattr(cfg, name), getattr(expected_cfg, name)
            if a != b:
                diffs.append(f"{name}: stored {a!r} vs requested {b!r}")
        raise ConfigConflictError(f"{path}: config mismatch ({'; '.join(diffs)})")
    return cfg, arrays


def params_from_arrays(cfg: ModelConfig, arrays: dict) -> EncoderParams:
    """Rebuild EncoderParams from stored arrays; shape-checks against the config."""
    if "embedding" not in arrays:
        raise ConfigConflictError("checkpoint has no embedding table")
    vocab = arrays["embedding"].shape[-1]
    params = init_params(cfg, vocab)
    named = params.named()
    missing = sorted(set(named) - set(arrays))
    extra = sorted(set(arrays) - set(named))
    if missing or extra:
        raise ConfigConflictError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
    for name, tensor in named.items():
        arr = np.asarray(arrays[name], dtype=cfg.np_dtype)
        if arr.shape != tensor.shape:
            raise ConfigConflictError(f"parameter {name!r}: stored shape {arr.shape}, "
                                      f"config implies {tensor.shape}")
        tensor.data = arr.copy()
    return params


def load_checkpoint(path, expected_cfg: ModelConfig | None = None):
    """Load (config, EncoderParams) from a checkpoint file."""
    cfg, arrays = load_arrays(path, expected_cfg)
    return cfg, params_from_arrays(cfg, arrays)
