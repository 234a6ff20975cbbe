"""Binary batch serialization.

Record layout, all little-endian:

    magic "CABX" | u32 version | u32 B | u32 T_max | u32 F
    | B*T_max*F float32 features, row-major
    | u32 target pad id
    | per item: u32 target length, then that many u32 token ids
    | per item: u32 feature length
    | u32 CRC32 of all preceding bytes

``--emit files`` writes one record per file; ``--emit stream`` writes a
single file of records, each prefixed with its u32 byte length.
Provenance ids are not part of the wire format.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Iterator

import numpy as np

from .batching import Batch
from .errors import BatchingError

MAGIC = b"CABX"
VERSION = 1
_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<III")

_U32_MAX = (1 << 32) - 1


def encode_batch(batch: Batch) -> bytes:
    b, t_max, n_bins = batch.features.shape
    parts = [
        MAGIC,
        _U32.pack(VERSION),
        _HEADER.pack(b, t_max, n_bins),
        np.ascontiguousarray(batch.features, dtype="<f4").tobytes(),
        _U32.pack(batch.target_pad_id),
    ]
    for row in range(b):
        length = batch.target_lengths[row]
        tokens = batch.targets[row, :length]
        if tokens.size and (tokens.min() < 0 or tokens.max() > _U32_MAX):
            raise BatchingError("target token ids must fit in u32")
        parts.append(_U32.pack(length))
        parts.append(tokens.astype("<u4").tobytes())
    parts.append(np.asarray(batch.feature_lengths, dtype="<u4").tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def decode_batch(blob: bytes) -> Batch:
    """Inverse of :func:`encode_batch`; validates magic, version, CRC."""
    if blob[:4] != MAGIC:
        raise BatchingError(f"bad magic {blob[:4]!r}")
    (crc,) = _U32.unpack(blob[-4:])
    if zlib.crc32(blob[:-4]) != crc:
        raise BatchingError("batch record failed CRC check")
    (version,) = _U32.unpack(blob[4:8])
    if version != VERSION:
        raise BatchingError(f"unsupported batch format version {version}")
    b, t_max, n_bins = _HEADER.unpack(blob[8:20])
    pos = 20
    feat_bytes = b * t_max * n_bins * 4
    features = np.frombuffer(blob[pos : pos + feat_bytes], dtype="<f4").reshape(b, t_max, n_bins)
    pos += feat_bytes
    (pad_id,) = _U32.unpack(blob[pos : pos + 4])
    pos += 4
    token_rows = []
    for _ in range(b):
        (length,) = _U32.unpack(blob[pos : pos + 4])
        pos += 4
        token_rows.append(np.frombuffer(blob[pos : pos + 4 * length], dtype="<u4"))
        pos += 4 * length
    feature_lengths = np.frombuffer(blob[pos : pos + 4 * b], dtype="<u4").tolist()
    pos += 4 * b
    if pos != len(blob) - 4:
        raise BatchingError("trailing bytes in batch record")

    target_lengths = [int(r.size) for r in token_rows]
    targets = np.full((b, max(target_lengths) if b else 0), pad_id, dtype=np.int64)
    for row, tokens in enumerate(token_rows):
        targets[row, : tokens.size] = tokens
    return Batch(
        features=features.copy(),
        feature_lengths=[int(n) for n in feature_lengths],
        targets=targets,
        target_lengths=target_lengths,
        target_pad_id=int(pad_id),
        instance_ids=None,
    )


def write_batch_file(batch: Batch, path: str | Path) -> None:
    Path(path).write_bytes(encode_batch(batch))


def read_batch_file(path: str | Path) -> Batch:
    return decode_batch(Path(path).read_bytes())


class StreamWriter:
    """Length-prefixed record stream; one open writer per file."""

    def __init__(self, path: str | Path):
        self._f = open(path, "wb")

    def write(self, batch: Batch) -> None:
        record = encode_batch(batch)
        self._f.write(_U32.pack(len(record)))
        self._f.write(record)

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "StreamWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_stream(path: str | Path) -> Iterator[Batch]:
    with open(path, "rb") as f:
        while True:
            prefix = f.read(4)
            if not prefix:
                return
            (length,) = _U32.unpack(prefix)
            blob = f.read(length)
            if len(blob) != length:
                raise BatchingError("truncated batch stream")
            yield decode_batch(blob)
