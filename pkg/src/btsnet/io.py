"""Binary tensor files and label files.

Tensor file layout: magic ``b"BTSC"``, u32 rank, ``rank`` u32 extents,
then ``prod(extents)`` float32 values in row-major order; all little-endian.
Label file layout: u32 count followed by ``count`` u32 labels.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"BTSC"


class FormatError(ValueError):
    pass


def encode_tensor(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not a BTSC tensor (bad magic)")
    (rank,) = struct.unpack_from("<I", blob, 4)
    offset = 8 + 4 * rank
    if len(blob) < offset:
        raise FormatError("truncated BTSC header")
    shape = struct.unpack_from(f"<{rank}I", blob, 8)
    count = int(np.prod(shape)) if rank else 0
    if len(blob) != offset + 4 * count:
        raise FormatError(
            f"payload is {len(blob) - offset} bytes, expected {4 * count} for shape {shape}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return values.astype(np.float64).reshape(shape)


def save_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def save_labels(path, labels) -> None:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1 or (lab.size and lab.min() < 0):
        raise ValueError("labels must be a 1-D array of non-negative integers")
    Path(path).write_bytes(struct.pack("<I", lab.size) + lab.astype("<u4").tobytes())


def load_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise FormatError("truncated label file")
    (count,) = struct.unpack_from("<I", blob, 0)
    if len(blob) != 4 + 4 * count:
        raise FormatError(f"label file holds {(len(blob) - 4) // 4} labels, header says {count}")
    return np.frombuffer(blob, dtype="<u4", count=count, offset=4).astype(np.int64)
