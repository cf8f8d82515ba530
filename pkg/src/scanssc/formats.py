"""Binary voxel label (SSCG) and logit (SSCL) files, plus a CSV voxel listing.

SSCG layout, little-endian::

    b"SSCG" | version u16 | X u32 | Y u32 | Z u32 | label_width u8 | payload | crc32 u32

The payload holds X*Y*Z labels (u8 or u16) with z varying fastest. SSCL is
``b"SSCL" | version u16 | X Y Z P u32 | float32 payload | crc32`` with the
class index varying fastest. The CRC covers the payload only.
"""

from __future__ import annotations

import csv
import io
import struct
import zlib
from pathlib import Path

import numpy as np

VERSION = 1
_GRID_HEADER = struct.Struct("<4sHIIIB")
_LOGIT_HEADER = struct.Struct("<4sHIIII")
_CRC = struct.Struct("<I")


class FormatError(ValueError):
    pass


def encode_voxel_grid(labels, label_width=None) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise FormatError(f"voxel grid must be 3D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise FormatError("labels must fit in an unsigned 16-bit integer")
    if label_width is None:
        label_width = 1 if labels.size == 0 or labels.max() <= 0xFF else 2
    if label_width not in (1, 2):
        raise FormatError(f"label width must be 1 or 2 bytes, got {label_width}")
    if label_width == 1 and labels.size and labels.max() > 0xFF:
        raise FormatError("labels exceed 255; use label width 2")
    payload = np.ascontiguousarray(labels, dtype="<u1" if label_width == 1 else "<u2").tobytes()
    head = _GRID_HEADER.pack(b"SSCG", VERSION, *labels.shape, label_width)
    return head + payload + _CRC.pack(zlib.crc32(payload))


def decode_voxel_grid(blob: bytes) -> np.ndarray:
    if len(blob) < _GRID_HEADER.size + _CRC.size:
        raise FormatError("file too short for an SSCG header")
    magic, version, X, Y, Z, width = _GRID_HEADER.unpack_from(blob)
    if magic != b"SSCG":
        raise FormatError(f"bad magic {magic!r}, expected b'SSCG'")
    if version != VERSION:
        raise FormatError(f"unsupported SSCG version {version}")
    if width not in (1, 2):
        raise FormatError(f"bad label width {width}")
    n = X * Y * Z * width
    payload = blob[_GRID_HEADER.size:_GRID_HEADER.size + n]
    if len(payload) != n or len(blob) != _GRID_HEADER.size + n + _CRC.size:
        raise FormatError(f"payload length mismatch: expected {n} bytes")
    (crc,) = _CRC.unpack_from(blob, _GRID_HEADER.size + n)
    if crc != zlib.crc32(payload):
        raise FormatError("CRC32 mismatch: payload is corrupt")
    dtype = "<u1" if width == 1 else "<u2"
    return np.frombuffer(payload, dtype=dtype).reshape(X, Y, Z).astype(np.int64)


def encode_logit_grid(logits) -> bytes:
    logits = np.asarray(logits)
    if logits.ndim != 4:
        raise FormatError(f"logit grid must be 4D, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise FormatError("logits must be finite")
    payload = np.ascontiguousarray(logits, dtype="<f4").tobytes()
    head = _LOGIT_HEADER.pack(b"SSCL", VERSION, *logits.shape)
    return head + payload + _CRC.pack(zlib.crc32(payload))


def decode_logit_grid(blob: bytes) -> np.ndarray:
    if len(blob) < _LOGIT_HEADER.size + _CRC.size:
        raise FormatError("file too short for an SSCL header")
    magic, version, X, Y, Z, P = _LOGIT_HEADER.unpack_from(blob)
    if magic != b"SSCL":
        raise FormatError(f"bad magic {magic!r}, expected b'SSCL'")
    if version != VERSION:
        raise FormatError(f"unsupported SSCL version {version}")
    n = X * Y * Z * P * 4
    payload = blob[_LOGIT_HEADER.size:_LOGIT_HEADER.size + n]
    if len(payload) != n or len(blob) != _LOGIT_HEADER.size + n + _CRC.size:
        raise FormatError(f"payload length mismatch: expected {n} bytes")
    (crc,) = _CRC.unpack_from(blob, _LOGIT_HEADER.size + n)
    if crc != zlib.crc32(payload):
        raise FormatError("CRC32 mismatch: payload is corrupt")
    out = np.frombuffer(payload, dtype="<f4").reshape(X, Y, Z, P).astype(np.float32)
    if not np.isfinite(out).all():
        raise FormatError("logit payload contains non-finite values")
    return out


def write_voxel_grid(path, labels, label_width=None):
    Path(path).write_bytes(encode_voxel_grid(labels, label_width))


def read_voxel_grid(path) -> np.ndarray:
    return decode_voxel_grid(Path(path).read_bytes())


def write_logit_grid(path, logits):
    Path(path).write_bytes(encode_logit_grid(logits))


def read_logit_grid(path) -> np.ndarray:
    return decode_logit_grid(Path(path).read_bytes())


def voxels_to_csv(labels) -> str:
    """Every voxel as an ``x,y,z,label`` row in x-major order."""
    labels = np.asarray(labels)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", "label"])
    for (x, y, z), v in np.ndenumerate(labels):
        w.writerow([x, y, z, int(v)])
    return buf.getvalue()


def voxels_from_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise FormatError("empty voxel listing")
    coords = np.array([[int(r["x"]), int(r["y"]), int(r["z"])] for r in rows])
    dims = tuple(coords.max(axis=0) + 1)
    out = np.full(dims, -1, dtype=np.int64)
    out[tuple(coords.T)] = [int(r["label"]) for r in rows]
    if (out < 0).any():
        raise FormatError("voxel listing does not cover the full grid")
    return out
