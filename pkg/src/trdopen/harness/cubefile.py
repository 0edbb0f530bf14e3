"""``.trdc`` cube files.

Layout (all little-endian)::

    b"TRDC" | version u32 | T u32 | M u32 | N u32 | T*M*N float32 | crc32 u32

Values are in ``[t][m][n]`` order with ``n`` fastest. The CRC covers the
float payload only.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"TRDC"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_CRC = struct.Struct("<I")


class CubeFormatError(ValueError):
    pass


def encode_cube(cube) -> bytes:
    cube = np.asarray(cube)
    if cube.ndim != 3 or min(cube.shape) < 1:
        raise ValueError(f"cube must be a non-empty 3D array, got shape {cube.shape}")
    payload = np.ascontiguousarray(cube, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, *cube.shape) + payload + _CRC.pack(zlib.crc32(payload))


def decode_cube(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size + _CRC.size:
        raise CubeFormatError("truncated cube file (header)")
    magic, version, t, m, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CubeFormatError(f"unsupported cube version {version}")
    size = 4 * t * m * n
    if len(data) != _HEADER.size + size + _CRC.size:
        raise CubeFormatError(
            f"cube file length {len(data)} does not match dims {t}x{m}x{n}")
    payload = data[_HEADER.size:_HEADER.size + size]
    (crc,) = _CRC.unpack_from(data, _HEADER.size + size)
    if zlib.crc32(payload) != crc:
        raise CubeFormatError("cube payload checksum mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(t, m, n).astype(np.float32)


def write_cube(path, cube) -> None:
    path = Path(path)
    path.write_bytes(encode_cube(cube))


def read_cube(path) -> np.ndarray:
    return decode_cube(Path(path).read_bytes())
