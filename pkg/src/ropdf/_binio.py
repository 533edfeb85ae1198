"""Columnar binary container shared by trajectory and density files.

Layout: 8-byte magic, ``<u4`` version, ``<u8`` header length, UTF-8 JSON
header, then the arrays listed in the header as raw little-endian float64
in C order.
"""

import json
import struct
from pathlib import Path

import numpy as np

VERSION = 1


class BinaryFormatError(ValueError):
    pass


def write_arrays(path, magic: bytes, arrays: dict, meta: dict | None = None) -> Path:
    assert len(magic) == 8
    path = Path(path)
    names = list(arrays)
    header = {
        "meta": meta or {},
        "arrays": [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())
    return path


def read_arrays(path, magic: bytes):
    with open(path, "rb") as fh:
        if fh.read(8) != magic:
            raise BinaryFormatError(f"{path}: bad magic, expected {magic!r}")
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != VERSION:
            raise BinaryFormatError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode())
        out = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise BinaryFormatError(f"{path}: truncated array {spec['name']!r}")
            out[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
        if fh.read(1):
            raise BinaryFormatError(f"{path}: trailing bytes")
    return out, header["meta"]
