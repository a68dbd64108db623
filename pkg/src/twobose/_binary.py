"""Shared container for the binary outputs (tensors, states, ensembles).

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then the raw arrays back to back.  The header's ``arrays`` list
gives each array's name, shape, dtype and byte offset from the end of the
header.  See docs/formats.md.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import __version__


def write_blob(path, magic: bytes, header: dict, arrays: dict) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    entries = []
    offset = 0
    raw = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype
        data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype.str,
                        "offset": offset, "nbytes": len(data)})
        offset += len(data)
        raw.append(data)
    full = dict(header)
    full.setdefault("artifact_version", __version__)
    full["arrays"] = entries
    blob = json.dumps(full, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for data in raw:
            fh.write(data)


def read_blob(path, magic: bytes) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != magic:
            raise ValueError(f"{path}: wrong file type (expected magic {magic!r})")
        head = fh.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated header")
        (length,) = struct.unpack("<Q", head)
        header = json.loads(fh.read(length))
        data = fh.read()
    arrays = {}
    for e in header["arrays"]:
        chunk = data[e["offset"]: e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise ValueError(f"{path}: array {e['name']} is truncated")
        arrays[e["name"]] = np.frombuffer(chunk, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return header, arrays
