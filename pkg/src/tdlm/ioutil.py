"""Atomic file writes and the length-prefixed binary container format.

Container layout: a short ASCII magic, a little-endian uint64 header
length, a UTF-8 JSON header (with an ``arrays`` directory of
name/shape/dtype/offset records), then the raw little-endian array
payload.  Writes go to a temp file in the target directory followed by an
atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError

_DTYPES = {"float32": np.float32, "float64": np.float64, "int32": np.int32,
           "int64": np.int64}


def _atomic_write_bytes(path: str, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write_json(path: str, obj):
    atomic_write_text(path, dump_json(obj) + "\n")


def write_container(path: str, magic: bytes, header: dict, arrays):
    """Serialize ``header`` plus named arrays; byte-identical across reruns."""
    arrays = list(arrays)
    directory = []
    offset = 0
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported array dtype {dtype} for {name!r}")
        blob = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        directory.append({"name": name, "shape": list(arr.shape),
                          "dtype": dtype, "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    full_header = dict(header)
    full_header["arrays"] = directory
    header_bytes = dump_json(full_header).encode("utf-8")
    out = bytearray()
    out += magic
    out += struct.pack("<Q", len(header_bytes))
    out += header_bytes
    for blob in blobs:
        out += blob
    _atomic_write_bytes(path, bytes(out))


def read_container(path: str, magic: bytes):
    """Read a container; returns (header, dict name -> ndarray)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(magic) + 8:
        raise CheckpointError(f"{path}: truncated file")
    if data[:len(magic)] != magic:
        raise CheckpointError(f"{path}: bad magic {data[:len(magic)]!r}, expected {magic!r}")
    (hlen,) = struct.unpack("<Q", data[len(magic):len(magic) + 8])
    hstart = len(magic) + 8
    if len(data) < hstart + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[hstart:hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    payload = data[hstart + hlen:]
    arrays = {}
    for rec in header.get("arrays", []):
        dtype = np.dtype(_DTYPES[rec["dtype"]]).newbyteorder("<")
        count = int(np.prod(rec["shape"])) if rec["shape"] else 1
        nbytes = count * dtype.itemsize
        start = rec["offset"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated payload for array {rec['name']!r}")
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        arrays[rec["name"]] = arr.reshape(rec["shape"]).astype(_DTYPES[rec["dtype"]])
    return header, arrays
