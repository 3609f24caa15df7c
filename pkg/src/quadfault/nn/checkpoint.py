"""Deterministic weight checkpoint format.

Layout: one magic line, one JSON header line (sorted keys, no whitespace
variance), then the raw little-endian array bytes concatenated in header
order. No timestamps or compression, so identical contents always produce
identical bytes and round-trips are bit-exact.
"""

import json

import numpy as np

MAGIC = b"QFCKPT1\n"


def save_checkpoint(path, arrays, meta=None):
    """Write name->array dict plus a JSON-serializable meta dict."""
    header = {
        "meta": meta or {},
        "arrays": [
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            for name, arr in sorted(arrays.items())
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(blob)
        for name, _ in sorted(arrays.items()):
            arr = np.ascontiguousarray(arrays[name])
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays dict, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a quadfault checkpoint")
        header = json.loads(fh.readline().decode())
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"]).newbyteorder("<")
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arr = np.frombuffer(buf, dtype=dtype, count=count).reshape(spec["shape"])
            arrays[spec["name"]] = arr.astype(np.dtype(spec["dtype"]), copy=True)
    return arrays, header["meta"]
