"""Sidecar-header array files: a JSON header next to a raw binary payload.

``NAME.json`` holds shape, dtype (``real64`` or ``complex128`` stored as
interleaved little-endian real64 pairs), axis labels and endianness;
``NAME.bin`` holds the row-major payload.  Payloads round-trip bit exactly,
which is what makes whole pipelines byte-reproducible.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["write_array", "read_array", "array_paths"]

_DTYPES = {"real64": np.dtype("<f8"), "complex128": np.dtype("<c16")}


def array_paths(base):
    """(header, payload) paths for an array file base name."""
    base = Path(base)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".bin")


def write_array(base, arr, axis_labels=None):
    """Write ``arr`` (real or complex floating) as an array file pair.

    Returns the payload path.
    """
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        dtype_name, dtype = "complex128", _DTYPES["complex128"]
    else:
        dtype_name, dtype = "real64", _DTYPES["real64"]
    if axis_labels is None:
        axis_labels = [f"axis{i}" for i in range(arr.ndim)]
    if len(axis_labels) != arr.ndim:
        raise DataError(
            f"need {arr.ndim} axis labels, got {len(axis_labels)}")

    header_path, payload_path = array_paths(base)
    header = {
        "shape": list(arr.shape),
        "dtype": dtype_name,
        "axis_labels": list(axis_labels),
        "endianness": "little",
        "order": "row-major",
    }
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    payload_path.write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return payload_path


def read_array(base):
    """Read an array file pair; returns ``(array, axis_labels)``."""
    header_path, payload_path = array_paths(base)
    if not header_path.exists():
        raise DataError(f"missing array header {header_path}")
    if not payload_path.exists():
        raise DataError(f"missing array payload {payload_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed array header {header_path}: {exc}") from exc

    for key in ("shape", "dtype", "axis_labels", "endianness"):
        if key not in header:
            raise DataError(f"array header {header_path} lacks {key!r}")
    if header["endianness"] != "little":
        raise DataError(f"unsupported endianness {header['endianness']!r}")
    if header["dtype"] not in _DTYPES:
        raise DataError(f"unsupported dtype {header['dtype']!r}")

    shape = tuple(int(n) for n in header["shape"])
    dtype = _DTYPES[header["dtype"]]
    payload = payload_path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise DataError(
            f"payload {payload_path} holds {len(payload)} bytes, expected "
            f"{expected} for shape {shape} and dtype {header['dtype']}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.copy(), list(header["axis_labels"])
