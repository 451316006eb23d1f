"""Deterministic binary container for datasets and checkpoints.

Layout: ASCII magic line, a 16-digit length field, a JSON header describing
the payload (kind, version, metadata, array manifest), then the raw
little-endian bytes of each array in manifest order. Writing the same
content twice produces identical bytes, which zip-based formats do not
guarantee.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .exceptions import MissingArtifactError

__all__ = ["save_container", "load_container", "FORMAT_VERSION"]

MAGIC = b"SPLITPROJ-BIN\n"
FORMAT_VERSION = 1

_DTYPES = {"float64": "<f8", "int64": "<i8", "bool": "|b1"}


def _canonical_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "float64"
    if arr.dtype == np.int64:
        return "int64"
    if arr.dtype == np.bool_:
        return "bool"
    raise ValueError(f"unsupported dtype {arr.dtype}; use float64, int64, or bool")


def save_container(path: str, kind: str, meta: dict, arrays: dict) -> None:
    """Write a self-describing container; keys are sorted for stable bytes."""
    manifest = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = _canonical_dtype(arr)
        arr = arr.astype(_DTYPES[dt], copy=False)
        manifest.append({"name": name, "dtype": dt, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "kind": kind,
        "version": FORMAT_VERSION,
        "meta": meta,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"%016d" % len(header_bytes))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_container(path: str, expect_kind: str | None = None):
    """Read a container back; returns (meta, arrays)."""
    if not os.path.exists(path):
        raise MissingArtifactError(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a splitproj container")
        hlen = int(fh.read(16))
        header = json.loads(fh.read(hlen))
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported container version {header.get('version')}")
        if expect_kind is not None and header["kind"] != expect_kind:
            raise ValueError(
                f"expected a {expect_kind} container, found {header['kind']}"
            )
        arrays = {}
        for item in header["arrays"]:
            dt = _DTYPES[item["dtype"]]
            count = int(np.prod(item["shape"])) if item["shape"] else 1
            buf = fh.read(count * np.dtype(dt).itemsize)
            arrays[item["name"]] = np.frombuffer(buf, dtype=dt).reshape(
                item["shape"]
            ).copy()
    return header["meta"], arrays
