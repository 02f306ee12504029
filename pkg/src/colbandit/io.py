"""Binary file formats for embeddings and precomputed interaction matrices.

Two tiny little-endian formats, both with a four-byte magic:

* ``CBM1`` — one embedding set: magic, ``dim`` (int32), ``count`` (int32),
  then ``count * dim`` float32 values in row order;
* ``CBH1`` — one precomputed matrix: magic, ``n_rows``, ``n_cols`` (int32
  each), then ``n_rows * n_cols`` float32 values row-major.

Values are stored as 32-bit floats and returned as float64 arrays carrying
exactly the stored values, so a write/read cycle is lossless after the first
float32 cast. A JSON-lines manifest maps document ids to their embedding
files; paths are kept relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

__all__ = [
    "MAGIC_VECTORS",
    "MAGIC_MATRIX",
    "read_vectors",
    "write_vectors",
    "read_matrix",
    "write_matrix",
    "read_manifest",
    "write_manifest",
    "sniff_format",
]

MAGIC_VECTORS = b"CBM1"
MAGIC_MATRIX = b"CBH1"

_HEADER = struct.Struct("<4sii")
_MAX_ELEMENTS = 1 << 31  # sanity cap against garbage headers


def _read_exact(fh: BinaryIO, size: int, what: str, path: Path) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ValueError(f"{path}: short read in {what} (wanted {size} bytes, got {len(data)})")
    return data


def _read_header(fh: BinaryIO, magic: bytes, path: Path) -> tuple[int, int]:
    raw = _read_exact(fh, _HEADER.size, "header", path)
    got, a, b = _HEADER.unpack(raw)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if a < 1 or b < 1 or a * b > _MAX_ELEMENTS:
        raise ValueError(f"{path}: implausible dimensions ({a}, {b}) in header")
    return a, b


def _read_payload(fh: BinaryIO, count: int, path: Path) -> np.ndarray:
    data = _read_exact(fh, 4 * count, "payload", path)
    if fh.read(1):
        raise ValueError(f"{path}: trailing bytes after {count} values")
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_vectors(path: str | Path, vectors: np.ndarray) -> None:
    """Write a (count, dim) array as a CBM1 embedding file."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"vectors must be a non-empty 2-D array, got shape {arr.shape}")
    count, dim = arr.shape
    header = _HEADER.pack(MAGIC_VECTORS, dim, count)
    _atomic_write(Path(path), header + arr.astype("<f4").tobytes())


def read_vectors(path: str | Path) -> np.ndarray:
    """Read a CBM1 file into a (count, dim) float64 array."""
    p = Path(path)
    with open(p, "rb") as fh:
        dim, count = _read_header(fh, MAGIC_VECTORS, p)
        flat = _read_payload(fh, count * dim, p)
    return flat.reshape(count, dim)


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write an (n_rows, n_cols) array as a CBH1 matrix file."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"matrix must be a non-empty 2-D array, got shape {arr.shape}")
    n, t = arr.shape
    header = _HEADER.pack(MAGIC_MATRIX, n, t)
    _atomic_write(Path(path), header + arr.astype("<f4").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a CBH1 file into an (n_rows, n_cols) float64 array."""
    p = Path(path)
    with open(p, "rb") as fh:
        n, t = _read_header(fh, MAGIC_MATRIX, p)
        flat = _read_payload(fh, n * t, p)
    return flat.reshape(n, t)


def write_manifest(path: str | Path, entries: list[tuple[str, str]]) -> None:
    """Write (doc_id, relative path) pairs as a JSON-lines manifest."""
    lines = []
    seen: set[str] = set()
    for doc_id, rel in entries:
        if doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc_id!r} in manifest")
        seen.add(doc_id)
        lines.append(json.dumps({"doc_id": doc_id, "path": rel}, sort_keys=True))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_manifest(path: str | Path) -> list[tuple[str, Path]]:
    """Read a manifest, resolving each entry's path against the manifest dir."""
    p = Path(path)
    base = p.parent
    out: list[tuple[str, Path]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            doc_id, rel = rec["doc_id"], rec["path"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{p}:{lineno}: bad manifest line ({exc})") from exc
        if doc_id in seen:
            raise ValueError(f"{p}:{lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        out.append((str(doc_id), base / rel))
    if not out:
        raise ValueError(f"{p}: manifest is empty")
    return out


def sniff_format(path: str | Path) -> str:
    """Return 'vectors', 'matrix', or 'manifest' for a data file on disk."""
    p = Path(path)
    with open(p, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC_VECTORS:
        return "vectors"
    if head == MAGIC_MATRIX:
        return "matrix"
    if head[:1] == b"{":
        return "manifest"
    raise ValueError(f"{p}: unrecognized file format (leading bytes {head!r})")
