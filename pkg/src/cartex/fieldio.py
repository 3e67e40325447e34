"""Binary field files and PNG renderings.

Field files: magic ``b"MSF1"``, the grid size ``N`` as little-endian
``uint32``, one domain byte (0 = space, 1 = frequency), then ``N*N``
complex samples as little-endian ``float64`` (real, imaginary) pairs in
row-major order (first index = first coordinate).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"MSF1"
DOMAINS = {"space": 0, "frequency": 1}
_HEADER = struct.Struct("<4sIB")


class FieldFormatError(ValueError):
    """Malformed field file."""


def write_field(path, data: np.ndarray, domain: str = "space") -> None:
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ValueError(f"field must be square, got shape {data.shape}")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    payload = np.ascontiguousarray(data, dtype="<c16").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, data.shape[0], DOMAINS[domain]))
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write field file {path}: {exc}") from exc


def read_field(path) -> tuple[np.ndarray, str]:
    """Return ``(array, domain)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read field file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, N, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    names = {v: k for k, v in DOMAINS.items()}
    if tag not in names:
        raise FieldFormatError(f"{path}: unknown domain tag {tag}")
    body = raw[_HEADER.size:]
    if len(body) != 16 * N * N:
        raise FieldFormatError(f"{path}: expected {16 * N * N} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<c16").reshape(N, N).astype(complex)
    return data, names[tag]


def write_png(path, field: np.ndarray) -> dict:
    """Grayscale rendering of the real part, linearly mapped from [min, max] to [0, 255].

    Returns the mapping (``{"min": ..., "max": ...}``) so the image can be
    interpreted quantitatively. Rows of the image are the first coordinate.
    """
    x = np.real(np.asarray(field, dtype=complex))
    lo, hi = float(x.min()), float(x.max())
    span = hi - lo
    img = np.zeros(x.shape, dtype=np.uint8) if span == 0 else \
        np.round((x - lo) / span * 255.0).astype(np.uint8)
    try:
        Image.fromarray(img).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc
    return {"min": lo, "max": hi}
