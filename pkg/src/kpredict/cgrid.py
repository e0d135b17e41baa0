"""Read and write the ``cgrid`` raw-grid format.

A grid stored at ``name.cgrid`` is two files:

* ``name.cgrid`` -- binary payload, little-endian interleaved float32
  ``(real, imag)`` pairs in row-major order, no header bytes.
* ``name.cgrid.json`` -- JSON sidecar ``{"width", "height", "dtype":
  "complex64", "layout": "row-major", "convention": "centered-unitary"}``.

Both files are written without timestamps so identical grids give identical
bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import as_grid

HEADER_FIELDS = {
    "dtype": "complex64",
    "layout": "row-major",
    "convention": "centered-unitary",
}


class CgridFormatError(ValueError):
    pass


def header_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_cgrid(path, grid) -> Path:
    path = Path(path)
    arr = as_grid(grid)
    h, w = arr.shape
    header = {"width": w, "height": h, **HEADER_FIELDS}
    payload = np.empty((h, w, 2), dtype="<f4")
    payload[..., 0] = arr.real
    payload[..., 1] = arr.imag
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload.tobytes(order="C"))
    header_path(path).write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return path


def read_header(path) -> dict:
    hp = header_path(path)
    try:
        header = json.loads(hp.read_text())
    except json.JSONDecodeError as exc:
        raise CgridFormatError(f"{hp}: invalid JSON header ({exc})") from None
    for key, expected in HEADER_FIELDS.items():
        if header.get(key) != expected:
            raise CgridFormatError(f"{hp}: expected {key}={expected!r}, got {header.get(key)!r}")
    for key in ("width", "height"):
        if not isinstance(header.get(key), int) or header[key] <= 0:
            raise CgridFormatError(f"{hp}: {key} must be a positive integer")
    return header


def read_cgrid(path) -> np.ndarray:
    """Load a grid as ``complex128`` with shape ``(height, width)``."""
    path = Path(path)
    header = read_header(path)
    w, h = header["width"], header["height"]
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != 2 * w * h:
        raise CgridFormatError(
            f"{path}: payload has {raw.size // 2} samples, header says {w}x{h}"
        )
    pairs = raw.reshape(h, w, 2).astype(np.float64)
    return as_grid(pairs[..., 0] + 1j * pairs[..., 1], name=str(path))
