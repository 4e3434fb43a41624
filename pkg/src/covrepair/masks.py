"""Mask rasters: PGM I/O and the three delineation levels.

A mask is a 2-D boolean grid; true cells mark the region the generator is
asked to regenerate.  The accurate level passes the ingested mask through
unchanged, the moderate level widens its border by a Euclidean disk of
radius 10% of the image width, and the imprecise level replaces it with its
filled bounding rectangle.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyMask


class MaskLevel(str, Enum):
    ACCURATE = "accurate"
    MODERATE = "moderate"
    IMPRECISE = "imprecise"


def disk_element(radius: int) -> np.ndarray:
    """Exact Euclidean disk membership on the lattice: dx^2 + dy^2 <= r^2."""
    r = int(radius)
    dy, dx = np.ogrid[-r : r + 1, -r : r + 1]
    return (dx * dx + dy * dy) <= r * r


def delineate_mask(
    accurate_mask: np.ndarray, level: MaskLevel, image_width: int
) -> np.ndarray:
    mask = np.asarray(accurate_mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be a 2-D raster")
    if not mask.any():
        raise EmptyMask("mask has no true cell")
    level = MaskLevel(level)
    if level is MaskLevel.ACCURATE:
        return mask.copy()
    if level is MaskLevel.MODERATE:
        radius = round(0.10 * image_width)
        if radius <= 0:
            return mask.copy()
        return ndimage.binary_dilation(mask, structure=disk_element(radius))
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    out = np.zeros_like(mask)
    out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = True
    return out


def read_pgm_mask(path: str | Path) -> np.ndarray:
    """Read a binary (P5) portable graymap; any nonzero byte is a true cell."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raster.reshape(height, width) > 0


def write_pgm_mask(mask: np.ndarray, path: str | Path) -> None:
    mask = np.asarray(mask, dtype=bool)
    height, width = mask.shape
    header = f"P5\n{width} {height}\n255\n".encode()
    body = np.where(mask, 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)
