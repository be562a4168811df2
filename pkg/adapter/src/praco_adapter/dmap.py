"""Standalone reader/writer for the DMAP density-map wire format.

Layout: 4-byte magic "DMAP", then uint32 little-endian version (always 1),
height, width, and a reserved word (always 0), followed by height*width
float32 little-endian cell values in row-major order. This module carries
no dependency on the harness; byte compatibility is pinned by golden-file
tests instead of shared code.
"""

import math
import struct
from typing import Any, Sequence

MAGIC = b"DMAP"
VERSION = 1

_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size


class DmapFormatError(ValueError):
    """The bytes or the in-memory grid do not fit the DMAP contract."""


def grid_to_flat(grid: Any) -> tuple[int, int, list[float]]:
    """Normalize a 2-D density result into (height, width, row-major cells).

    Accepts nested sequences or anything exposing tolist() (numpy arrays,
    without importing numpy here). Rows must be non-empty, equal length,
    and hold finite real numbers.
    """
    if hasattr(grid, "tolist"):
        grid = grid.tolist()
    if isinstance(grid, (str, bytes)) or not isinstance(grid, Sequence):
        raise DmapFormatError(f"density result must be a 2-D grid, got {type(grid).__name__}")
    if len(grid) == 0:
        raise DmapFormatError("density result has no rows")
    flat: list[float] = []
    width = None
    for r, row in enumerate(grid):
        if isinstance(row, (str, bytes)) or not isinstance(row, Sequence):
            raise DmapFormatError(f"density row {r} is not a sequence; a 2-D grid is required")
        if width is None:
            width = len(row)
            if width == 0:
                raise DmapFormatError("density rows are empty")
        elif len(row) != width:
            raise DmapFormatError(f"density row {r} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            if isinstance(cell, bool) or not isinstance(cell, (int, float)):
                raise DmapFormatError(f"density cell ({r}, {c}) is not a number: {cell!r}")
            value = float(cell)
            if not math.isfinite(value):
                raise DmapFormatError(f"density cell ({r}, {c}) is not finite: {value!r}")
            flat.append(value)
    return len(grid), width, flat


def encode_dmap(height: int, width: int, values: Sequence[float]) -> bytes:
    """Serialize row-major cell values to DMAP bytes."""
    if height < 1 or width < 1:
        raise DmapFormatError(f"map dimensions must be positive, got {height}x{width}")
    if len(values) != height * width:
        raise DmapFormatError(
            f"expected {height * width} cells for a {height}x{width} map, got {len(values)}"
        )
    try:
        payload = struct.pack(f"<{len(values)}f", *values)
    except (struct.error, OverflowError) as exc:
        raise DmapFormatError(f"cell values do not fit float32: {exc}")
    return _HEADER.pack(MAGIC, VERSION, height, width, 0) + payload


def decode_dmap(data: bytes) -> tuple[int, int, list[float]]:
    """Parse DMAP bytes back into (height, width, row-major cell values)."""
    if len(data) < HEADER_SIZE:
        raise DmapFormatError(f"truncated header: {len(data)} bytes, need {HEADER_SIZE}")
    magic, version, height, width, reserved = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DmapFormatError(f"bad magic at offset 0: {magic!r}")
    if version != VERSION:
        raise DmapFormatError(f"unsupported version at offset 4: {version}")
    if height < 1:
        raise DmapFormatError(f"bad height at offset 8: {height}")
    if width < 1:
        raise DmapFormatError(f"bad width at offset 12: {width}")
    if reserved != 0:
        raise DmapFormatError(f"reserved word at offset 16 must be 0, got {reserved}")
    expected = HEADER_SIZE + 4 * height * width
    if len(data) != expected:
        raise DmapFormatError(
            f"payload length mismatch: {len(data)} bytes, expected {expected} for {height}x{width}"
        )
    return height, width, list(struct.unpack_from(f"<{height * width}f", data, HEADER_SIZE))
