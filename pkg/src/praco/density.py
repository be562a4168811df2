"""Density-map codec, count extraction, and rendering from dot annotations.

The binary wire format (bit-exact):

    bytes 0-3    ASCII "DMAP"
    bytes 4-7    version, u32 little-endian, = 1
    bytes 8-11   height, u32 little-endian
    bytes 12-15  width, u32 little-endian
    bytes 16-19  reserved, u32 little-endian, = 0
    then         height*width IEEE-754 binary32 little-endian values,
                 row-major, top row first

A CSV fallback (plain rows of decimal reals, uniform column count) exists
for hand-written fixtures. All functions here are pure; encoding/decoding
distinct buffers concurrently is safe.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import DensityMap, FormatError, InputError

MAGIC = b"DMAP"
VERSION = 1
HEADER_SIZE = 20

_HEADER = struct.Struct("<4sIIII")

KERNEL_UNIT_DOT = "unit_dot"
KERNEL_GAUSSIAN = "gaussian"


def sum_count(d: DensityMap) -> float:
    """Count extracted from a density map: total mass, clamped at zero.

    Negative totals read as zero because predicted counts are defined to be
    non-negative; individual negative cells are otherwise kept as-is.
    """
    total = float(np.sum(d.values, dtype=np.float64))
    return max(0.0, total)


def render_from_points(
    points: Sequence[tuple[float, float]],
    height: int,
    width: int,
    kernel: str = KERNEL_UNIT_DOT,
    sigma: Optional[float] = None,
) -> DensityMap:
    """Render a density map where each (x, y) point contributes unit mass.

    unit_dot adds 1.0 to the cell containing the point. gaussian spreads a
    kernel evaluated at cell centers, truncated at 4*sigma and renormalized
    over the surviving in-grid cells, so border points still carry unit
    mass. A sigma so small that no cell center survives truncation falls
    back to unit_dot for that point.
    """
    if height < 1 or width < 1:
        raise InputError(f"render target must have positive dimensions, got {height}x{width}")
    if kernel not in (KERNEL_UNIT_DOT, KERNEL_GAUSSIAN):
        raise InputError(f"unknown kernel {kernel!r}")
    if kernel == KERNEL_GAUSSIAN:
        if sigma is None or not (sigma > 0) or not math.isfinite(sigma):
            raise InputError(f"gaussian kernel requires sigma > 0, got {sigma}")

    acc = np.zeros((height, width), dtype=np.float64)
    for idx, (x, y) in enumerate(points):
        x = float(x)
        y = float(y)
        if not (0 <= x < width and 0 <= y < height):
            raise InputError(
                f"point {idx} at ({x}, {y}) outside render target [0,{width})x[0,{height})"
            )
        if kernel == KERNEL_UNIT_DOT:
            acc[int(y), int(x)] += 1.0
            continue
        radius = 4.0 * sigma
        r0 = max(0, int(math.floor(y - radius)))
        r1 = min(height, int(math.ceil(y + radius)) + 1)
        c0 = max(0, int(math.floor(x - radius)))
        c1 = min(width, int(math.ceil(x + radius)) + 1)
        rows = np.arange(r0, r1, dtype=np.float64) + 0.5
        cols = np.arange(c0, c1, dtype=np.float64) + 0.5
        dist2 = (rows[:, None] - y) ** 2 + (cols[None, :] - x) ** 2
        weights = np.where(dist2 <= radius * radius, np.exp(-dist2 / (2.0 * sigma * sigma)), 0.0)
        total = float(weights.sum())
        if total <= 0.0:
            acc[int(y), int(x)] += 1.0
        else:
            acc[r0:r1, c0:c1] += weights / total
    return DensityMap(acc)


def encode_dmap(d: DensityMap) -> bytes:
    """Serialize a density map to the DMAP binary format."""
    header = _HEADER.pack(MAGIC, VERSION, d.height, d.width, 0)
    payload = np.ascontiguousarray(d.values, dtype="<f4").tobytes()
    return header + payload


def decode_dmap(data: bytes) -> DensityMap:
    """Parse DMAP bytes; raises FormatError with the offending byte offset."""
    if len(data) < HEADER_SIZE:
        raise FormatError(
            f"truncated header: need {HEADER_SIZE} bytes, got {len(data)}", offset=len(data)
        )
    magic, version, height, width, reserved = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}", offset=4)
    if height == 0:
        raise FormatError("height must be positive", offset=8)
    if width == 0:
        raise FormatError("width must be positive", offset=12)
    if reserved != 0:
        raise FormatError(f"reserved field must be 0, got {reserved}", offset=16)
    expected = height * width * 4
    actual = len(data) - HEADER_SIZE
    if actual != expected:
        raise FormatError(
            f"payload size mismatch for {height}x{width} map: expected {expected} bytes, "
            f"got {actual}",
            offset=HEADER_SIZE,
        )
    values = np.frombuffer(data, dtype="<f4", count=height * width, offset=HEADER_SIZE)
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise FormatError(
            f"non-finite value at cell {bad}", offset=HEADER_SIZE + 4 * bad
        )
    return DensityMap(values.reshape(height, width))


def encode_density_csv(d: DensityMap) -> str:
    """Serialize as CSV rows; values print exactly (round-trip preserves bits)."""
    lines = []
    for row in d.values:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def decode_density_csv(text: str) -> DensityMap:
    """Parse the CSV fallback; errors name the offending row/column."""
    rows: list[list[float]] = []
    width: Optional[int] = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FormatError(f"row {lineno} has {len(cells)} columns, expected {width}")
        parsed = []
        for col, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise FormatError(f"row {lineno} column {col}: not a number: {cell.strip()!r}")
            if not math.isfinite(value):
                raise FormatError(f"row {lineno} column {col}: non-finite value")
            parsed.append(value)
        rows.append(parsed)
    if not rows:
        raise FormatError("density CSV contains no rows")
    return DensityMap(np.array(rows, dtype=np.float64))


def load_density_file(path: Union[str, Path]) -> DensityMap:
    """Read a density map from disk, sniffing DMAP binary vs CSV fallback."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read density file {path}: {exc}")
    try:
        if data[:4] == MAGIC:
            return decode_dmap(data)
        return decode_density_csv(data.decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError(f"{path}: neither DMAP binary nor decodable CSV text")
    except FormatError as exc:
        raise FormatError(f"{path}: {exc.message}", offset=exc.offset)


def save_density_file(path: Union[str, Path], d: DensityMap, fmt: str = "dmap") -> Path:
    """Write a density map as DMAP binary (default) or CSV."""
    path = Path(path)
    if fmt == "dmap":
        path.write_bytes(encode_dmap(d))
    elif fmt == "csv":
        path.write_text(encode_density_csv(d), encoding="utf-8")
    else:
        raise InputError(f"unknown density format {fmt!r}")
    return path
