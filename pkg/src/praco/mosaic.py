"""Vertical two-image mosaics and seam-based density splitting.

compose_mosaic stacks the positive image on top of the negative one and
reports the boundary row (the first pixel row belonging to the negative
image). split_density maps that boundary into a model's density-map row
space, which may be a different resolution than the mosaic, and integrates
the two halves separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DensityMap, InputError

WIDTH_RESIZE = "resize_negative_to_positive_width"
WIDTH_PAD = "pad_to_max_width"

MOSAIC_FILENAME_PATTERN = "mosaic_{pos}__{neg}.png"


@dataclass(frozen=True)
class ComposePolicy:
    """How to reconcile the two images' widths before stacking.

    resize_negative_to_positive_width scales the bottom image
    proportionally so the top image keeps its exact pixels (its count stays
    trustworthy; the bottom image's count never enters the metrics).
    pad_to_max_width centers both images horizontally on a background
    canvas instead.
    """

    width_policy: str = WIDTH_RESIZE
    resample: str = "bilinear"
    background: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.width_policy not in (WIDTH_RESIZE, WIDTH_PAD):
            raise InputError(f"unknown width_policy {self.width_policy!r}")
        if self.resample != "bilinear":
            raise InputError(f"unknown resample mode {self.resample!r}")
        bg = tuple(int(v) for v in self.background)
        if len(bg) != 3 or any(not (0 <= v <= 255) for v in bg):
            raise InputError(f"background must be an RGB triple in [0,255], got {self.background}")
        object.__setattr__(self, "background", bg)


def compose_mosaic(pos_image, neg_image, policy: ComposePolicy = ComposePolicy()):
    """Stack pos_image over neg_image; return (mosaic, boundary_row).

    boundary_row equals the (unscaled) positive image's height: the first
    row of the negative region. Output is RGB and bit-deterministic for
    identical inputs.
    """
    from PIL import Image

    for name, img in (("positive", pos_image), ("negative", neg_image)):
        if img.width < 1 or img.height < 1:
            raise InputError(f"{name} image has zero area: {img.width}x{img.height}")
    pos = pos_image.convert("RGB")
    neg = neg_image.convert("RGB")

    if policy.width_policy == WIDTH_RESIZE:
        if neg.width != pos.width:
            # scale proportionally, rounding half up, never below one row
            new_h = max(1, int(neg.height * pos.width / neg.width + 0.5))
            neg = neg.resize((pos.width, new_h), Image.Resampling.BILINEAR)
        out = Image.new("RGB", (pos.width, pos.height + neg.height), policy.background)
        out.paste(pos, (0, 0))
        out.paste(neg, (0, pos.height))
    else:
        width = max(pos.width, neg.width)
        out = Image.new("RGB", (width, pos.height + neg.height), policy.background)
        out.paste(pos, ((width - pos.width) // 2, 0))
        out.paste(neg, ((width - neg.width) // 2, pos.height))
    return out, pos.height


def map_boundary_to_density_row(
    boundary_row_image: int, mosaic_height_image: int, density_height: int
) -> int:
    """Proportionally map a pixel seam into density-map row space.

    Rounds half up, then clamps into [1, density_height - 1] so both halves
    stay nonempty. Exact integer arithmetic keeps this platform-stable.
    """
    if not (0 < boundary_row_image < mosaic_height_image):
        raise InputError(
            f"boundary_row {boundary_row_image} outside (0, {mosaic_height_image})"
        )
    if density_height < 2:
        raise InputError(f"density map with {density_height} row(s) cannot be split")
    r = (2 * boundary_row_image * density_height + mosaic_height_image) // (
        2 * mosaic_height_image
    )
    return min(max(r, 1), density_height - 1)


def split_density(
    d: DensityMap, boundary_row_image: int, mosaic_height_image: int
) -> tuple[float, float]:
    """Integrate a mosaic density map above/below the seam.

    Returns (c_pos, c_neg). Negative cell values participate in the sums;
    each half's total is clamped at zero afterwards because predicted
    counts are non-negative by contract.
    """
    r = map_boundary_to_density_row(boundary_row_image, mosaic_height_image, d.height)
    c_pos = float(np.sum(d.values[:r], dtype=np.float64))
    c_neg = float(np.sum(d.values[r:], dtype=np.float64))
    return max(0.0, c_pos), max(0.0, c_neg)
