"""Mosaic composition geometry and seam-based density splitting."""

import io as stdio

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from praco import DensityMap, InputError
from praco.mosaic import (
    ComposePolicy,
    WIDTH_PAD,
    WIDTH_RESIZE,
    compose_mosaic,
    map_boundary_to_density_row,
    split_density,
)
from conftest import write_image


def gradient_image(size, seed=0):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as td:
        p = Path(td) / "img.png"
        write_image(p, size, seed)
        with Image.open(p) as img:
            return img.convert("RGB")


def round_half_up(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


class TestComposePolicy:
    def test_defaults(self):
        p = ComposePolicy()
        assert p.width_policy == WIDTH_RESIZE
        assert p.background == (0, 0, 0)

    def test_unknown_policy(self):
        with pytest.raises(InputError):
            ComposePolicy(width_policy="tile")

    def test_bad_background(self):
        with pytest.raises(InputError):
            ComposePolicy(background=(0, 0, 300))


class TestComposeMosaic:
    def test_equal_widths(self):
        pos = gradient_image((80, 100), seed=1)
        neg = gradient_image((80, 50), seed=2)
        out, boundary = compose_mosaic(pos, neg)
        assert out.size == (80, 150)
        assert boundary == 100

    def test_resize_policy_scales_negative(self):
        pos = gradient_image((80, 100), seed=1)
        neg = gradient_image((160, 50), seed=2)
        out, boundary = compose_mosaic(pos, neg, ComposePolicy(width_policy=WIDTH_RESIZE))
        assert out.size == (80, 125)
        assert boundary == 100

    def test_top_region_pixel_identical_under_resize(self):
        pos = gradient_image((40, 30), seed=3)
        neg = gradient_image((90, 20), seed=4)
        out, boundary = compose_mosaic(pos, neg, ComposePolicy(width_policy=WIDTH_RESIZE))
        top = np.asarray(out)[:boundary]
        assert np.array_equal(top, np.asarray(pos))

    def test_pad_policy_centers_and_pads(self):
        pos = gradient_image((80, 100), seed=5)
        neg = gradient_image((160, 50), seed=6)
        policy = ComposePolicy(width_policy=WIDTH_PAD, background=(9, 9, 9))
        out, boundary = compose_mosaic(pos, neg, policy)
        assert out.size == (160, 150)
        assert boundary == 100
        arr = np.asarray(out)
        assert np.array_equal(arr[:100, 40:120], np.asarray(pos))
        assert (arr[:100, :40] == 9).all() and (arr[:100, 120:] == 9).all()
        assert np.array_equal(arr[100:], np.asarray(neg))

    def test_deterministic_bytes(self):
        pos = gradient_image((33, 21), seed=7)
        neg = gradient_image((50, 17), seed=8)
        blobs = []
        for _ in range(2):
            out, _ = compose_mosaic(pos, neg)
            buf = stdio.BytesIO()
            out.save(buf, format="PNG")
            blobs.append(buf.getvalue())
        assert blobs[0] == blobs[1]

    def test_zero_area_rejected(self):
        pos = Image.new("RGB", (0, 10))
        neg = gradient_image((4, 4))
        with pytest.raises(InputError):
            compose_mosaic(pos, neg)


class TestBoundaryMapping:
    def test_identity_when_resolutions_match(self):
        assert map_boundary_to_density_row(2, 4, 4) == 2

    def test_proportional_upscale(self):
        assert map_boundary_to_density_row(2, 4, 8) == 4

    def test_proportional_downscale_rounds_half_up(self):
        # 3 * 5 / 10 = 1.5 rounds up to 2
        assert map_boundary_to_density_row(3, 10, 5) == 2

    def test_clamped_into_interior(self):
        assert map_boundary_to_density_row(1, 100, 4) == 1
        assert map_boundary_to_density_row(99, 100, 4) == 3

    def test_boundary_out_of_range(self):
        with pytest.raises(InputError):
            map_boundary_to_density_row(0, 4, 4)
        with pytest.raises(InputError):
            map_boundary_to_density_row(4, 4, 4)

    def test_single_row_map_cannot_split(self):
        with pytest.raises(InputError):
            map_boundary_to_density_row(1, 2, 1)


class TestSplitDensity:
    def test_fixture_map(self):
        d = DensityMap(np.array([[1.0, 1.0], [2.0, 0.0], [0.0, 3.0], [4.0, 0.0]]))
        assert split_density(d, 2, 4) == (4.0, 7.0)

    def test_all_zero(self):
        d = DensityMap(np.zeros((4, 2)))
        assert split_density(d, 2, 4) == (0.0, 0.0)

    def test_scaled_seam(self):
        # map twice the mosaic resolution: image row 2 of 4 is map row 4 of 8
        rows = np.zeros((8, 1))
        rows[:4] = 1.0
        d = DensityMap(rows)
        assert split_density(d, 2, 4) == (4.0, 0.0)

    def test_negative_halves_clamp_to_zero(self):
        d = DensityMap(np.array([[-5.0], [1.0]]))
        assert split_density(d, 1, 2) == (0.0, 1.0)


@st.composite
def dyadic_maps(draw):
    """Maps whose values are small dyadic rationals: float sums are exact."""
    height = draw(st.integers(min_value=2, max_value=10))
    width = draw(st.integers(min_value=1, max_value=10))
    cells = draw(
        st.lists(
            st.integers(min_value=0, max_value=1024),
            min_size=height * width,
            max_size=height * width,
        )
    )
    values = np.array(cells, dtype=np.float64).reshape(height, width) / 32.0
    return DensityMap(values)


@settings(max_examples=80, deadline=None)
@given(d=dyadic_maps(), data=st.data())
def test_split_conserves_total_mass(d, data):
    boundary = data.draw(st.integers(min_value=1, max_value=d.height - 1))
    c_pos, c_neg = split_density(d, boundary, d.height)
    total = float(np.sum(np.asarray(d.values, dtype=np.float64)))
    assert c_pos + c_neg == total, f"{c_pos} + {c_neg} != {total}"


@settings(max_examples=80, deadline=None)
@given(d=dyadic_maps(), data=st.data())
def test_swapping_row_blocks_swaps_counts(d, data):
    seam = data.draw(st.integers(min_value=1, max_value=d.height - 1))
    c_pos, c_neg = split_density(d, seam, d.height)
    swapped = DensityMap(np.vstack([d.values[seam:], d.values[:seam]]))
    s_pos, s_neg = split_density(swapped, d.height - seam, d.height)
    assert (s_pos, s_neg) == (c_neg, c_pos)


@settings(max_examples=80, deadline=None)
@given(
    boundary=st.integers(min_value=1, max_value=499),
    mosaic_height=st.integers(min_value=2, max_value=500),
    density_height=st.integers(min_value=2, max_value=300),
)
def test_boundary_mapping_matches_round_half_up(boundary, mosaic_height, density_height):
    if boundary >= mosaic_height:
        boundary = mosaic_height - 1
    r = map_boundary_to_density_row(boundary, mosaic_height, density_height)
    expected = round_half_up(boundary * density_height / mosaic_height)
    expected = min(max(expected, 1), density_height - 1)
    assert r == expected
