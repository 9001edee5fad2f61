import numpy as np
import pytest

from smokeseg.errors import LabelSchemaError
from smokeseg.masks import (
    CLEAR,
    CLOUD,
    GAP,
    SMOKE,
    class_fractions,
    mask_to_rgb,
    read_mask_png,
    rgb_to_mask,
    write_mask_png,
)


def test_all_gap_mask_is_black():
    rgb = mask_to_rgb(np.zeros((4, 4), dtype=np.uint8))
    assert (rgb == 0).all()


def test_single_smoke_pixel_is_red():
    mask = np.zeros((3, 3), dtype=np.uint8)
    mask[0, 0] = SMOKE
    rgb = mask_to_rgb(mask)
    assert tuple(rgb[0, 0]) == (255, 0, 0)
    assert (rgb[1:, :] == 0).all()


def test_color_coding_table():
    mask = np.array([[GAP, SMOKE], [CLOUD, CLEAR]], dtype=np.uint8)
    rgb = mask_to_rgb(mask)
    assert tuple(rgb[0, 0]) == (0, 0, 0)
    assert tuple(rgb[0, 1]) == (255, 0, 0)
    assert tuple(rgb[1, 0]) == (0, 255, 0)
    assert tuple(rgb[1, 1]) == (0, 0, 255)


def test_roundtrip_identity_random_masks():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mask = rng.integers(0, 4, size=(11, 7)).astype(np.uint8)
        assert np.array_equal(rgb_to_mask(mask_to_rgb(mask)), mask)


def test_rgb_roundtrip_from_pure_colors():
    rng = np.random.default_rng(4)
    colors = np.array([(0, 0, 0), (255, 0, 0), (0, 255, 0), (0, 0, 255)], np.uint8)
    rgb = colors[rng.integers(0, 4, size=(6, 9))]
    assert np.array_equal(mask_to_rgb(rgb_to_mask(rgb)), rgb)


def test_mixed_color_rejected():
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[1, 1] = (128, 0, 0)
    with pytest.raises(LabelSchemaError):
        rgb_to_mask(rgb)


def test_unknown_code_rejected():
    with pytest.raises(LabelSchemaError):
        mask_to_rgb(np.full((2, 2), 9, dtype=np.uint8))
    with pytest.raises(LabelSchemaError):
        mask_to_rgb(np.zeros((2, 2, 2), dtype=np.uint8))


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    mask = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
    path = tmp_path / "mask.png"
    write_mask_png(path, mask)
    assert np.array_equal(read_mask_png(path), mask)


def test_class_fractions():
    mask = np.array([[GAP, SMOKE], [SMOKE, CLEAR]], dtype=np.uint8)
    fr = class_fractions(mask)
    assert fr[GAP] == 0.25
    assert fr[SMOKE] == 0.5
    assert fr[CLOUD] == 0.0
    assert fr[CLEAR] == 0.25
