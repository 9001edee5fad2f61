"""Per-pixel class masks and their lossless PNG color coding.

Codes: 0 = Gap (unlabelled), 1 = Smoke, 2 = Cloud, 3 = Clear. Gap is a
first-class value: an unlabelled pixel is never conflated with Clear.
PNG coding: Smoke red, Cloud green, Clear blue, Gap black.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import LabelSchemaError

GAP = 0
SMOKE = 1
CLOUD = 2
CLEAR = 3

CLASS_CODES = (SMOKE, CLOUD, CLEAR)
CLASS_NAMES = {SMOKE: "Smoke", CLOUD: "Cloud", CLEAR: "Clear"}
NAME_TO_CODE = {name: code for code, name in CLASS_NAMES.items()}

CODE_TO_COLOR = {
    GAP: (0, 0, 0),
    SMOKE: (255, 0, 0),
    CLOUD: (0, 255, 0),
    CLEAR: (0, 0, 255),
}
COLOR_TO_CODE = {color: code for code, color in CODE_TO_COLOR.items()}


def validate_mask(mask: np.ndarray) -> np.ndarray:
    """Check a mask is 2-D with codes in {0, 1, 2, 3}; return it as uint8."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise LabelSchemaError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.isin(mask, (GAP, SMOKE, CLOUD, CLEAR)).all():
        bad = sorted(set(np.unique(mask)) - {GAP, SMOKE, CLOUD, CLEAR})
        raise LabelSchemaError(f"mask contains unknown codes {bad}")
    return mask.astype(np.uint8)


def mask_to_rgb(mask: np.ndarray) -> np.ndarray:
    """Encode a class mask as an HxWx3 uint8 image with the fixed colors."""
    mask = validate_mask(mask)
    lut = np.zeros((4, 3), dtype=np.uint8)
    for code, color in CODE_TO_COLOR.items():
        lut[code] = color
    return lut[mask]


def rgb_to_mask(rgb: np.ndarray) -> np.ndarray:
    """Decode a pure-color image back to a class mask.

    Only exact black / red / green / blue pixels are legal; anything else
    (antialiased or re-encoded images) raises LabelSchemaError.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise LabelSchemaError(f"expected HxWx3 image, got shape {rgb.shape}")
    mask = np.zeros(rgb.shape[:2], dtype=np.uint8)
    matched = np.zeros(rgb.shape[:2], dtype=bool)
    for color, code in COLOR_TO_CODE.items():
        hit = (rgb == np.array(color, dtype=rgb.dtype)).all(axis=2)
        mask[hit] = code
        matched |= hit
    if not matched.all():
        r, c = np.argwhere(~matched)[0]
        raise LabelSchemaError(
            f"mixed-color pixel at ({r}, {c}): {tuple(int(v) for v in rgb[r, c])}"
        )
    return mask


def write_mask_png(path, mask: np.ndarray) -> None:
    Image.fromarray(mask_to_rgb(mask), mode="RGB").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"))
    return rgb_to_mask(rgb)


def class_fractions(mask: np.ndarray) -> dict:
    """Fraction of pixels per code, including Gap."""
    mask = validate_mask(mask)
    total = mask.size
    return {code: float((mask == code).sum()) / total for code in (GAP,) + CLASS_CODES}
