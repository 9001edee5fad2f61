"""Deterministic synthetic 6-band scenes for desk-scale training and tests.

Each scene composes three cover types over a band-correlated background:

* smoke: anisotropic Gaussian plumes, bright in the visible bands, dark in
  SWIR, mid NIR; thresholded density defines the smoke mask.
* cloud: disks bright in all six bands, painted over smoke.
* clear: everything else (smooth low-reflectance background).

Class boundaries are widened into Gap by ``gap_margin`` pixels, mirroring
labels that only mark high-confidence cores. Output is bit-reproducible for
a given (seed, count, size, gap_margin).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ManifestEntry, write_manifest
from .errors import ConfigError
from .imagery import N_BANDS, save_raster
from .masks import CLEAR, CLOUD, GAP, SMOKE, write_mask_png

# Aggregate per-class pixel-fraction ranges a generated dataset stays within
# (checked by counting in the test suite; per-image variance is larger).
TARGET_FRACTION_RANGES = {
    SMOKE: (0.005, 0.45),
    CLOUD: (0.005, 0.45),
    CLEAR: (0.15, 0.95),
    GAP: (0.0, 0.55),
}

# Background reflectance weights per band (Blue..SWIR2): dim vegetated land.
_BG_WEIGHTS = np.array([0.30, 0.36, 0.42, 0.85, 0.70, 0.55], dtype=np.float32)
# Smoke overlay color: bright visible, mid NIR, dark SWIR.
_SMOKE_COLOR = np.array([0.88, 0.85, 0.82, 0.45, 0.10, 0.08], dtype=np.float32)
_SMOKE_DENSITY_THRESHOLD = 0.25


def _background(rng, height, width):
    """Smooth brightness field times band weights, plus pixel noise."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    brightness = np.full((height, width), 0.25, dtype=np.float32)
    for _ in range(3):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        sigma = rng.uniform(0.3, 0.7) * min(height, width)
        amp = rng.uniform(-0.08, 0.12)
        brightness += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    brightness = np.clip(brightness, 0.08, 0.45)
    bands = brightness[:, :, None] * _BG_WEIGHTS[None, None, :]
    bands += rng.normal(0.0, 0.015, size=bands.shape).astype(np.float32)
    return np.clip(bands, 0.0, 0.5).astype(np.float32)


def _plume_density(rng, height, width):
    """Normalized density of one rotated anisotropic Gaussian plume."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    scale = min(height, width)
    cy = rng.uniform(0.25, 0.75) * height
    cx = rng.uniform(0.25, 0.75) * width
    sigma_long = rng.uniform(0.16, 0.26) * scale
    sigma_short = rng.uniform(0.07, 0.11) * scale
    theta = rng.uniform(0.0, np.pi)
    dy, dx = yy - cy, xx - cx
    along = np.cos(theta) * dx + np.sin(theta) * dy
    across = -np.sin(theta) * dx + np.cos(theta) * dy
    q = (along / sigma_long) ** 2 + (across / sigma_short) ** 2
    return np.exp(-0.5 * q).astype(np.float32)


def _carve_gap_margin(mask, margin):
    """Set pixels within ``margin`` (Chebyshev) of a class boundary to Gap."""
    if margin <= 0:
        return mask
    padded = np.pad(mask, margin, mode="edge")
    boundary = np.zeros(mask.shape, dtype=bool)
    h, w = mask.shape
    for dr in range(-margin, margin + 1):
        for dc in range(-margin, margin + 1):
            if dr == 0 and dc == 0:
                continue
            window = padded[margin + dr : margin + dr + h, margin + dc : margin + dc + w]
            boundary |= window != mask
    out = mask.copy()
    out[boundary] = GAP
    return out


def generate_scene(rng, size, gap_margin=2):
    """One (image, mask) pair; image float32 in [0, 1], mask with Gap margins."""
    height, width = size
    image = _background(rng, height, width)
    mask = np.full((height, width), CLEAR, dtype=np.uint8)

    for _ in range(rng.integers(1, 3)):
        density = _plume_density(rng, height, width)
        smoky = density >= _SMOKE_DENSITY_THRESHOLD
        alpha = np.clip(0.55 + 0.45 * density, 0.0, 1.0)[:, :, None] * smoky[:, :, None]
        image = image * (1.0 - alpha) + _SMOKE_COLOR[None, None, :] * alpha
        mask[smoky] = SMOKE

    for _ in range(rng.integers(1, 3)):
        cy = rng.uniform(0.2, 0.8) * height
        cx = rng.uniform(0.2, 0.8) * width
        radius = rng.uniform(0.10, 0.17) * min(height, width)
        yy, xx = np.mgrid[0:height, 0:width]
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
        level = rng.uniform(0.80, 0.95)
        image[disk] = level + rng.normal(0.0, 0.01, size=(int(disk.sum()), N_BANDS))
        mask[disk] = CLOUD

    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, _carve_gap_margin(mask, gap_margin)


def synth_generate(out_dir, seed: int, count: int, size=(64, 64), gap_margin=2):
    """Write ``count`` scenes plus a manifest under ``out_dir``.

    Deterministic in all arguments. Every 4th entry (index 3, 7, ...) goes to
    the eval split; with count < 4 all entries are train. Returns the
    manifest (paths relative to ``out_dir``).
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    manifest = DatasetManifest(
        metadata={
            "generator": "synth",
            "seed": str(seed),
            "count": str(count),
            "size": f"{size[0]}x{size[1]}",
            "gap_margin": str(gap_margin),
            "band_scale": ",".join("1" for _ in range(N_BANDS)),
        }
    )
    for i in range(count):
        image, mask = generate_scene(rng, size, gap_margin=gap_margin)
        image_rel = Path("images") / f"scene_{i:04d}.mbr"
        mask_rel = Path("masks") / f"scene_{i:04d}.png"
        save_raster(out_dir / image_rel, image)
        write_mask_png(out_dir / mask_rel, mask)
        split = "eval" if i % 4 == 3 else "train"
        manifest.entries.append(ManifestEntry(image_rel, mask_rel, split))

    write_manifest(out_dir / "manifest.tsv", manifest)
    return manifest
