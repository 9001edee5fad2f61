"""Dataset manifests, image/label pairing, and training-time augmentation.

Manifest format: UTF-8 text, one entry per line as
``image_path<TAB>label_path<TAB>split`` with split in {train, eval}. A label
path of ``-`` means "unlabelled" and is only legal for train entries. Leading
``# key=value`` lines carry free-form metadata (band scales, generator seed).
Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, PairingError
from .imagery import load_multiband
from .masks import CLEAR, CLOUD, GAP, SMOKE, read_mask_png

SPLITS = ("train", "eval")
NO_LABEL = "-"


@dataclass
class ManifestEntry:
    image_path: Path
    label_path: Path | None
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    @property
    def band_scale(self):
        raw = self.metadata.get("band_scale")
        if raw is None:
            return None
        return [float(v) for v in raw.split(",")]


def write_manifest(path, manifest: DatasetManifest) -> None:
    lines = []
    for key in sorted(manifest.metadata):
        lines.append(f"# {key}={manifest.metadata[key]}")
    for entry in manifest.entries:
        label = NO_LABEL if entry.label_path is None else str(entry.label_path)
        lines.append(f"{entry.image_path}\t{label}\t{entry.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    Validates split names, the eval-entries-have-labels rule, and (by
    default) that every referenced file exists.
    """
    path = Path(path)
    base = path.parent
    manifest = DatasetManifest()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                manifest.metadata[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
        image_raw, label_raw, split = parts
        if split not in SPLITS:
            raise DataError(f"{path}:{lineno}: unknown split {split!r}")
        if label_raw == NO_LABEL and split == "eval":
            raise DataError(f"{path}:{lineno}: eval entries must have labels")
        image_path = base / image_raw if not Path(image_raw).is_absolute() else Path(image_raw)
        label_path = None
        if label_raw != NO_LABEL:
            label_path = base / label_raw if not Path(label_raw).is_absolute() else Path(label_raw)
        if check_files:
            if not image_path.exists():
                raise DataError(f"{path}:{lineno}: missing image {image_path}")
            if label_path is not None and not label_path.exists():
                raise DataError(f"{path}:{lineno}: missing label {label_path}")
        manifest.entries.append(ManifestEntry(image_path, label_path, split))
    return manifest


def load_pair(entry: ManifestEntry, band_scale=None):
    """Load one (image, mask) pair as float32/uint8 arrays with equal H, W."""
    image = load_multiband(entry.image_path, band_scale=band_scale)
    if entry.label_path is None:
        return image.data, None
    mask = read_mask_png(entry.label_path)
    if mask.shape != image.data.shape[:2]:
        raise PairingError(
            f"{entry.image_path}: image {image.data.shape[:2]} vs mask {mask.shape}"
        )
    return image.data, mask


def load_split(manifest: DatasetManifest, split: str) -> list:
    pairs = []
    for entry in manifest.split(split):
        image, mask = load_pair(entry, band_scale=manifest.band_scale)
        pairs.append((image, mask))
    return pairs


def dihedral_variants(image: np.ndarray, mask: np.ndarray) -> list:
    """The 8 rotation/flip variants of a pair, identity first.

    Variant i applies rot90 (i % 4 quarter turns) to the image and mask,
    then a horizontal flip when i >= 4. Both arrays get the identical index
    transform, so per-class pixel counts are preserved in every variant.
    """
    if image.shape[:2] != mask.shape[:2]:
        raise PairingError(f"image {image.shape[:2]} vs mask {mask.shape[:2]}")
    variants = []
    for i in range(8):
        img = np.rot90(image, k=i % 4, axes=(0, 1))
        msk = np.rot90(mask, k=i % 4, axes=(0, 1))
        if i >= 4:
            img = img[:, ::-1]
            msk = msk[:, ::-1]
        variants.append((np.ascontiguousarray(img), np.ascontiguousarray(msk)))
    return variants


def augment_pairs(pairs: list) -> list:
    """Expand (image, mask) pairs into their 8 dihedral variants each."""
    out = []
    for image, mask in pairs:
        out.extend(dihedral_variants(image, mask))
    return out


# Training targets: one channel per class, 1.0 where the pixel carries that
# label. Gap pixels encode to all-zeros and are excluded via the bool mask.
_TARGET_LUT = np.zeros((4, 3), dtype=np.float32)
_TARGET_LUT[SMOKE, 0] = 1.0
_TARGET_LUT[CLOUD, 1] = 1.0
_TARGET_LUT[CLEAR, 2] = 1.0


def encode_target(mask: np.ndarray):
    """Mask -> (HxWx3 float32 target, HxW bool labelled-pixel mask)."""
    mask = np.asarray(mask)
    return _TARGET_LUT[mask], mask != GAP
