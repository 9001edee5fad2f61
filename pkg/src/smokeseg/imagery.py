"""Six-band raster tiles and the binary container they travel in.

Container layout (all integers little-endian, independent of host byte order):

    offset  size  field
    0       4     magic ``b"MBR1"``
    4       4     uint32 height
    8       4     uint32 width
    12      4     uint32 channels
    16      4     uint32 dtype code (1 = float32)
    20      ...   row-major height*width*channels float32 payload, little-endian

Band order for model input is fixed: Blue, Green, Red, NIR, SWIR1, SWIR2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BandCountError, DataIntegrityError, RasterIoError

MAGIC = b"MBR1"
DTYPE_FLOAT32 = 1
HEADER = struct.Struct("<4sIIII")

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")
N_BANDS = len(BAND_NAMES)

# Red/green/blue band indices within the fixed band order, for quick-look RGB.
RGB_BAND_INDICES = (2, 1, 0)


@dataclass
class MultibandImage:
    """A normalized height x width x 6 tile.

    Values are reflectance-like, scaled into [0, 1]. ``source_id`` is an
    opaque identifier (usually the file stem) carried through to reports.
    """

    data: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != N_BANDS:
            raise BandCountError(
                f"expected HxWx{N_BANDS} data, got shape {self.data.shape}"
            )
        if not np.isfinite(self.data).all():
            raise DataIntegrityError(f"non-finite values in {self.source_id!r}")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise DataIntegrityError(
                f"values outside [0, 1] in {self.source_id!r}; normalize first"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def save_raster(path, array: np.ndarray) -> None:
    """Write an HxWxC float array to the binary container."""
    array = np.asarray(array)
    if array.ndim != 3:
        raise RasterIoError(f"raster payload must be HxWxC, got shape {array.shape}")
    h, w, c = array.shape
    payload = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, h, w, c, DTYPE_FLOAT32))
        fh.write(payload.tobytes())


def load_raster(path) -> np.ndarray:
    """Read the binary container back into an HxWxC float32 array."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(HEADER.size)
            if len(head) != HEADER.size:
                raise RasterIoError(f"{path}: truncated header")
            magic, h, w, c, dtype_code = HEADER.unpack(head)
            if magic != MAGIC:
                raise RasterIoError(f"{path}: bad magic {magic!r}")
            if dtype_code != DTYPE_FLOAT32:
                raise RasterIoError(f"{path}: unsupported dtype code {dtype_code}")
            payload = fh.read(h * w * c * 4)
    except OSError as exc:
        raise RasterIoError(f"{path}: {exc}") from exc
    if len(payload) != h * w * c * 4:
        raise RasterIoError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return data.astype(np.float32)


def normalize_bands(raw: np.ndarray, band_scale=None) -> np.ndarray:
    """Scale each band into [0, 1] by dividing by its scale value.

    ``band_scale`` is a per-band divisor sequence; when omitted, the per-band
    maximum of ``raw`` itself is used. Zero scales are treated as 1 so an
    all-zero band stays all-zero. The result is clipped to [0, 1].
    """
    raw = np.asarray(raw, dtype=np.float32)
    if band_scale is None:
        band_scale = raw.reshape(-1, raw.shape[2]).max(axis=0)
    scale = np.asarray(band_scale, dtype=np.float32).reshape(-1)
    if scale.size != raw.shape[2]:
        raise BandCountError(
            f"band_scale has {scale.size} entries for {raw.shape[2]} bands"
        )
    scale = np.where(scale == 0.0, 1.0, scale)
    return np.clip(raw / scale[None, None, :], 0.0, 1.0).astype(np.float32)


def load_multiband(path, band_scale=None) -> MultibandImage:
    """Load a 6-band tile from the container and normalize it.

    Raises BandCountError when the file does not declare exactly 6 channels,
    DataIntegrityError on non-finite payload values, RasterIoError on
    unreadable or malformed files.
    """
    raw = load_raster(path)
    if raw.shape[2] != N_BANDS:
        raise BandCountError(f"{path}: expected {N_BANDS} bands, found {raw.shape[2]}")
    if not np.isfinite(raw).all():
        raise DataIntegrityError(f"{path}: non-finite band values")
    data = normalize_bands(raw, band_scale)
    return MultibandImage(data=data, source_id=Path(path).stem)


def rgb_composite(image_data: np.ndarray) -> np.ndarray:
    """Quick-look HxWx3 uint8 built from the red/green/blue bands."""
    rgb = image_data[:, :, list(RGB_BAND_INDICES)]
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
