"""Rasterize polygon annotation documents into class masks.

The accepted JSON schema is the common annotation-tool layout: a top-level
``shapes`` list whose entries carry a class ``label`` and a ``points`` list of
[x, y] vertices (x = column, y = row, in pixel units). Pixels take the class
of the polygon covering their center; a pixel center on a polygon edge counts
as covered. When polygons overlap, the one listed later in the document wins.
Pixels covered by no polygon stay Gap.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError, LabelSchemaError
from .masks import GAP, NAME_TO_CODE


def load_annotation(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read annotation {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LabelSchemaError(f"{path}: not valid JSON ({exc})") from exc


def polygon_coverage(points, height: int, width: int) -> np.ndarray:
    """Boolean HxW grid of pixel centers inside or on the polygon boundary.

    Pixel (r, c) has center (x, y) = (c + 0.5, r + 0.5). Interior membership
    uses even-odd ray parity; the boundary test checks the exact collinearity
    cross product ``(x2-x1)*(y-y1) - (y2-y1)*(x-x1) == 0`` per edge.
    """
    pts = np.asarray(points, dtype=np.float64)
    covered = np.zeros((height, width), dtype=bool)
    if len(pts) < 3:
        return covered

    # Pixel centers outside the polygon bbox cannot be covered.
    min_x, min_y = pts.min(axis=0)
    max_x, max_y = pts.max(axis=0)
    r_lo = max(0, int(np.ceil(min_y - 0.5)))
    r_hi = min(height - 1, int(np.floor(max_y - 0.5)))
    c_lo = max(0, int(np.ceil(min_x - 0.5)))
    c_hi = min(width - 1, int(np.floor(max_x - 0.5)))
    if r_lo > r_hi or c_lo > c_hi:
        return covered

    px = np.arange(c_lo, c_hi + 1, dtype=np.float64) + 0.5
    py = np.arange(r_lo, r_hi + 1, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(px, py)

    parity = np.zeros(gx.shape, dtype=bool)
    on_edge = np.zeros(gx.shape, dtype=bool)
    closed = np.vstack([pts, pts[:1]])
    for (x1, y1), (x2, y2) in zip(closed[:-1], closed[1:]):
        if x1 == x2 and y1 == y2:
            continue
        cross = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        on_edge |= (
            (cross == 0.0)
            & (gx >= min(x1, x2))
            & (gx <= max(x1, x2))
            & (gy >= min(y1, y2))
            & (gy <= max(y1, y2))
        )
        crosses_scanline = (y1 > gy) != (y2 > gy)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at_scanline = x1 + (gy - y1) * (x2 - x1) / (y2 - y1)
        parity ^= crosses_scanline & (gx < x_at_scanline)

    covered[r_lo : r_hi + 1, c_lo : c_hi + 1] = parity | on_edge
    return covered


def _distinct_vertex_count(points) -> int:
    return len({(float(x), float(y)) for x, y in points})


def rasterize_labels(doc: dict, size: tuple) -> tuple:
    """Paint a document's polygons onto a fresh mask of the given (H, W).

    Returns ``(mask, warnings)``. Polygons are painted in document order, so
    a later polygon overwrites earlier ones where they overlap. A polygon
    with fewer than 3 distinct vertices is skipped and noted in ``warnings``;
    an unknown class name raises LabelSchemaError.
    """
    height, width = size
    mask = np.full((height, width), GAP, dtype=np.uint8)
    warnings = []
    for idx, shape in enumerate(doc.get("shapes", [])):
        label = shape.get("label")
        if label not in NAME_TO_CODE:
            raise LabelSchemaError(f"shape {idx}: unknown class name {label!r}")
        points = shape.get("points", [])
        if _distinct_vertex_count(points) < 3:
            warnings.append(f"shape {idx} ({label}): degenerate polygon skipped")
            continue
        covered = polygon_coverage(points, height, width)
        mask[covered] = NAME_TO_CODE[label]
    return mask, warnings


def rasterize_annotation_file(path, size=None) -> tuple:
    """Rasterize a JSON annotation file; size defaults to the declared one."""
    doc = load_annotation(path)
    if size is None:
        try:
            size = (int(doc["imageHeight"]), int(doc["imageWidth"]))
        except KeyError as exc:
            raise LabelSchemaError(
                f"{path}: no imageHeight/imageWidth and no explicit size"
            ) from exc
    return rasterize_labels(doc, size)
