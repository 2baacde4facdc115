"""Frame decomposition into fixed-size square tiles.

A TilePlan is a deterministic row-major grid over a source frame under one
of three edge policies:

    drop-partial:     only tiles fully inside the source; edge remainders
                      are discarded.
    pad-to-cover:     tiles step by tile_size from the origin; edge tiles
                      may extend past the source and read as zero there.
    overlap-to-cover: edge tiles are shifted inward so every tile lies
                      fully inside the source; neighbors then overlap.

Annotations remap per tile by clipping the polygon to the tile rectangle
and translating into tile-local coordinates; children keep their parent
region id so detections can be traced back to source frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import PurePath

import numpy as np

from .dataset import AnnotatedRegion
from .errors import InvalidTileSize, RectMismatch
from .geometry import SLIVER_AREA, PixelRect, clip_to_rect, translate
from .raster import validate_image

__all__ = [
    "POLICIES",
    "DEFAULT_POLICY",
    "Tile",
    "TilePlan",
    "plan_tiles",
    "extract_tile",
    "remap_annotations",
    "tile_name",
    "lineage_rows",
    "lineage_csv",
]

POLICIES = ("drop-partial", "pad-to-cover", "overlap-to-cover")
DEFAULT_POLICY = "pad-to-cover"

LINEAGE_COLUMNS = (
    "tile_file", "source_file", "row", "col", "x0", "y0", "tile_size",
    "policy",
)


@dataclass(frozen=True)
class Tile:
    """One grid cell: its row/col index and source-coordinate rectangle."""

    row: int
    col: int
    rect: PixelRect


@dataclass(frozen=True)
class TilePlan:
    """Deterministic tile grid over one source frame."""

    source_width: int
    source_height: int
    tile_size: int
    policy: str
    tiles: tuple

    def __len__(self) -> int:
        return len(self.tiles)


def plan_tiles(width: int, height: int, tile_size: int,
               policy: str = DEFAULT_POLICY) -> TilePlan:
    """Builds the tile grid for a width x height frame.

    Tiles are ordered row-major (row 0 left to right, then row 1, ...).

    Raises:
        InvalidTileSize: no tile fits fully inside the source, under the
            drop-partial and overlap-to-cover policies.
        ValueError: non-positive dimensions or unknown policy.
    """
    if width < 1 or height < 1 or tile_size < 1:
        raise ValueError(
            f"dimensions must be positive: {width}x{height}, "
            f"tile_size {tile_size}"
        )
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")

    if policy == "drop-partial":
        cols = width // tile_size
        rows = height // tile_size
        if cols == 0 or rows == 0:
            raise InvalidTileSize(
                f"tile_size {tile_size} exceeds the {width}x{height} source"
            )
        origin = lambda index, limit: index * tile_size
    elif policy == "pad-to-cover":
        cols = math.ceil(width / tile_size)
        rows = math.ceil(height / tile_size)
        origin = lambda index, limit: index * tile_size
    else:  # overlap-to-cover
        if tile_size > width or tile_size > height:
            raise InvalidTileSize(
                f"tile_size {tile_size} exceeds the {width}x{height} source"
            )
        cols = math.ceil(width / tile_size)
        rows = math.ceil(height / tile_size)
        origin = lambda index, limit: min(index * tile_size, limit - tile_size)

    tiles = []
    for row in range(rows):
        y0 = origin(row, height)
        for col in range(cols):
            x0 = origin(col, width)
            tiles.append(
                Tile(row=row, col=col,
                     rect=PixelRect(x0, y0, tile_size, tile_size))
            )
    return TilePlan(
        source_width=width,
        source_height=height,
        tile_size=tile_size,
        policy=policy,
        tiles=tuple(tiles),
    )


def extract_tile(image: np.ndarray, rect: PixelRect) -> np.ndarray:
    """Copies one tile out of a source image.

    Pixels outside the source (pad-to-cover edge tiles) read as zero;
    in-source pixels are copied bit-exactly.

    Raises:
        RectMismatch: the rectangle does not start inside the source.
    """
    validate_image(image)
    height, width = image.shape[:2]
    if rect.x0 < 0 or rect.y0 < 0 or rect.x0 >= width or rect.y0 >= height:
        raise RectMismatch(
            f"tile origin ({rect.x0}, {rect.y0}) outside the "
            f"{width}x{height} source"
        )
    shape = (rect.height, rect.width) + image.shape[2:]
    out = np.zeros(shape, dtype=np.uint8)
    x1 = min(rect.x1, width)
    y1 = min(rect.y1, height)
    out[: y1 - rect.y0, : x1 - rect.x0] = image[rect.y0:y1, rect.x0:x1]
    return out


def remap_annotations(regions, plan: TilePlan,
                      min_clip_area: float = SLIVER_AREA) -> dict:
    """Clips each region into every tile it touches.

    Args:
        regions: AnnotatedRegion list in source coordinates.
        plan: the tile grid.
        min_clip_area: post-clip fragments below this area are dropped;
            pass 0 to keep all fragments.

    Returns:
        {(row, col): [AnnotatedRegion, ...]} with one entry per tile in the
        plan (possibly empty); children keep the parent region_id,
        image_ref, and class_label, with polygons in tile-local
        coordinates.
    """
    out = {(tile.row, tile.col): [] for tile in plan.tiles}
    for tile in plan.tiles:
        children = out[(tile.row, tile.col)]
        for region in regions:
            clipped = clip_to_rect(region.polygon, tile.rect,
                                   min_area=min_clip_area)
            if clipped is None:
                continue
            children.append(
                AnnotatedRegion(
                    region_id=region.region_id,
                    image_ref=region.image_ref,
                    class_label=region.class_label,
                    polygon=translate(clipped, -tile.rect.x0, -tile.rect.y0),
                )
            )
    return out


def tile_name(stem: str, row: int, col: int) -> str:
    """Deterministic tile file name: <stem>_r<row>_c<col>.png."""
    return f"{stem}_r{row}_c{col}.png"


def lineage_rows(plan: TilePlan, source_file: str) -> list:
    """One lineage record per tile, mapping it back to its source frame."""
    stem = PurePath(source_file).stem
    rows = []
    for tile in plan.tiles:
        rows.append({
            "tile_file": tile_name(stem, tile.row, tile.col),
            "source_file": source_file,
            "row": tile.row,
            "col": tile.col,
            "x0": tile.rect.x0,
            "y0": tile.rect.y0,
            "tile_size": plan.tile_size,
            "policy": plan.policy,
        })
    return rows


def lineage_csv(rows) -> str:
    """Renders lineage records as CSV text with a fixed column order."""
    lines = [",".join(LINEAGE_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in LINEAGE_COLUMNS))
    return "\n".join(lines) + "\n"
