"""
Tiling a large frame and remapping its annotations
==================================================

Plans tile grids under all three coverage policies for a full-size survey
frame, then clips two labeled polygons into per-tile children and prints
the lineage rows that tie each tile back to its source.
"""

import numpy as np

from shoreseg.dataset import AnnotatedRegion
from shoreseg.geometry import Polygon, polygon_area
from shoreseg.tiling import (
    lineage_rows,
    plan_tiles,
    remap_annotations,
    tile_name,
)

# the capture format: 5472x3648 frames, 600 px training tiles
WIDTH, HEIGHT, TILE = 5472, 3648, 600

for policy in ("drop-partial", "pad-to-cover", "overlap-to-cover"):
    plan = plan_tiles(WIDTH, HEIGHT, TILE, policy)
    print(f"{policy:17s} -> {len(plan):3d} tiles")

# two annotations: a small patch inside one tile, and a long strip that
# crosses a tile boundary and must be split
patch = AnnotatedRegion(
    region_id=1, image_ref="frame.jpg", class_label="Litter",
    polygon=Polygon(np.array([(100, 100), (220, 100), (220, 260),
                              (100, 260)], dtype=float)),
)
strip = AnnotatedRegion(
    region_id=2, image_ref="frame.jpg", class_label="Algae",
    polygon=Polygon(np.array([(400, 50), (900, 50), (900, 120),
                              (400, 120)], dtype=float)),
)

plan = plan_tiles(WIDTH, HEIGHT, TILE, "pad-to-cover")
children = remap_annotations([patch, strip], plan)

print()
print("region areas:", polygon_area(patch.polygon), polygon_area(strip.polygon))
for key in sorted(k for k, v in children.items() if v):
    for child in children[key]:
        name = tile_name("frame", *key)
        print(f"  tile {name}: region {child.region_id} "
              f"({child.class_label}) area {polygon_area(child.polygon):.1f}")

# lineage rows go into lineage.csv so every tile is traceable
print()
for row in lineage_rows(plan, "frame.jpg")[:3]:
    print(row)
