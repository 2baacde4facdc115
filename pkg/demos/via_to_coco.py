"""
From annotator export to train/test/val COCO files
==================================================

Parses a VGG Image Annotator JSON export, splits the corpus with a seeded
shuffle and largest-remainder apportionment, and emits COCO instance
documents per group.
"""

import json

from shoreseg.dataset import (
    Corpus,
    ImageRecord,
    export_coco_instances,
    parse_via,
    split,
)

# a miniature annotator export: three frames, polygon regions with a
# "label" attribute; the circle on frame2 is skipped (not a polygon)
via_doc = {
    f"frame{i}.png123": {
        "filename": f"frame{i}.png",
        "regions": [
            {
                "shape_attributes": {
                    "name": "polygon",
                    "all_points_x": [10, 40, 40, 10],
                    "all_points_y": [10 + i, 10 + i, 30 + i, 30 + i],
                },
                "region_attributes": {"label": "Litter"},
            }
        ],
    }
    for i in range(3)
}
via_doc["frame2.png123"]["regions"].append(
    {"shape_attributes": {"name": "circle", "cx": 5, "cy": 5, "r": 2},
     "region_attributes": {"label": "Algae"}}
)

regions, parse_report = parse_via(json.dumps(via_doc),
                                  label_set=("Litter", "Algae"))
print("regions parsed:", len(regions),
      "| shapes skipped:", parse_report.skipped_shapes)

# assemble the corpus and split it 55/35/10
images = [ImageRecord(f"frame{i}.png", f"frame{i}.png", 64, 64)
          for i in range(3)]
corpus = Corpus(images=images, regions=regions,
                label_set=("Litter", "Algae"))
assignment = split(corpus, fractions=(0.55, 0.35, 0.10), seed=3)
print("split sizes:", assignment.sizes())

# one COCO instances document per split group
for group in ("train", "test", "val"):
    ids = assignment.group(group)
    if not ids:
        continue
    doc = export_coco_instances(corpus, image_ids=ids)
    print(f"{group}: {len(doc['images'])} images, "
          f"{len(doc['annotations'])} annotations")

# each annotation carries the flattened polygon, bbox, and shoelace area
doc = export_coco_instances(corpus)
print()
print(json.dumps(doc["annotations"][0], indent=2))
