"""
The whole batch pipeline in one sitting
=======================================

Creates a tiny survey corpus on disk, then drives every subcommand the
same way a shell script would: enhance, tile, split, export, evaluate.
Run it twice and the output bytes will not change.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from shoreseg.cli import main

root = Path(tempfile.mkdtemp(prefix="shoreseg_demo_"))
print("working in", root)

# ---- a corpus of two washed-out frames plus annotator output ----
rng = np.random.default_rng(5)
frames = []
for i in range(2):
    arr = rng.integers(80, 180, size=(96, 128, 3)).astype(np.uint8)
    path = root / f"frame{i}.png"
    Image.fromarray(arr).save(path)
    frames.append(str(path))

via = {
    f"frame{i}.png1": {
        "filename": f"frame{i}.png",
        "regions": [{
            "shape_attributes": {
                "name": "polygon",
                "all_points_x": [8, 38, 38, 8],
                "all_points_y": [8, 8, 38, 38],
            },
            "region_attributes": {"label": "Litter"},
        }],
    }
    for i in range(2)
}
via_path = root / "annotations_via.json"
via_path.write_text(json.dumps(via), encoding="utf-8")

# ---- enhance -> tile -> split -> export, all through the CLI ----
steps = [
    ["enhance", *frames, "--out", str(root / "enhanced"), "--audit"],
    ["tile", *[str(root / "enhanced" / f"frame{i}.png") for i in range(2)],
     "--via", str(via_path), "--out", str(root / "tiles"),
     "--tile-size", "64"],
]
for argv in steps:
    code = main(argv)
    print(f"$ shoreseg {argv[0]} ...  -> exit {code}")

tiles = sorted(str(p) for p in (root / "tiles").glob("*.png"))
print("tiles written:", len(tiles))

for argv in [
    ["split", *tiles, "--out", str(root / "manifest.csv"), "--seed", "7"],
    ["export", *tiles, "--via", str(root / "tiles" / "annotations.json"),
     "--format", "coco", "--out", str(root / "coco")],
]:
    code = main(argv)
    print(f"$ shoreseg {argv[0]} ...  -> exit {code}")

# ---- score the export against itself: a perfect detector ----
print()
main([
    "evaluate",
    "--coco-truth", str(root / "coco" / "instances_all.json"),
    "--coco-pred", str(root / "coco" / "instances_all.json"),
])
