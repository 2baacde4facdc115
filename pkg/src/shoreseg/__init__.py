"""shoreseg: UAV beach-survey imagery preparation and segmentation scoring.

The package turns raw survey JPEGs into model-ready tiled datasets and
scores segmentation predictions:

- enhance: histogram-clipping auto contrast/brightness
- exif: flight metadata (GPS, exposure) from JPEG APP1 segments
- geometry: polygon clipping, area, translation, rasterization
- tiling: grid decomposition of frames with annotation remapping
- dataset: VIA ingestion, deterministic splits, COCO/panoptic exports
- metrics: mask IoU, instance AP/AR/PS/PL, panoptic PQ/SQ/RQ
- losses: composite training loss terms with analytic gradients
- cli: `shoreseg` command exposing the pipeline as subcommands
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    config,
    dataset,
    enhance,
    errors,
    exif,
    geometry,
    losses,
    metrics,
    raster,
    tiling,
)
