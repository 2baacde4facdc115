"""Corpus assembly: VIA polygon ingest, seeded splits, standard exports.

The corpus is a plain in-memory structure binding annotated polygon regions
to their source images. Ingest reads the VIA polygon dialect; exports write
COCO-style instance JSON and panoptic id maps (PNG plus JSON sidecar). The
train/test/val split shuffles image ids with a seeded PRNG and sizes the
groups by largest-remainder apportionment, so the same seed always yields
the same assignment and the group sizes match the fractions exactly
whenever the products come out whole.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import BadFractions, MalformedAnnotation
from .geometry import PixelRect, Polygon, polygon_area, rasterize
from .metrics import PanopticMap

__all__ = [
    "DEFAULT_LABEL_SET",
    "DEFAULT_FRACTIONS",
    "BACKGROUND_LABEL",
    "SPLIT_GROUPS",
    "ImageRecord",
    "AnnotatedRegion",
    "Corpus",
    "SplitAssignment",
    "ViaParseReport",
    "parse_via",
    "split",
    "export_coco_instances",
    "parse_coco_instances",
    "export_panoptic_truth",
    "parse_panoptic_truth",
    "encode_panoptic_png",
    "decode_panoptic_png",
]

DEFAULT_LABEL_SET = ("Litter", "Algae")
DEFAULT_FRACTIONS = (0.55, 0.35, 0.10)
BACKGROUND_LABEL = "sand"
SPLIT_GROUPS = ("train", "test", "val")

# region_attributes keys tried, in order, to find the class of a region
_CLASS_KEYS = ("label", "class", "type", "name")


# ===================== types =====================

@dataclass(frozen=True)
class ImageRecord:
    """One source image: identity, file name, and pixel dimensions."""

    image_id: str
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"image {self.image_id!r} has bad size "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True, eq=False)
class AnnotatedRegion:
    """One labeled polygon, in source-image coordinates."""

    region_id: int
    image_ref: str
    class_label: str
    polygon: Polygon


@dataclass
class Corpus:
    """Images, their regions, and the ordered class label set."""

    images: list
    regions: list
    label_set: tuple = DEFAULT_LABEL_SET

    def __post_init__(self):
        self.images = list(self.images)
        self.regions = list(self.regions)
        self.label_set = tuple(self.label_set)
        ids = [img.image_id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("image ids must be unique")
        known = set(ids)
        for region in self.regions:
            if region.image_ref not in known:
                raise ValueError(
                    f"region {region.region_id} references unknown image "
                    f"{region.image_ref!r}"
                )
            if region.class_label not in self.label_set:
                raise ValueError(
                    f"region {region.region_id} carries label "
                    f"{region.class_label!r} outside the label set"
                )
        region_ids = [r.region_id for r in self.regions]
        if len(set(region_ids)) != len(region_ids):
            raise ValueError("region ids must be unique")

    def image(self, image_id: str) -> ImageRecord:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise KeyError(image_id)

    def regions_for(self, image_id: str) -> list:
        return [r for r in self.regions if r.image_ref == image_id]


@dataclass(frozen=True)
class SplitAssignment:
    """Seeded partition of image ids into train/test/val groups."""

    seed: int
    fractions: tuple
    assignment: dict

    def group(self, name: str) -> list:
        return sorted(i for i, g in self.assignment.items() if g == name)

    def sizes(self) -> dict:
        return {g: len(self.group(g)) for g in SPLIT_GROUPS}

    def to_manifest_csv(self) -> str:
        lines = ["image_id,group"]
        for image_id in sorted(self.assignment):
            lines.append(f"{image_id},{self.assignment[image_id]}")
        return "\n".join(lines) + "\n"


@dataclass
class ViaParseReport:
    """Ingest tally: kept regions, skipped shapes, dropped labels."""

    regions: int = 0
    skipped_shapes: int = 0
    unknown_labels: dict = field(default_factory=dict)


# ===================== VIA ingest =====================

def parse_via(data, label_set=DEFAULT_LABEL_SET, start_region_id: int = 1):
    """Parses a VIA polygon export into annotated regions.

    Accepts both the bare export form (filename-keyed records) and full
    project files carrying ``_via_img_metadata``. Only polygon shapes are
    kept; other shapes and unknown class labels are counted in the report
    rather than raised.

    Args:
        data: JSON bytes or text.
        label_set: accepted class labels.
        start_region_id: id assigned to the first kept region.

    Returns:
        (regions, ViaParseReport) where regions is a list of
        AnnotatedRegion in file order with sequential ids.

    Raises:
        MalformedAnnotation: invalid JSON, mismatched x/y lists, fewer than
            3 distinct points, or a region without a class attribute; the
            message carries the file and region locus.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedAnnotation(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedAnnotation("top-level JSON value must be an object")
    records = doc.get("_via_img_metadata", doc)
    if not isinstance(records, dict):
        raise MalformedAnnotation("_via_img_metadata must be an object")

    report = ViaParseReport()
    regions = []
    next_id = start_region_id
    for key, record in records.items():
        if not isinstance(record, dict) or "regions" not in record:
            continue  # settings entries in project files
        filename = record.get("filename", key)
        raw_regions = record["regions"]
        if isinstance(raw_regions, dict):
            raw_regions = [
                raw_regions[k]
                for k in sorted(raw_regions, key=lambda s: (len(s), s))
            ]
        for index, raw in enumerate(raw_regions):
            locus = f"{filename} region {index}"
            shape = raw.get("shape_attributes", {})
            if shape.get("name") != "polygon":
                report.skipped_shapes += 1
                continue
            xs = shape.get("all_points_x")
            ys = shape.get("all_points_y")
            if not isinstance(xs, list) or not isinstance(ys, list):
                raise MalformedAnnotation(f"{locus}: missing point lists")
            if len(xs) != len(ys):
                raise MalformedAnnotation(
                    f"{locus}: {len(xs)} x values vs {len(ys)} y values"
                )
            label = _region_class(raw.get("region_attributes", {}), locus)
            if label not in label_set:
                report.unknown_labels[label] = (
                    report.unknown_labels.get(label, 0) + 1
                )
                continue
            points = _clean_vertices(list(zip(xs, ys)))
            if len(points) < 3:
                raise MalformedAnnotation(
                    f"{locus}: fewer than 3 distinct points"
                )
            regions.append(
                AnnotatedRegion(
                    region_id=next_id,
                    image_ref=filename,
                    class_label=label,
                    polygon=Polygon(np.array(points, dtype=np.float64)),
                )
            )
            report.regions += 1
            next_id += 1
    return regions, report


def _region_class(attributes: dict, locus: str) -> str:
    for key in _CLASS_KEYS:
        value = attributes.get(key)
        if isinstance(value, str) and value:
            return value
    strings = [v for v in attributes.values() if isinstance(v, str) and v]
    if len(strings) == 1:
        return strings[0]
    raise MalformedAnnotation(f"{locus}: no class attribute found")


def _clean_vertices(points):
    """Drops consecutive duplicates and a duplicated closing vertex."""
    cleaned = []
    for x, y in points:
        vertex = (float(x), float(y))
        if not cleaned or cleaned[-1] != vertex:
            cleaned.append(vertex)
    while len(cleaned) > 1 and cleaned[0] == cleaned[-1]:
        cleaned.pop()
    return cleaned


# ===================== splitting =====================

def split(corpus: Corpus, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitAssignment:
    """Partitions corpus images into train/test/val.

    Image ids are sorted, shuffled by random.Random(seed), and cut into
    groups sized by largest-remainder apportionment of the fractions
    (remainder ties broken in train, test, val order).

    Raises:
        BadFractions: wrong count, negative entries, or sum not 1.
        ValueError: the corpus holds no images.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLIT_GROUPS):
        raise BadFractions(
            f"expected {len(SPLIT_GROUPS)} fractions, got {len(fractions)}"
        )
    if any(f < 0 for f in fractions):
        raise BadFractions(f"fractions must be non-negative: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions sum to {sum(fractions)}, not 1")
    ids = sorted(img.image_id for img in corpus.images)
    if not ids:
        raise ValueError("cannot split an empty corpus")

    rng = random.Random(seed)
    rng.shuffle(ids)

    total = len(ids)
    quotas = [f * total for f in fractions]
    sizes = [int(q) for q in quotas]
    leftover = total - sum(sizes)
    by_remainder = sorted(
        range(len(SPLIT_GROUPS)), key=lambda g: (-(quotas[g] - sizes[g]), g)
    )
    for g in by_remainder[:leftover]:
        sizes[g] += 1

    assignment = {}
    cursor = 0
    for group, size in zip(SPLIT_GROUPS, sizes):
        for image_id in ids[cursor:cursor + size]:
            assignment[image_id] = group
        cursor += size
    return SplitAssignment(seed=seed, fractions=fractions, assignment=assignment)


# ===================== COCO instances =====================

def export_coco_instances(corpus: Corpus, image_ids=None) -> dict:
    """Builds a COCO-style instance dict for a subset of the corpus.

    Categories take 1-based ids in label_set order; segmentation is the
    flat [x0, y0, x1, y1, ...] vertex list; bbox is [x, y, w, h] from the
    polygon's bounding box; area comes from the shoelace formula.
    """
    if image_ids is None:
        image_ids = [img.image_id for img in corpus.images]
    chosen = sorted(image_ids)
    numbering = {image_id: k + 1 for k, image_id in enumerate(chosen)}

    images = []
    for image_id in chosen:
        record = corpus.image(image_id)
        images.append({
            "id": numbering[image_id],
            "file_name": record.file_name,
            "width": record.width,
            "height": record.height,
        })
    categories = [
        {"id": k + 1, "name": label}
        for k, label in enumerate(corpus.label_set)
    ]
    category_ids = {label: k + 1 for k, label in enumerate(corpus.label_set)}

    annotations = []
    for region in corpus.regions:
        if region.image_ref not in numbering:
            continue
        vertices = region.polygon.vertices
        xs = vertices[:, 0]
        ys = vertices[:, 1]
        flat = [float(v) for pair in vertices for v in pair]
        annotations.append({
            "id": region.region_id,
            "image_id": numbering[region.image_ref],
            "category_id": category_ids[region.class_label],
            "segmentation": [flat],
            "bbox": [
                float(xs.min()), float(ys.min()),
                float(xs.max() - xs.min()), float(ys.max() - ys.min()),
            ],
            "area": polygon_area(region.polygon),
            "iscrowd": 0,
        })
    return {"images": images, "categories": categories,
            "annotations": annotations}


def parse_coco_instances(doc) -> Corpus:
    """Rebuilds a corpus from a COCO-style instance dict or JSON bytes.

    The file_name doubles as the image id; bbox and area fields are
    ignored in favor of the polygon itself.
    """
    if isinstance(doc, (bytes, str)):
        doc = json.loads(doc)
    categories = sorted(doc.get("categories", []), key=lambda c: c["id"])
    label_set = tuple(c["name"] for c in categories)
    label_of = {c["id"]: c["name"] for c in categories}

    images = []
    ref_of = {}
    for entry in doc.get("images", []):
        record = ImageRecord(
            image_id=entry["file_name"],
            file_name=entry["file_name"],
            width=int(entry["width"]),
            height=int(entry["height"]),
        )
        images.append(record)
        ref_of[entry["id"]] = record.image_id

    regions = []
    for entry in doc.get("annotations", []):
        flat = entry["segmentation"][0]
        points = np.array(flat, dtype=np.float64).reshape(-1, 2)
        regions.append(
            AnnotatedRegion(
                region_id=int(entry["id"]),
                image_ref=ref_of[entry["image_id"]],
                class_label=label_of[entry["category_id"]],
                polygon=Polygon(points),
            )
        )
    return Corpus(images=images, regions=regions, label_set=label_set)


# ===================== panoptic truth =====================

def export_panoptic_truth(corpus: Corpus, image_id: str):
    """Rasterizes one image's regions into panoptic ground truth.

    Regions are painted in ascending region_id order, so a later region
    overwrites earlier ones on overlap. Uncovered pixels keep the reserved
    background id 0.

    Returns:
        (PanopticMap, png_bytes, sidecar_dict). The PNG encodes each
        segment id as R + 256*G + 256^2*B; the sidecar lists the id,
        class, and per-class instance index of every painted segment.
    """
    record = corpus.image(image_id)
    frame = PixelRect(0, 0, record.width, record.height)
    ids = np.zeros((record.height, record.width), dtype=np.int32)
    table = {0: (BACKGROUND_LABEL, False)}

    segments = []
    instance_counters: dict = {}
    for region in sorted(corpus.regions_for(image_id),
                         key=lambda r: r.region_id):
        mask = rasterize(region.polygon, frame)
        ids[mask] = region.region_id
        table[region.region_id] = (region.class_label, True)
        index = instance_counters.get(region.class_label, 0) + 1
        instance_counters[region.class_label] = index
        segments.append({
            "id": region.region_id,
            "class": region.class_label,
            "instance": index,
        })

    panoptic = PanopticMap(ids, table)
    sidecar = {
        "image_id": image_id,
        "background": {"id": 0, "class": BACKGROUND_LABEL},
        "segments": segments,
    }
    return panoptic, encode_panoptic_png(ids), sidecar


def parse_panoptic_truth(png_bytes: bytes, sidecar) -> PanopticMap:
    """Rebuilds a PanopticMap from its PNG and sidecar forms."""
    if isinstance(sidecar, (bytes, str)):
        sidecar = json.loads(sidecar)
    ids = decode_panoptic_png(png_bytes)
    background = sidecar.get("background", {"id": 0, "class": BACKGROUND_LABEL})
    table = {int(background["id"]): (background["class"], False)}
    for entry in sidecar.get("segments", []):
        table[int(entry["id"])] = (entry["class"], True)
    return PanopticMap(ids, table)


def encode_panoptic_png(ids: np.ndarray) -> bytes:
    """Packs segment ids into RGB PNG bytes as id = R + 256*G + 256^2*B."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ValueError("segment id array must be 2-d")
    if ids.min() < 0 or ids.max() >= 256 ** 3:
        raise ValueError("segment ids must be in [0, 2^24)")
    flat = ids.astype(np.int64)
    rgb = np.stack(
        [flat % 256, (flat // 256) % 256, flat // (256 * 256)],
        axis=2,
    ).astype(np.uint8)
    return raster.encode_image(rgb, format="PNG")


def decode_panoptic_png(data: bytes) -> np.ndarray:
    """Inverts encode_panoptic_png back to an int32 id array."""
    rgb = raster.decode_image(data)
    if rgb.ndim != 3:
        raise ValueError("panoptic PNG must decode to RGB")
    flat = rgb.astype(np.int64)
    ids = flat[:, :, 0] + 256 * flat[:, :, 1] + 256 * 256 * flat[:, :, 2]
    return ids.astype(np.int32)
