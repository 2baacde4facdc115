"""Command-line pipeline: survey images in, training artifacts out.

Subcommands mirror the processing order of a shoreline survey batch:

    inspect    read flight metadata from JPEG headers (JSON lines)
    enhance    auto contrast/brightness stretch with audit sidecars
    tile       cut frames into fixed-size tiles, remap annotations
    split      seeded train/test/val manifest
    export     COCO instance JSON or panoptic PNG ground truth
    evaluate   score predictions (instance AP/AR, panoptic PQ)
    loss-check finite-difference self-test of the loss gradients

Every subcommand is deterministic for fixed inputs and config, at any
parallelism degree: work fans out over a thread pool in input order and
results are written serially. Outputs are staged in a temporary directory
and committed by atomic rename only after the whole command succeeds.

Exit codes: 0 ok, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset, enhance, exif, losses, metrics, raster, tiling
from .config import CONFIG_ENV_VAR, PipelineConfig, load_config
from .errors import ShoresegError
from .geometry import PixelRect, rasterize

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code pinned to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ===================== plumbing =====================

def _parallel_map(fn, items, jobs: int):
    """Maps fn over items preserving input order; jobs<=1 runs inline."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _effective_jobs(config: PipelineConfig) -> int:
    return config.jobs if config.jobs > 0 else (os.cpu_count() or 1)


def _write_atomic(path, data) -> None:
    """Writes a single file via temp-and-rename; no partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, temp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as handle:
            handle.write(data)
        os.replace(temp, path)
    except BaseException:
        if os.path.exists(temp):
            os.unlink(temp)
        raise


class _StagedDir:
    """Builds a directory's files in a sibling temp dir; commits on success."""

    def __init__(self, target):
        self.target = Path(target)

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(
            dir=self.target.parent, prefix=f".{self.target.name}.stage."
        ))
        return self.staging

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.target.mkdir(parents=True, exist_ok=True)
                for item in sorted(self.staging.rglob("*")):
                    if item.is_file():
                        dest = self.target / item.relative_to(self.staging)
                        dest.parent.mkdir(parents=True, exist_ok=True)
                        os.replace(item, dest)
        finally:
            shutil.rmtree(self.staging, ignore_errors=True)
        return False


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_corpus(image_paths, via_path, label_set):
    """Reads image dimensions and VIA regions into a Corpus.

    Image ids are file basenames, matching VIA's filename field.
    """
    def record_of(path):
        image = raster.load_image(path)
        width, height = raster.image_size(image)
        name = Path(path).name
        return dataset.ImageRecord(image_id=name, file_name=name,
                                   width=width, height=height)

    images = [record_of(p) for p in image_paths]
    regions = []
    if via_path is not None:
        text = Path(via_path).read_text(encoding="utf-8")
        regions, _ = dataset.parse_via(text, label_set=label_set)
    return dataset.Corpus(images=images, regions=regions,
                          label_set=label_set)


# ===================== subcommands =====================

def cmd_inspect(args, config: PipelineConfig) -> int:
    def one(path: str) -> str:
        payload = {"file": path}
        payload.update(exif.parse_exif(Path(path).read_bytes()).to_json_dict())
        return json.dumps(payload, sort_keys=True)

    lines = _parallel_map(one, args.paths, _effective_jobs(config))
    text = "\n".join(lines) + "\n"
    if args.json_out:
        _write_atomic(args.json_out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_enhance(args, config: PipelineConfig) -> int:
    clip = config.clip_percent

    def one(path: str):
        image = raster.load_image(path)
        enhanced, stretch = enhance.auto_enhance(image, clip)
        return Path(path).name, enhanced, stretch

    results = _parallel_map(one, args.paths, _effective_jobs(config))
    with _StagedDir(args.out) as stage:
        for name, enhanced, stretch in results:
            raster.save_image(stage / name, enhanced)
            if args.audit:
                audit_name = f"{Path(name).stem}.audit.txt"
                (stage / audit_name).write_text(
                    enhance.audit_record(stretch, clip), encoding="utf-8"
                )
    return EXIT_OK


def cmd_tile(args, config: PipelineConfig) -> int:
    regions_by_image: dict = {}
    if args.via:
        text = Path(args.via).read_text(encoding="utf-8")
        regions, _ = dataset.parse_via(text, label_set=config.labels)
        for region in regions:
            regions_by_image.setdefault(region.image_ref, []).append(region)

    def one(path: str):
        image = raster.load_image(path)
        width, height = raster.image_size(image)
        plan = tiling.plan_tiles(width, height, config.tile_size,
                                 config.tile_policy)
        stem = Path(path).stem
        remapped = tiling.remap_annotations(
            regions_by_image.get(Path(path).name, []), plan
        )
        tile_files = []
        via_records = {}
        for tile in plan.tiles:
            name = tiling.tile_name(stem, tile.row, tile.col)
            tile_files.append(
                (name, raster.encode_image(
                    tiling.extract_tile(image, tile.rect), format="PNG"
                ))
            )
            via_records[name] = {
                "filename": name,
                "regions": [
                    {
                        "shape_attributes": {
                            "name": "polygon",
                            "all_points_x": [
                                float(v) for v in child.polygon.vertices[:, 0]
                            ],
                            "all_points_y": [
                                float(v) for v in child.polygon.vertices[:, 1]
                            ],
                        },
                        "region_attributes": {
                            "label": child.class_label,
                            "source_region_id": str(child.region_id),
                        },
                    }
                    for child in remapped[(tile.row, tile.col)]
                ],
            }
        return tile_files, via_records, tiling.lineage_rows(plan, path)

    results = _parallel_map(one, args.paths, _effective_jobs(config))
    with _StagedDir(args.out) as stage:
        all_records: dict = {}
        all_lineage = []
        for tile_files, via_records, lineage in results:
            for name, payload in tile_files:
                (stage / name).write_bytes(payload)
            all_records.update(via_records)
            all_lineage.extend(lineage)
        (stage / "annotations.json").write_text(
            _json_text(all_records), encoding="utf-8"
        )
        (stage / "lineage.csv").write_text(
            tiling.lineage_csv(all_lineage), encoding="utf-8"
        )
    return EXIT_OK


def cmd_split(args, config: PipelineConfig) -> int:
    corpus = _load_corpus(args.paths, None, config.labels)
    assignment = dataset.split(corpus, config.fractions, config.seed)
    _write_atomic(args.out, assignment.to_manifest_csv())
    sizes = assignment.sizes()
    for group in dataset.SPLIT_GROUPS:
        sys.stdout.write(f"{group}: {sizes[group]}\n")
    return EXIT_OK


def cmd_export(args, config: PipelineConfig) -> int:
    corpus = _load_corpus(args.paths, args.via, config.labels)

    if args.format == "coco":
        groups: dict = {}
        if args.manifest:
            text = Path(args.manifest).read_text(encoding="utf-8")
            for line in text.strip().split("\n")[1:]:
                image_id, _, group = line.rpartition(",")
                groups.setdefault(group, []).append(image_id)
            known = {img.image_id for img in corpus.images}
            unknown = sorted(
                i for ids in groups.values() for i in ids if i not in known
            )
            if unknown:
                raise ShoresegError(
                    f"manifest references unknown images: {unknown[:5]}"
                )
            docs = {
                group: dataset.export_coco_instances(corpus, ids)
                for group, ids in groups.items()
            }
        else:
            docs = {"all": dataset.export_coco_instances(corpus)}
        with _StagedDir(args.out) as stage:
            for group in sorted(docs):
                (stage / f"instances_{group}.json").write_text(
                    _json_text(docs[group]), encoding="utf-8"
                )
        return EXIT_OK

    # panoptic ground truth, one PNG + sidecar per image
    def one(record):
        panoptic, png, sidecar = dataset.export_panoptic_truth(
            corpus, record.image_id
        )
        del panoptic
        stem = Path(record.file_name).stem
        return stem, png, sidecar

    results = _parallel_map(one, corpus.images, _effective_jobs(config))
    with _StagedDir(args.out) as stage:
        for stem, png, sidecar in results:
            (stage / f"{stem}_panoptic.png").write_bytes(png)
            (stage / f"{stem}_panoptic.json").write_text(
                _json_text(sidecar), encoding="utf-8"
            )
    return EXIT_OK


def _instances_from_coco(path, score_default=None):
    """COCO instance JSON -> (truth list, prediction list or None)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    corpus = dataset.parse_coco_instances(doc)
    scores = {
        int(ann["id"]): float(ann.get("score", 1.0))
        for ann in doc.get("annotations", [])
    }
    truths = []
    preds = []
    for region in corpus.regions:
        record = corpus.image(region.image_ref)
        frame = PixelRect(0, 0, record.width, record.height)
        mask = rasterize(region.polygon, frame)
        truths.append(metrics.InstanceTruth(
            image_ref=region.image_ref,
            class_label=region.class_label,
            mask=mask,
        ))
        preds.append(metrics.InstancePrediction(
            image_ref=region.image_ref,
            class_label=region.class_label,
            score=scores[region.region_id],
            mask=mask,
        ))
    return truths, preds


def _panoptic_pairs(truth_dir, pred_dir):
    truth_dir = Path(truth_dir)
    pred_dir = Path(pred_dir)
    names = sorted(p.name for p in truth_dir.glob("*_panoptic.png"))
    if not names:
        raise ShoresegError(f"no *_panoptic.png files in {truth_dir}")
    pairs = []
    for name in names:
        sidecar_name = name[:-len(".png")] + ".json"
        pred_png = pred_dir / name
        pred_sidecar = pred_dir / sidecar_name
        if not pred_png.exists() or not pred_sidecar.exists():
            raise ShoresegError(f"missing prediction pair for {name}")
        truth = dataset.parse_panoptic_truth(
            (truth_dir / name).read_bytes(),
            (truth_dir / sidecar_name).read_text(encoding="utf-8"),
        )
        pred = dataset.parse_panoptic_truth(
            pred_png.read_bytes(),
            pred_sidecar.read_text(encoding="utf-8"),
        )
        pairs.append((pred, truth))
    return pairs


def cmd_evaluate(args, config: PipelineConfig) -> int:
    instance_result = None
    panoptic_result = None

    if args.coco_truth or args.coco_pred:
        if not (args.coco_truth and args.coco_pred):
            raise ShoresegError(
                "--coco-truth and --coco-pred must be given together"
            )
        truths, _ = _instances_from_coco(args.coco_truth)
        _, preds = _instances_from_coco(args.coco_pred)
        instance_result = metrics.evaluate_instances(
            preds, truths,
            iou_thresholds=config.iou_thresholds,
            size_bounds=(config.small_bound, config.large_bound),
        )

    if args.panoptic_truth or args.panoptic_pred:
        if not (args.panoptic_truth and args.panoptic_pred):
            raise ShoresegError(
                "--panoptic-truth and --panoptic-pred must be given together"
            )
        stats = metrics.PanopticStats()
        for pred, truth in _panoptic_pairs(args.panoptic_truth,
                                           args.panoptic_pred):
            stats.merge(metrics.panoptic_match_stats(pred, truth))
        panoptic_result = stats.result()

    if instance_result is None and panoptic_result is None:
        raise ShoresegError(
            "nothing to evaluate: give --coco-truth/--coco-pred and/or "
            "--panoptic-truth/--panoptic-pred"
        )
    report = metrics.MetricsReport.from_results(
        instances=instance_result, panoptic=panoptic_result
    )
    sys.stdout.write(report.render_table())
    if args.json_out:
        _write_atomic(args.json_out, _json_text(report.to_json_dict()))
    return EXIT_OK


def _finite_difference(fn, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        up = x0.copy()
        dn = x0.copy()
        up.flat[i] += step
        dn.flat[i] -= step
        grad.flat[i] = (fn(up) - fn(dn)) / (2.0 * step)
    return grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(analytic)),
                float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale


def cmd_loss_check(args, config: PipelineConfig) -> int:
    rng = np.random.default_rng(config.seed)
    iterations = args.iterations
    tolerance = 1e-4
    rows = []

    worst = 0.0
    for _ in range(iterations):
        logits = rng.normal(size=5) * 2.0
        label = int(rng.integers(0, 5))
        _, grad = losses.softmax_cross_entropy(logits, label)
        numeric = _finite_difference(
            lambda x: losses.softmax_cross_entropy(x, label)[0], logits
        )
        worst = max(worst, _relative_error(grad, numeric))
    rows.append(("softmax_cross_entropy", iterations, worst))

    worst = 0.0
    checked = 0
    while checked < iterations:
        pred = rng.normal(size=4) * 2.0
        target = rng.normal(size=4) * 2.0
        if np.any(np.abs(np.abs(pred - target) - 1.0) < 0.01):
            continue  # FD stencil would straddle the smooth-L1 kink
        _, grad = losses.smooth_l1(pred, target)
        numeric = _finite_difference(
            lambda x: losses.smooth_l1(x, target)[0], pred
        )
        worst = max(worst, _relative_error(grad, numeric))
        checked += 1
    rows.append(("smooth_l1", iterations, worst))

    worst = 0.0
    for _ in range(iterations):
        probs = rng.uniform(0.05, 0.95, size=(6, 6))
        truth = rng.random((6, 6)) < 0.5
        _, grad = losses.mask_bce(probs, truth)
        numeric = _finite_difference(
            lambda x: losses.mask_bce(x.reshape(6, 6), truth)[0],
            probs.reshape(-1),
        )
        worst = max(worst, _relative_error(grad.reshape(-1), numeric))
    rows.append(("mask_bce", iterations, worst))

    worst = 0.0
    for _ in range(iterations):
        logits = rng.normal(size=(4, 4, 3))
        truth = rng.integers(0, 3, size=(4, 4)).astype(np.uint8)
        truth[0, 0] = 255
        _, grad = losses.semantic_ce(logits, truth)
        numeric = _finite_difference(
            lambda x: losses.semantic_ce(x.reshape(4, 4, 3), truth)[0],
            logits.reshape(-1),
        )
        worst = max(worst, _relative_error(grad.reshape(-1), numeric))
    rows.append(("semantic_ce", iterations, worst))

    all_pass = True
    sys.stdout.write(
        f"{'loss':<24}{'instances':>10}{'max_rel_err':>14}{'status':>8}\n"
    )
    for name, count, error in rows:
        ok = error < tolerance
        all_pass = all_pass and ok
        status = "PASS" if ok else "FAIL"
        sys.stdout.write(f"{name:<24}{count:>10}{error:>14.3e}{status:>8}\n")
    return EXIT_OK if all_pass else EXIT_DATA


# ===================== argument wiring =====================

_OVERRIDE_FIELDS = (
    "clip_percent", "tile_size", "tile_policy", "seed", "jobs",
)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="shoreseg",
        description="Shoreline survey imagery pipeline.",
    )
    parser.add_argument(
        "--config",
        help=f"key=value config file (default: ${CONFIG_ENV_VAR})",
    )
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command", parser_class=_Parser)

    p = sub.add_parser("inspect", help="read flight metadata from JPEGs")
    p.add_argument("paths", nargs="+", metavar="image")
    p.add_argument("--json-out", help="write JSON lines here instead of stdout")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=cmd_inspect)

    p = sub.add_parser("enhance", help="auto contrast/brightness stretch")
    p.add_argument("paths", nargs="+", metavar="image")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clip-percent", type=float, dest="clip_percent")
    p.add_argument("--audit", action="store_true",
                   help="write a key=value sidecar per image")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=cmd_enhance)

    p = sub.add_parser("tile", help="cut frames into fixed-size tiles")
    p.add_argument("paths", nargs="+", metavar="image")
    p.add_argument("--via", help="VIA polygon JSON to remap onto tiles")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tile-size", type=int, dest="tile_size")
    p.add_argument("--policy", dest="tile_policy",
                   choices=tiling.POLICIES)
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=cmd_tile)

    p = sub.add_parser("split", help="seeded train/test/val manifest")
    p.add_argument("paths", nargs="+", metavar="image")
    p.add_argument("--out", required=True, help="manifest CSV path")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("export", help="write COCO or panoptic ground truth")
    p.add_argument("paths", nargs="+", metavar="image")
    p.add_argument("--via", required=True, help="VIA polygon JSON")
    p.add_argument("--manifest", help="split manifest CSV (coco format)")
    p.add_argument("--format", required=True, choices=("coco", "panoptic"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("evaluate", help="score predictions against truth")
    p.add_argument("--coco-truth", help="truth COCO instance JSON")
    p.add_argument("--coco-pred", help="predicted COCO instance JSON")
    p.add_argument("--panoptic-truth", help="truth panoptic directory")
    p.add_argument("--panoptic-pred", help="predicted panoptic directory")
    p.add_argument("--json-out", help="also write the report as JSON here")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("loss-check",
                       help="finite-difference check of loss gradients")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_loss_check)

    return parser


def _resolve_config(args) -> PipelineConfig:
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    config = load_config(path) if path else PipelineConfig()
    overrides = {
        name: getattr(args, name)
        for name in _OVERRIDE_FIELDS
        if getattr(args, name, None) is not None
    }
    return replace(config, **overrides) if overrides else config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _resolve_config(args)
    except (ValueError, OSError) as exc:
        print(f"shoreseg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args, config)
    except ShoresegError as exc:
        print(f"shoreseg: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"shoreseg: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
