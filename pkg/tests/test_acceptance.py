"""Top-level acceptance checks, one per pipeline guarantee.

Run with -s to see one "PASS <name> (<seconds>)" line per check. Elapsed
times are reported for visibility, not enforced, so slow machines do not
flip results.
"""

import math
import random
import time

import numpy as np
import pytest

from shoreseg.cli import EXIT_OK
from shoreseg.dataset import Corpus, ImageRecord, split
from shoreseg.enhance import auto_enhance, fit_stretch
from shoreseg.errors import MalformedExif, NotJpeg
from shoreseg.exif import parse_exif
from shoreseg.geometry import Polygon, polygon_area
from shoreseg.losses import (
    LossWeights,
    mask_bce,
    semantic_ce,
    smooth_l1,
    softmax_cross_entropy,
    total_loss,
)
from shoreseg.metrics import (
    InstancePrediction,
    InstanceTruth,
    PanopticMap,
    evaluate_instances,
    evaluate_panoptic,
    panoptic_match_stats,
)
from shoreseg.dataset import AnnotatedRegion
from shoreseg.tiling import extract_tile, plan_tiles, remap_annotations

from exif_builder import flight_jpeg
from oracles import (
    ap_oracle,
    central_difference,
    optimal_panoptic_matching,
    relative_gradient_error,
)
from test_config_cli import run_pipeline
from test_metrics import blob, random_scene


def report(label: str, started: float) -> None:
    print(f"PASS {label} ({time.perf_counter() - started:.2f}s)")


class TestAcceptance:
    def test_stretch_fit_hits_targets_within_one_ulp(self):
        started = time.perf_counter()
        rng = random.Random(101)
        for _ in range(1000):
            mn = rng.randint(0, 254)
            mx = rng.randint(mn + 1, 255)
            s = fit_stretch(mn, mx)
            lo = s.alpha * mn + s.beta
            hi = s.alpha * mx + s.beta
            # 1 ulp at the scale of the evaluated product alpha*bound;
            # exhaustive over all integer pairs the ratio never exceeds 1
            assert abs(lo) <= np.spacing(np.float64(abs(s.alpha * mn)))
            assert abs(hi - 255.0) <= np.spacing(np.float64(abs(s.alpha * mx)))
        s = fit_stretch(50, 150)
        assert s.alpha == 255.0 / 100.0 == 2.55
        assert s.beta == -(50 * (255.0 / 100.0))
        assert abs(s.beta - (-127.5)) <= np.spacing(np.float64(127.5))
        report("stretch fit targets", started)

    def test_enhancement_idempotent_at_zero_clip(self):
        started = time.perf_counter()
        rng = np.random.default_rng(102)
        for _ in range(100):
            h = int(rng.integers(16, 64))
            w = int(rng.integers(16, 64))
            lo = int(rng.integers(40, 110))
            hi = int(rng.integers(lo + 20, lo + 90))
            image = rng.integers(lo, hi + 1, size=(h, w)).astype(np.uint8)
            enhanced, _ = auto_enhance(image, clip_percent=0.0)
            _, second = auto_enhance(enhanced, clip_percent=0.0)
            assert 0.992 <= second.alpha <= 1.008
            assert abs(second.beta) <= 2.0
        report("enhancement idempotence", started)

    def test_tiling_conserves_area_and_reassembles(self):
        started = time.perf_counter()
        rng = np.random.default_rng(103)
        for _ in range(200):
            w = int(rng.integers(20, 120))
            h = int(rng.integers(20, 120))
            ts = int(rng.integers(4, min(w, h, 32) + 1))

            regions = []
            for rid in range(1, int(rng.integers(2, 5))):
                if rng.random() < 0.5:
                    x0 = rng.uniform(0, w - 3)
                    y0 = rng.uniform(0, h - 3)
                    x1 = rng.uniform(x0 + 1, min(w, x0 + 25))
                    y1 = rng.uniform(y0 + 1, min(h, y0 + 25))
                    verts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
                else:
                    while True:
                        verts = [
                            (rng.uniform(0, w), rng.uniform(0, h))
                            for _ in range(3)
                        ]
                        tri = np.array(verts)
                        x, y = tri[:, 0], tri[:, 1]
                        area2 = abs(
                            (x[1] - x[0]) * (y[2] - y[0])
                            - (x[2] - x[0]) * (y[1] - y[0])
                        )
                        if area2 > 1.0:
                            break
                regions.append(
                    AnnotatedRegion(rid, "frame.png", "Litter",
                                    Polygon(np.array(verts)))
                )

            # pad-to-cover tiles partition the frame, so clipped pieces of
            # each region must sum back to its area
            plan = plan_tiles(w, h, ts, "pad-to-cover")
            remapped = remap_annotations(regions, plan, min_clip_area=0.0)
            piece_area: dict = {r.region_id: 0.0 for r in regions}
            for children in remapped.values():
                for child in children:
                    piece_area[child.region_id] += polygon_area(child.polygon)
            for region in regions:
                original = polygon_area(region.polygon)
                assert piece_area[region.region_id] == pytest.approx(
                    original, rel=1e-6
                )

            # drop-partial tiles paste back bit-identically onto the crop
            image = rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)
            drop = plan_tiles(w, h, ts, "drop-partial")
            rows, cols = h // ts, w // ts
            canvas = np.zeros((rows * ts, cols * ts, 3), dtype=np.uint8)
            for tile in drop.tiles:
                canvas[tile.rect.y0:tile.rect.y1,
                       tile.rect.x0:tile.rect.x1] = extract_tile(
                           image, tile.rect)
            assert np.array_equal(canvas, image[:rows * ts, :cols * ts])
        report("tiling conservation", started)

    def test_split_sizes_exact_and_seed_deterministic(self):
        started = time.perf_counter()
        images = [
            ImageRecord(f"img{i:04d}.png", f"img{i:04d}.png", 64, 64)
            for i in range(1500)
        ]
        corpus = Corpus(images=images, regions=[],
                        label_set=("Litter", "Algae"))
        first = split(corpus, fractions=(0.55, 0.35, 0.10), seed=7)
        assert first.sizes() == {"train": 825, "test": 525, "val": 150}
        again = split(corpus, fractions=(0.55, 0.35, 0.10), seed=7)
        assert again.assignment == first.assignment
        report("split exactness", started)

    def test_panoptic_matching_equals_exhaustive_oracle(self):
        started = time.perf_counter()
        from test_metrics import (
            candidate_pairs,
            panoptic_pair_fixture,
            random_panoptic_map,
        )

        rng = np.random.default_rng(105)
        labels = ["Litter", "Algae"]
        for _ in range(60):
            shape = (int(rng.integers(8, 20)), int(rng.integers(8, 20)))
            truth = random_panoptic_map(rng, shape, labels)
            pred = random_panoptic_map(rng, shape, labels)
            stats = panoptic_match_stats(pred, truth)
            optimal = optimal_panoptic_matching(candidate_pairs(pred, truth))
            assert stats.tp == len(optimal)
            assert stats.iou_sum == pytest.approx(
                sum(iou for _, _, iou in optimal), abs=1e-12
            )
            result = evaluate_panoptic(pred, truth)
            assert abs(result.pq - result.sq * result.rq) <= 1e-9

        pred, truth = panoptic_pair_fixture()
        result = evaluate_panoptic(pred, truth)
        assert result.pq == pytest.approx(0.4, abs=1e-12)
        assert result.sq == pytest.approx(0.8, abs=1e-12)
        assert result.rq == pytest.approx(0.5, abs=1e-12)
        report("panoptic oracle equivalence", started)

    def test_instance_ap_equals_brute_force_oracle(self):
        started = time.perf_counter()
        rng = np.random.default_rng(106)
        thresholds = (0.5, 0.6, 0.75)
        for _ in range(50):
            preds, truths = random_scene(rng)
            result = evaluate_instances(preds, truths,
                                        iou_thresholds=thresholds)
            expected_ap, expected_ar = ap_oracle(
                [(p.image_ref, p.class_label, p.score, p.mask)
                 for p in preds],
                [(t.image_ref, t.class_label, t.mask) for t in truths],
                thresholds,
            )
            assert result.ap == pytest.approx(expected_ap, abs=1e-9)
            assert result.ar == pytest.approx(expected_ar, abs=1e-9)

            # any order-preserving score map leaves the ranking, and with
            # it every metric, exactly unchanged
            rescaled = [
                InstancePrediction(p.image_ref, p.class_label,
                                   0.05 + 0.9 * p.score, p.mask)
                for p in preds
            ]
            redone = evaluate_instances(rescaled, truths,
                                        iou_thresholds=thresholds)
            assert redone.ap == result.ap
            assert redone.ar == result.ar
        report("instance-ap oracle equivalence", started)

    def test_loss_gradients_match_finite_differences(self):
        started = time.perf_counter()
        rng = np.random.default_rng(107)

        for _ in range(100):
            k = int(rng.integers(2, 9))
            logits = rng.normal(size=k) * 2.0
            label = int(rng.integers(0, k))
            _, grad = softmax_cross_entropy(logits, label)
            numeric = central_difference(
                lambda x: softmax_cross_entropy(np.array(x), label)[0],
                logits.tolist(), step=1e-5,
            )
            assert relative_gradient_error(grad.tolist(), numeric) < 1e-4

        checked = 0
        while checked < 100:
            n = int(rng.integers(2, 9))
            pred = rng.normal(size=n) * 2.0
            target = rng.normal(size=n) * 2.0
            # the |difference| = 1 kink is not differentiable; step over it
            if np.any(np.abs(np.abs(pred - target) - 1.0) < 0.01):
                continue
            _, grad = smooth_l1(pred, target)
            numeric = central_difference(
                lambda x: smooth_l1(np.array(x), target)[0],
                pred.tolist(), step=1e-5,
            )
            assert relative_gradient_error(grad.tolist(), numeric) < 1e-4
            checked += 1

        for _ in range(100):
            probs = rng.uniform(0.05, 0.95, size=(6, 7))
            truth = rng.random((6, 7)) < 0.5
            _, grad = mask_bce(probs, truth)
            numeric = central_difference(
                lambda x: mask_bce(np.array(x).reshape(6, 7), truth)[0],
                probs.reshape(-1).tolist(), step=1e-5,
            )
            assert relative_gradient_error(
                grad.reshape(-1).tolist(), numeric
            ) < 1e-4

        for _ in range(100):
            k = int(rng.integers(2, 6))
            logits = rng.normal(size=(3, 4, k)) * 2.0
            truth = rng.integers(0, k, size=(3, 4)).astype(np.uint8)
            truth[0, 0] = 255  # one ignored pixel
            _, grad = semantic_ce(logits, truth)
            numeric = central_difference(
                lambda x: semantic_ce(np.array(x).reshape(3, 4, k), truth)[0],
                logits.reshape(-1).tolist(), step=1e-5,
            )
            assert relative_gradient_error(
                grad.reshape(-1).tolist(), numeric
            ) < 1e-4

        for k in (2, 5, 8):
            value, _ = softmax_cross_entropy(np.zeros(k), 0)
            assert abs(value - math.log(k)) <= 1e-12

        # gating: weights in {0, 1} switch component groups on and off
        assert total_loss(3.0, 2.0, 1.0, 4.0,
                          LossWeights(1.0, 0.0)).total == 6.0
        assert total_loss(3.0, 2.0, 1.0, 4.0,
                          LossWeights(0.0, 1.0)).total == 4.0
        assert total_loss(3.0, 2.0, 1.0, 4.0,
                          LossWeights(1.0, 1.0)).total == 10.0
        assert total_loss(3.0, 2.0, 1.0, 4.0,
                          LossWeights(0.0, 0.0)).total == 0.0
        report("loss gradient checks", started)

    def test_exif_fixture_decodes_and_survives_fuzz(self):
        started = time.perf_counter()
        meta = parse_exif(flight_jpeg())
        assert meta.latitude == pytest.approx(14.8, abs=1e-12)
        assert meta.longitude == pytest.approx(-17.3, abs=1e-12)
        assert meta.altitude == pytest.approx(10.0, abs=1e-12)

        base = bytearray(flight_jpeg())
        rng = random.Random(108)
        for _ in range(10_000):
            mutated = bytearray(base)
            for _ in range(rng.randint(1, 4)):
                mutated[rng.randrange(len(mutated))] = rng.randrange(256)
            try:
                got = parse_exif(bytes(mutated))
            except (NotJpeg, MalformedExif):
                continue
            if got.latitude is not None:
                assert -90.0 <= got.latitude <= 90.0
            if got.longitude is not None:
                assert -180.0 <= got.longitude <= 180.0
        report("flight metadata robustness", started)

    def test_pipeline_outputs_deterministic(self, tmp_path, capsys,
                                            monkeypatch):
        started = time.perf_counter()
        snapshots = []
        for run, jobs in (("j1a", 1), ("j1b", 1), ("j4a", 4), ("j4b", 4)):
            workdir = tmp_path / run
            workdir.mkdir()
            snapshots.append(run_pipeline(workdir, monkeypatch, jobs))
            capsys.readouterr()
        for other in snapshots[1:]:
            assert other == snapshots[0]
        report("end-to-end determinism", started)
