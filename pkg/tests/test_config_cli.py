"""Config round-trip and CLI behavior tests."""

import io
import json
import struct
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from shoreseg.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from shoreseg.config import (
    PipelineConfig,
    load_config,
    parse_config,
    render_config,
    save_config,
)

from exif_builder import flight_jpeg, flight_tiff


class TestPipelineConfig:
    def test_defaults_valid(self):
        config = PipelineConfig()
        assert config.fractions == (0.55, 0.35, 0.10)
        assert config.tile_policy == "pad-to-cover"

    def test_round_trip_lossless(self):
        config = replace(
            PipelineConfig(),
            clip_percent=0.017,
            tile_size=300,
            tile_policy="overlap-to-cover",
            train_fraction=0.6,
            test_fraction=0.3,
            val_fraction=0.1,
            seed=99,
            labels=("Litter", "Algae", "Foam"),
            iou_thresholds=(0.5, 0.75),
            jobs=3,
        )
        assert parse_config(render_config(config)) == config

    def test_file_round_trip(self, tmp_path):
        config = replace(PipelineConfig(), seed=5, clip_percent=0.25)
        path = tmp_path / "pipeline.cfg"
        save_config(path, config)
        assert load_config(path) == config

    def test_comments_and_blanks_ignored(self):
        config = parse_config("# survey defaults\n\nseed=4\n  \nclip_percent=0.02\n")
        assert config.seed == 4
        assert config.clip_percent == 0.02

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            parse_config("tile_sise=600\n")

    def test_malformed_line(self):
        with pytest.raises(ValueError):
            parse_config("just words\n")

    def test_field_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(clip_percent=1.5)
        with pytest.raises(ValueError):
            PipelineConfig(tile_policy="shingle")
        with pytest.raises(ValueError):
            PipelineConfig(train_fraction=0.9)  # fractions sum != 1
        with pytest.raises(ValueError):
            PipelineConfig(labels=())
        with pytest.raises(ValueError):
            PipelineConfig(small_bound=96, large_bound=32)
        with pytest.raises(ValueError):
            PipelineConfig(jobs=-1)


def write_frames(root: Path, count=2, size=(48, 64), seed=0):
    """Low-contrast PNG frames named frame<i>.png."""
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        arr = rng.integers(90, 170, size=size + (3,)).astype(np.uint8)
        path = root / f"frame{i}.png"
        Image.fromarray(arr).save(path)
        paths.append(str(path))
    return paths


def write_flight_frames(root: Path, count=3, size=(48, 64), seed=0):
    """JPEG frames with the flight EXIF block, named frame<i>.jpg."""
    rng = np.random.default_rng(seed)
    payload = b"Exif\x00\x00" + flight_tiff()
    app1 = b"\xff\xe1" + struct.pack(">H", len(payload) + 2) + payload
    paths = []
    for i in range(count):
        arr = rng.integers(90, 170, size=size + (3,)).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, "JPEG")
        body = buf.getvalue()
        path = root / f"frame{i}.jpg"
        path.write_bytes(body[:2] + app1 + body[2:])
        paths.append(str(path))
    return paths


def square(x0, y0, side, label):
    return {
        "shape_attributes": {
            "name": "polygon",
            "all_points_x": [x0, x0 + side, x0 + side, x0],
            "all_points_y": [y0, y0, y0 + side, y0 + side],
        },
        "region_attributes": {"label": label},
    }


def write_via(path: Path, count=2, suffix="png"):
    doc = {}
    for i in range(count):
        name = f"frame{i}.{suffix}"
        doc[f"{name}1"] = {
            "filename": name,
            "regions": [
                square(4 + i, 6, 10, "Litter"),
                square(30, 20, 12, "Algae"),
            ],
        }
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


class TestCliExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == EXIT_USAGE
        capsys.readouterr()

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["polish"]) == EXIT_USAGE
        capsys.readouterr()

    def test_missing_required_flag_is_usage_error(self, tmp_path, capsys):
        paths = write_frames(tmp_path, count=1)
        assert main(["enhance", paths[0]]) == EXIT_USAGE
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        capsys.readouterr()

    def test_enhance_constant_image_is_data_error(self, tmp_path, capsys):
        flat = tmp_path / "flat.png"
        Image.fromarray(np.full((16, 16), 128, dtype=np.uint8)).save(flat)
        code = main(["enhance", str(flat), "--out", str(tmp_path / "out")])
        assert code == EXIT_DATA
        assert "shoreseg: error:" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()  # nothing partial

    def test_inspect_non_jpeg_is_data_error(self, tmp_path, capsys):
        paths = write_frames(tmp_path, count=1)  # PNG, not JPEG
        assert main(["inspect", paths[0]]) == EXIT_DATA
        capsys.readouterr()

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        assert main(["inspect", str(tmp_path / "nope.jpg")]) == EXIT_DATA
        capsys.readouterr()

    def test_bad_config_file_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("tile_size=zero\n", encoding="utf-8")
        paths = write_frames(tmp_path, count=1)
        code = main(["--config", str(bad), "inspect", paths[0]])
        assert code == EXIT_USAGE
        capsys.readouterr()


class TestCliCommands:
    def test_inspect_json_lines(self, tmp_path, capsys):
        jpeg = tmp_path / "flight.jpg"
        jpeg.write_bytes(flight_jpeg())
        assert main(["inspect", str(jpeg)]) == EXIT_OK
        out = capsys.readouterr().out.strip().split("\n")
        payload = json.loads(out[0])
        assert payload["file"] == str(jpeg)
        assert payload["latitude"] == 14.8
        assert payload["longitude"] == -17.3
        assert payload["altitude"] == 10.0
        assert payload["shutter"] == "1/200"

    def test_enhance_writes_audit_sidecars(self, tmp_path, capsys):
        paths = write_frames(tmp_path)
        out = tmp_path / "enhanced"
        code = main(["enhance", *paths, "--out", str(out), "--audit"])
        assert code == EXIT_OK
        assert (out / "frame0.png").exists()
        audit = (out / "frame0.audit.txt").read_text(encoding="utf-8")
        keys = [line.split("=")[0] for line in audit.strip().split("\n")]
        assert keys == ["alpha", "beta", "minimum_gray", "maximum_gray",
                        "clip_percent"]
        capsys.readouterr()

    def test_tile_writes_tiles_annotations_lineage(self, tmp_path, capsys):
        paths = write_frames(tmp_path, count=1)
        via = write_via(tmp_path / "via.json", count=1)
        out = tmp_path / "tiles"
        code = main(["tile", *paths, "--via", via, "--out", str(out),
                     "--tile-size", "32"])
        assert code == EXIT_OK
        # 64x48 at 32: 2 cols x 2 rows under pad-to-cover
        assert sorted(p.name for p in out.glob("*.png")) == [
            "frame0_r0_c0.png", "frame0_r0_c1.png",
            "frame0_r1_c0.png", "frame0_r1_c1.png",
        ]
        lineage = (out / "lineage.csv").read_text(encoding="utf-8")
        assert lineage.startswith(
            "tile_file,source_file,row,col,x0,y0,tile_size,policy"
        )
        annotations = json.loads((out / "annotations.json").read_text())
        total = sum(len(r["regions"]) for r in annotations.values())
        assert total >= 2  # both regions land somewhere
        capsys.readouterr()

    def test_split_deterministic(self, tmp_path, capsys):
        paths = write_frames(tmp_path, count=6)
        out1 = tmp_path / "m1.csv"
        out2 = tmp_path / "m2.csv"
        assert main(["split", *paths, "--out", str(out1), "--seed", "3"]) == EXIT_OK
        assert main(["split", *paths, "--out", str(out2), "--seed", "3"]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
        capsys.readouterr()

    def test_evaluate_truth_equals_pred(self, tmp_path, capsys):
        paths = write_frames(tmp_path, count=2)
        via = write_via(tmp_path / "via.json", count=2)
        coco = tmp_path / "coco"
        pano = tmp_path / "pano"
        assert main(["export", *paths, "--via", via, "--format", "coco",
                     "--out", str(coco)]) == EXIT_OK
        assert main(["export", *paths, "--via", via, "--format", "panoptic",
                     "--out", str(pano)]) == EXIT_OK
        report_path = tmp_path / "report.json"
        code = main([
            "evaluate",
            "--coco-truth", str(coco / "instances_all.json"),
            "--coco-pred", str(coco / "instances_all.json"),
            "--panoptic-truth", str(pano),
            "--panoptic-pred", str(pano),
            "--json-out", str(report_path),
        ])
        assert code == EXIT_OK
        table = capsys.readouterr().out
        assert "instances" in table and "panoptic" in table
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["ap"] == 1.0
        assert report["ar"] == 1.0
        assert report["pq"] == 1.0
        assert report["rq"] == 1.0

    def test_evaluate_requires_a_pair(self, tmp_path, capsys):
        assert main(["evaluate"]) == EXIT_DATA
        assert main(["evaluate", "--coco-truth", "x.json"]) == EXIT_DATA
        capsys.readouterr()

    def test_loss_check_passes(self, capsys):
        assert main(["loss-check", "--iterations", "5"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "FAIL" not in out

    def test_config_env_var_and_flag_override(self, tmp_path, capsys,
                                              monkeypatch):
        paths = write_frames(tmp_path, count=1)
        cfg = tmp_path / "pipeline.cfg"
        cfg.write_text("tile_size=16\n", encoding="utf-8")
        monkeypatch.setenv("SHORESEG_CONFIG", str(cfg))

        out16 = tmp_path / "t16"
        via = write_via(tmp_path / "via.json", count=1)
        assert main(["tile", *paths, "--via", via,
                     "--out", str(out16)]) == EXIT_OK
        assert len(list(out16.glob("*.png"))) == 12  # 4 cols x 3 rows

        out8 = tmp_path / "t8"
        assert main(["tile", *paths, "--via", via, "--out", str(out8),
                     "--tile-size", "8"]) == EXIT_OK
        assert len(list(out8.glob("*.png"))) == 48  # 8 cols x 6 rows
        capsys.readouterr()


def run_pipeline(workdir: Path, monkeypatch, jobs: int) -> dict:
    """inspect -> enhance -> tile -> split -> export -> evaluate.

    Runs inside workdir with relative paths so output bytes do not
    depend on where the run directory lives.
    """
    monkeypatch.chdir(workdir)
    source = Path("source")
    source.mkdir()
    write_flight_frames(source, count=3, seed=4)
    via = write_via(Path("via.json"), count=3, suffix="jpg")
    frames = sorted(str(p) for p in source.glob("*.jpg"))
    jobs_args = ["--jobs", str(jobs)]

    assert main(["inspect", *frames, *jobs_args,
                 "--json-out", "meta.jsonl"]) == EXIT_OK
    assert main(["enhance", *frames, "--out", "enhanced",
                 "--audit", *jobs_args]) == EXIT_OK

    enhanced_frames = sorted(str(p) for p in Path("enhanced").glob("*.jpg"))
    assert main(["tile", *enhanced_frames, "--via", via, "--out", "tiles",
                 "--tile-size", "32", *jobs_args]) == EXIT_OK

    tile_paths = sorted(str(p) for p in Path("tiles").glob("*.png"))
    assert main(["split", *tile_paths, "--out", "manifest.csv",
                 "--seed", "11"]) == EXIT_OK

    assert main(["export", *tile_paths, "--via", "tiles/annotations.json",
                 "--manifest", "manifest.csv", "--format", "coco",
                 "--out", "coco", *jobs_args]) == EXIT_OK
    assert main(["export", *tile_paths, "--via", "tiles/annotations.json",
                 "--format", "panoptic", "--out", "pano",
                 *jobs_args]) == EXIT_OK

    assert main(["evaluate",
                 "--coco-truth", "coco/instances_train.json",
                 "--coco-pred", "coco/instances_train.json",
                 "--panoptic-truth", "pano", "--panoptic-pred", "pano",
                 "--json-out", "report.json"]) == EXIT_OK

    snapshot = {}
    for path in sorted(workdir.rglob("*")):
        if path.is_file():
            snapshot[str(path.relative_to(workdir))] = path.read_bytes()
    return snapshot


class TestCliDeterminism:
    def test_pipeline_identical_across_runs_and_jobs(self, tmp_path, capsys,
                                                     monkeypatch):
        snapshots = []
        for run, jobs in (("run1", 1), ("run2", 1), ("run3", 4)):
            workdir = tmp_path / run
            workdir.mkdir()
            snapshots.append(run_pipeline(workdir, monkeypatch, jobs))
            capsys.readouterr()
        assert snapshots[0] == snapshots[1]
        assert snapshots[0] == snapshots[2]
