"""Command-line driver: warp, synth, mock-detect, transform, evaluate, overlay.

Exit codes: 0 success, 1 internal error, 2 usage or input error. Angles in
files are degrees. The log level comes from ``FISHEYE3D_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from fisheye3d.box3d import (
    box_from_record,
    box_to_record,
    detection_from_record,
    detection_to_box,
    detection_to_record,
    edge_points,
)
from fisheye3d.camera_models import (
    CameraModel,
    load_camera,
    save_camera,
)
from fisheye3d.errors import GeometryError
from fisheye3d.metrics import evaluate, filter_valid_region
from fisheye3d.synth_scene import (
    NoiseSpec,
    Scene,
    SceneConfig,
    default_rig,
    generate_scene,
    mock_detect,
    render_scene,
)
from fisheye3d.virtual_transform import InterpretationMode
from fisheye3d.warp_engine import (
    FovSpec,
    RemapTable,
    build_remap_table,
    cylindrical_camera_for_fov,
    read_png,
    remap,
    spherical_camera_for_fov,
    write_png,
)

log = logging.getLogger("fisheye3d")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

CAMERA_FILES = {kind: f"cam_{kind}.json" for kind in ("fisheye", "cylindrical", "spherical", "pinhole")}


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _read_jsonl(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    records = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append((n, json.loads(line)))
        except json.JSONDecodeError as e:
            log.warning("%s:%d: invalid JSON (%s), skipped", path, n, e)
            records.append((n, None))
    return records


def _write_jsonl(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


def _camera(path) -> CameraModel:
    if not Path(path).is_file():
        raise InputError(f"{path}: no such file")
    try:
        return load_camera(path)
    except (ValueError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: bad calibration file: {e}") from None


def _mask_path(out: Path) -> Path:
    return out.with_name(out.stem + "_mask.png")


# -- subcommands ------------------------------------------------------------

def cmd_warp(args) -> int:
    src = _camera(args.src_cam)
    if args.dst_cam:
        dst = _camera(args.dst_cam)
    else:
        fov = FovSpec.from_degrees(args.h_fov, args.v_fov)
        make = cylindrical_camera_for_fov if args.to == "cylindrical" else spherical_camera_for_fov
        dst = make(src.intrinsics, fov)
    if not Path(args.input).is_file():
        raise InputError(f"{args.input}: no such file")
    img = read_png(args.input)
    if img.shape[1] != src.width or img.shape[0] != src.height:
        raise InputError(
            f"{args.input} is {img.shape[1]}x{img.shape[0]}, camera expects {src.width}x{src.height}"
        )
    if args.load_table:
        table = RemapTable.load(args.load_table)
        if table.src_size != src.image_size or table.dst_size != dst.image_size:
            raise InputError(f"{args.load_table}: table sizes do not match the cameras")
    else:
        table = build_remap_table(src, dst)
    out, mask = remap(img, table, return_mask=True)
    out_path = Path(args.out)
    write_png(out_path, out)
    write_png(Path(args.out_mask) if args.out_mask else _mask_path(out_path), mask.astype(np.uint8) * 255)
    if args.out_cam:
        save_camera(dst, args.out_cam)
    if args.save_table:
        table.save(args.save_table)
    log.info("warped %s (%s) -> %s (%s, %dx%d)", args.input, src.kind.value, out_path,
             dst.kind.value, dst.width, dst.height)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SceneConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise InputError(f"{args.config}: no such file")
        try:
            cfg = SceneConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (ValueError, TypeError, json.JSONDecodeError) as e:
            raise InputError(f"{args.config}: {e}") from None
    rig = default_rig(args.width)
    try:
        scene = generate_scene(cfg, args.seed, rig)
    except ValueError as e:
        raise InputError(str(e)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "gt.jsonl", [box_to_record(b) for b in scene.boxes])
    for kind, cam in rig.items():
        save_camera(cam, out / CAMERA_FILES[kind])
        if not args.no_render:
            write_png(out / f"{kind}.png", render_scene(scene, cam))
    (out / "scene.json").write_text(json.dumps({"seed": args.seed, "n_boxes": len(scene.boxes)}) + "\n")
    log.info("wrote scene %d with %d boxes to %s", args.seed, len(scene.boxes), out)
    return EXIT_OK


def load_scene_dir(path) -> Scene:
    d = Path(path)
    if not (d / "gt.jsonl").is_file():
        raise InputError(f"{d}: not a scene directory (gt.jsonl missing)")
    cams = {k: _camera(d / f) for k, f in CAMERA_FILES.items() if (d / f).is_file()}
    boxes = [box_from_record(r) for _, r in _read_jsonl(d / "gt.jsonl") if r is not None]
    meta = d / "scene.json"
    seed = json.loads(meta.read_text()).get("seed", 0) if meta.is_file() else 0
    return Scene(cams, boxes, seed)


def cmd_mock_detect(args) -> int:
    scene = load_scene_dir(args.scene)
    mode = InterpretationMode(args.mode)
    kind = args.projection or ("cylindrical" if mode is InterpretationMode.NAIVE else mode.value)
    if kind not in scene.cameras:
        raise InputError(f"scene has no {kind} camera")
    noise = NoiseSpec(
        depth=args.noise_depth,
        center_px=args.noise_center,
        dims=args.noise_dims,
        alpha=math.radians(args.noise_alpha),
        box2d_px=args.noise_box,
    )
    try:
        dets = mock_detect(scene, scene.cameras[kind], mode, noise, args.seed)
    except ValueError as e:
        raise InputError(str(e)) from None
    _write_jsonl(args.out, [detection_to_record(d) for d in dets])
    log.info("wrote %d detections to %s", len(dets), args.out)
    return EXIT_OK


def cmd_transform(args) -> int:
    cam = _camera(args.cam)
    mode = InterpretationMode(args.mode)
    records = _read_jsonl(args.dets)
    boxes, bad = [], 0
    for n, rec in records:
        if rec is None:
            bad += 1
            continue
        try:
            det = detection_from_record(rec)
            boxes.append(detection_to_box(det, cam, mode))
        except (ValueError, GeometryError) as e:
            log.warning("%s:%d: skipped (%s)", args.dets, n, e)
            bad += 1
    _write_jsonl(args.out, [box_to_record(b) for b in boxes])
    if bad:
        print(f"transform: skipped {bad} of {len(records)} records", file=sys.stderr)
    if records and bad == len(records):
        raise InputError("every detection record was malformed")
    log.info("transformed %d detections (%s mode)", len(boxes), mode.value)
    return EXIT_OK


def _load_boxes(path):
    out = []
    for n, rec in _read_jsonl(path):
        if rec is None:
            continue
        try:
            out.append(box_from_record(rec))
        except ValueError as e:
            log.warning("%s:%d: skipped (%s)", path, n, e)
    return out


def cmd_evaluate(args) -> int:
    dets = _load_boxes(args.dets)
    gts = _load_boxes(args.gt)
    cam = _camera(args.cam) if args.cam else None
    if args.mask:
        if cam is None:
            raise InputError("--mask requires --cam")
        mask = read_png(args.mask) > 0
        if mask.ndim == 3:
            mask = mask.any(axis=-1)
        dets = filter_valid_region(dets, cam, mask)
        gts = filter_valid_region(gts, cam, mask)
    report = evaluate(dets, gts, model=cam, iou2d_threshold=args.iou_threshold)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def draw_boxes(img: np.ndarray, boxes, cam: CameraModel, color=(255, 0, 0), width: int = 2,
               samples: int = 32) -> np.ndarray:
    """Draw the 12 edges of each box as sampled polylines in ``cam``'s image."""
    if not boxes:
        return img.copy()
    im = Image.fromarray(img if img.ndim == 3 else np.stack([img] * 3, axis=-1))
    draw = ImageDraw.Draw(im)
    for b in boxes:
        uv, ok = cam.project_points(edge_points(b, samples))
        for e in range(uv.shape[0]):
            run = []
            for p, valid in zip(uv[e], ok[e]):
                if valid:
                    run.append((float(p[0]), float(p[1])))
                    continue
                if len(run) > 1:
                    draw.line(run, fill=tuple(color), width=width)
                run = []
            if len(run) > 1:
                draw.line(run, fill=tuple(color), width=width)
    return np.array(im)


def cmd_overlay(args) -> int:
    cam = _camera(args.cam)
    if not Path(args.image).is_file():
        raise InputError(f"{args.image}: no such file")
    img = read_png(args.image)
    boxes = _load_boxes(args.boxes)
    if args.image_id is not None:
        boxes = [b for b in boxes if b.image_id == args.image_id]
    color = tuple(int(c) for c in args.color.split(","))
    write_png(args.out, draw_boxes(img, boxes, cam, color=color, width=args.line_width))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fisheye3d", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("warp", help="warp an image between camera models")
    w.add_argument("--src-cam", required=True)
    g = w.add_mutually_exclusive_group(required=True)
    g.add_argument("--dst-cam")
    g.add_argument("--to", choices=["cylindrical", "spherical"])
    w.add_argument("--h-fov", type=float, default=190.0, help="degrees, with --to")
    w.add_argument("--v-fov", type=float, default=100.0, help="degrees, with --to")
    w.add_argument("--in", dest="input", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--out-mask")
    w.add_argument("--out-cam")
    w.add_argument("--save-table")
    w.add_argument("--load-table")
    w.set_defaults(func=cmd_warp)

    s = sub.add_parser("synth", help="generate a labelled synthetic scene")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--width", type=int, default=1024)
    s.add_argument("--no-render", action="store_true")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("mock-detect", help="emulate a perspective-trained detector on a scene")
    m.add_argument("--scene", required=True)
    m.add_argument("--mode", choices=[x.value for x in InterpretationMode], default="cylindrical")
    m.add_argument("--projection", choices=["cylindrical", "spherical", "pinhole"])
    m.add_argument("--noise-depth", type=float, default=0.0)
    m.add_argument("--noise-center", type=float, default=0.0)
    m.add_argument("--noise-dims", type=float, default=0.0)
    m.add_argument("--noise-alpha", type=float, default=0.0, help="degrees")
    m.add_argument("--noise-box", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mock_detect)

    t = sub.add_parser("transform", help="map detector outputs to real 3D boxes")
    t.add_argument("--dets", required=True)
    t.add_argument("--cam", required=True, help="camera of the image the detector consumed")
    t.add_argument("--mode", choices=[x.value for x in InterpretationMode], default="cylindrical")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_transform)

    e = sub.add_parser("evaluate", help="score 3D boxes against ground truth")
    e.add_argument("--dets", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--cam", help="camera used to derive missing 2D boxes")
    e.add_argument("--mask", help="validity mask PNG; boxes centered outside it are ignored")
    e.add_argument("--iou-threshold", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("overlay", help="draw 3D boxes onto an image")
    o.add_argument("--image", required=True)
    o.add_argument("--cam", required=True)
    o.add_argument("--boxes", required=True)
    o.add_argument("--image-id")
    o.add_argument("--color", default="255,0,0")
    o.add_argument("--line-width", type=int, default=2)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_overlay)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FISHEYE3D_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        print(f"fisheye3d {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, OSError) as e:
        print(f"fisheye3d {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
