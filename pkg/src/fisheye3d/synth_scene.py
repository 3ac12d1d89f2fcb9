"""Synthetic labelled scenes, a point-splat renderer and an ideal mock detector.

The mock detector stands in for a perspective-trained network: given the
image projection it "sees", it reports each visible box the way such a
network would if it perceived the virtual scene perfectly (center pixel,
virtual depth, dimensions, allocentric yaw), optionally with Gaussian noise.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from fisheye3d.box3d import (
    FACES,
    Box2D,
    Box3D,
    VirtualDetection,
    corners,
    edge_points,
)
from fisheye3d.camera_models import (
    CameraIntrinsics,
    CameraModel,
    ProjectionKind,
    angular_coords,
)
from fisheye3d.virtual_transform import InterpretationMode, global_to_allocentric_yaw
from fisheye3d.warp_engine import FovSpec, cylindrical_camera_for_fov, spherical_camera_for_fov

# (width, height, length) ranges in meters.
DEFAULT_CLASS_DIMS = {
    0: ((1.6, 2.0), (1.4, 1.8), (3.8, 4.8)),  # car
    1: ((0.5, 0.8), (1.6, 1.9), (0.5, 0.8)),  # pedestrian
    2: ((0.5, 0.8), (1.5, 1.8), (1.6, 1.9)),  # cyclist
}

MIN_VISIBLE_SAMPLES = 4


class InfeasibleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the additive noise applied by :func:`mock_detect`."""

    depth: float = 0.0
    center_px: float = 0.0
    dims: float = 0.0
    alpha: float = 0.0
    box2d_px: float = 0.0

    def __post_init__(self):
        for name in ("depth", "center_px", "dims", "alpha", "box2d_px"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise sigma {name} must be non-negative")


@dataclass(frozen=True)
class SceneConfig:
    n_objects: Tuple[int, int] = (3, 8)
    azimuth_range: Tuple[float, float] = (-math.radians(95), math.radians(95))
    rho_range: Tuple[float, float] = (4.0, 30.0)
    elevation_mode: str = "ground"
    camera_height: float = 1.6
    y_range: Tuple[float, float] = (-3.0, 3.0)
    class_dims: Dict[int, tuple] = field(default_factory=lambda: dict(DEFAULT_CLASS_DIMS))
    min_range: float = 0.5
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        for name in ("n_objects", "azimuth_range", "rho_range", "y_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InfeasibleConfigError(f"{name} is empty: {lo} > {hi}")
        if self.n_objects[0] < 0:
            raise InfeasibleConfigError("object count must be non-negative")
        if self.elevation_mode not in ("ground", "free"):
            raise InfeasibleConfigError(f"unknown elevation mode {self.elevation_mode!r}")
        if not self.class_dims:
            raise InfeasibleConfigError("at least one class is required")
        if max(abs(a) for a in self.azimuth_range) > math.pi:
            raise InfeasibleConfigError("azimuth range exceeds +-180 degrees")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        """Build from a JSON mapping; angles are given in degrees."""
        d = dict(d)
        kw = {}
        if "n_objects" in d:
            kw["n_objects"] = tuple(int(x) for x in d["n_objects"])
        if "azimuth_range_deg" in d:
            kw["azimuth_range"] = tuple(math.radians(float(x)) for x in d["azimuth_range_deg"])
        for key in ("rho_range", "y_range"):
            if key in d:
                kw[key] = tuple(float(x) for x in d[key])
        for key in ("camera_height", "min_range"):
            if key in d:
                kw[key] = float(d[key])
        if "elevation_mode" in d:
            kw["elevation_mode"] = d["elevation_mode"]
        if "class_dims" in d:
            kw["class_dims"] = {int(k): tuple(tuple(r) for r in v) for k, v in d["class_dims"].items()}
        if "noise" in d:
            kw["noise"] = NoiseSpec(**{k: float(v) for k, v in d["noise"].items()})
        return cls(**kw)


@dataclass
class Scene:
    cameras: Dict[str, CameraModel]
    boxes: List[Box3D]
    seed: int


def default_rig(width: int = 1024, h_fov_deg: float = 190.0, v_fov_deg: float = 107.0,
                cyl_v_fov_deg: float = 100.0) -> Dict[str, CameraModel]:
    """A 190-degree equidistant fisheye and the panoramas derived from it.

    All cameras share the fisheye's focal lengths. The fisheye spans the
    full horizontal FoV across ``width`` pixels.
    """
    half = math.radians(h_fov_deg) / 2
    f = width / (2 * half)
    height = int(round(2 * f * math.radians(v_fov_deg) / 2))
    intr = CameraIntrinsics(f, f, width / 2, height / 2)
    fisheye = CameraModel(ProjectionKind.FISHEYE, intr, (width, height), half)
    return {
        "fisheye": fisheye,
        "cylindrical": cylindrical_camera_for_fov(intr, FovSpec.from_degrees(h_fov_deg, cyl_v_fov_deg)),
        "spherical": spherical_camera_for_fov(intr, FovSpec.from_degrees(h_fov_deg, v_fov_deg)),
        "pinhole": CameraModel(ProjectionKind.PINHOLE, intr, (width, height)),
    }


def _half_bev_diagonal(dims) -> float:
    return 0.5 * math.hypot(dims[0], dims[2])


def generate_scene(cfg: SceneConfig, seed: int, cameras: Optional[Dict[str, CameraModel]] = None) -> Scene:
    """Draw a random scene; identical ``(cfg, seed)`` give identical scenes.

    Raises:
        InfeasibleConfigError: if the ranges cannot place a box clear of the
            camera, or the azimuth range exceeds the fisheye FoV.
    """
    cameras = cameras or default_rig()
    fish = cameras.get("fisheye")
    if fish is not None and max(abs(a) for a in cfg.azimuth_range) > fish.fov_limit + 1e-12:
        raise InfeasibleConfigError("azimuth range exceeds the fisheye field of view")
    max_half_diag = max(_half_bev_diagonal([r[1] for r in dims]) for dims in cfg.class_dims.values())
    if cfg.rho_range[1] - max_half_diag < cfg.min_range:
        raise InfeasibleConfigError(
            f"rho range {cfg.rho_range} cannot keep boxes beyond min range {cfg.min_range}"
        )

    rng = np.random.default_rng(seed)
    n = int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))
    classes = sorted(cfg.class_dims)
    boxes = []
    for _ in range(n):
        c = classes[int(rng.integers(len(classes)))]
        dims = tuple(float(rng.uniform(lo, hi)) for lo, hi in cfg.class_dims[c])
        lo = max(cfg.rho_range[0], cfg.min_range + _half_bev_diagonal(dims))
        rho = float(rng.uniform(lo, max(lo, cfg.rho_range[1])))
        phi = float(rng.uniform(*cfg.azimuth_range))
        if cfg.elevation_mode == "ground":
            y = cfg.camera_height - dims[1] / 2
        else:
            y = float(rng.uniform(*cfg.y_range))
        yaw = float(rng.uniform(-math.pi, math.pi))
        boxes.append(
            Box3D(
                center=[rho * math.sin(phi), y, rho * math.cos(phi)],
                dims=dims,
                yaw=yaw,
                class_id=c,
                image_id=str(seed),
            )
        )
    return Scene(cameras, boxes, seed)


def check_scene(scene: Scene, cfg: SceneConfig) -> List[str]:
    """Return invariant violations (empty when the scene is valid)."""
    problems = []
    fish = scene.cameras.get("fisheye")
    for i, b in enumerate(scene.boxes):
        ac = angular_coords(b.center)
        if fish is not None and float(ac.viewing_angle) > fish.fov_limit + 1e-12:
            problems.append(f"box {i}: center outside fisheye FoV")
        if float(ac.rho) - _half_bev_diagonal(b.dims) < cfg.min_range - 1e-12:
            problems.append(f"box {i}: closer than min range")
        if cfg.elevation_mode == "ground" and abs(b.center[1] + b.dims[1] / 2 - cfg.camera_height) > 1e-9:
            problems.append(f"box {i}: not on the ground plane")
    return problems


# -- rendering --------------------------------------------------------------

_FACE_SHADE = (0.55, 1.0, 0.7, 0.85, 0.8, 0.65)
CHECKER_CELL = 0.5
CHECKER_CONTRAST = 0.12
_SAMPLES_PER_PIXEL = 2.5
_MAX_FACE_SAMPLES = 2500


def box_color(index: int) -> np.ndarray:
    h = (index * 0.618033988749895) % 1.0
    return np.array(colorsys.hsv_to_rgb(h, 0.65, 0.95)) * 255.0


def _face_frame(c: np.ndarray, face):
    a, b, _, d = (c[i] for i in face)
    return a, b - a, d - a


def _face_resolution(model: CameraModel, origin, es, et) -> Optional[Tuple[int, int]]:
    g = np.linspace(0.0, 1.0, 9)
    pts = origin + g[:, None, None] * es + g[None, :, None] * et
    uv, ok = model.project_points(pts)
    if not np.any(ok):
        return None
    step_s = np.linalg.norm(np.diff(uv, axis=0), axis=-1)
    step_t = np.linalg.norm(np.diff(uv, axis=1), axis=-1)
    ext_s = np.nanmax(np.nansum(step_s, axis=0)) if np.any(np.isfinite(step_s)) else 0.0
    ext_t = np.nanmax(np.nansum(step_t, axis=1)) if np.any(np.isfinite(step_t)) else 0.0
    # Partially visible faces can stretch without bound near the FoV edge.
    ns = int(np.clip(math.ceil(_SAMPLES_PER_PIXEL * ext_s) + 2, 2, _MAX_FACE_SAMPLES))
    nt = int(np.clip(math.ceil(_SAMPLES_PER_PIXEL * ext_t) + 2, 2, _MAX_FACE_SAMPLES))
    return ns, nt


def _splat_face(img, model, origin, es, et, color, shade):
    res = _face_resolution(model, origin, es, et)
    if res is None:
        return
    ns, nt = res
    h, w = img.shape[:2]
    len_s, len_t = np.linalg.norm(es), np.linalg.norm(et)
    t = (np.arange(nt) + 0.5) / nt
    cell_t = np.floor(t * len_t / CHECKER_CELL).astype(int)
    rows = max(1, 2_000_000 // nt)
    for s0 in range(0, ns, rows):
        s = (np.arange(s0, min(ns, s0 + rows)) + 0.5) / ns
        pts = origin + s[:, None, None] * es + t[None, :, None] * et
        uv, ok = model.project_points(pts)
        cell_s = np.floor(s * len_s / CHECKER_CELL).astype(int)
        checker = ((cell_s[:, None] + cell_t[None, :]) % 2) * 2 - 1
        ok &= model.in_image(uv)
        ok &= (uv[..., 0] < w) & (uv[..., 1] < h)
        if not np.any(ok):
            continue
        i = np.floor(uv[ok][:, 0]).astype(np.intp)
        j = np.floor(uv[ok][:, 1]).astype(np.intp)
        k = shade * (1.0 + CHECKER_CONTRAST * checker[ok])
        img[j, i] = np.clip(np.rint(color[None, :] * k[:, None]), 0, 255).astype(np.uint8)


def render_scene(scene: Scene, model: CameraModel) -> np.ndarray:
    """Rasterise the scene's boxes into ``model`` as an ``[H, W, 3]`` uint8 image.

    Each visible (front-facing) face is sampled densely enough to cover every
    pixel it touches, then splatted; boxes are drawn far to near.
    """
    w, h = model.image_size
    img = np.zeros((h, w, 3), dtype=np.uint8)
    order = sorted(range(len(scene.boxes)), key=lambda i: (-np.linalg.norm(scene.boxes[i].center), i))
    for idx in order:
        b = scene.boxes[idx]
        c = corners(b)
        color = box_color(idx)
        for f, face in enumerate(FACES):
            origin, es, et = _face_frame(c, face)
            normal = np.cross(es, et)
            # Plane visibility from the camera center is uniform over the face.
            if np.dot(normal, origin) >= 0:
                continue
            _splat_face(img, model, origin, es, et, color, _FACE_SHADE[f])
    return img


# -- mock detector ----------------------------------------------------------

_MODE_FOR_KIND = {
    ProjectionKind.CYLINDRICAL: InterpretationMode.CYLINDRICAL,
    ProjectionKind.SPHERICAL: InterpretationMode.SPHERICAL,
}


def virtual_depth(model: CameraModel, p) -> float:
    """Depth a perspective-trained network regresses from ``model``'s image: rho, r or z."""
    p = np.asarray(p, dtype=float)
    if model.kind is ProjectionKind.CYLINDRICAL:
        return float(math.hypot(p[0], p[2]))
    if model.kind is ProjectionKind.SPHERICAL:
        return float(np.linalg.norm(p))
    if model.kind is ProjectionKind.PINHOLE:
        return float(p[2])
    raise ValueError("no depth measure is shift-invariant in raw fisheye images")


def visible_box2d(b: Box3D, model: CameraModel) -> Optional[Box2D]:
    """Projected hull of ``b`` if at least 4 edge samples land in the image."""
    uv, ok = model.project_points(edge_points(b).reshape(-1, 3))
    inside = ok & model.in_image(uv)
    if inside.sum() < MIN_VISIBLE_SAMPLES:
        return None
    uv = uv[ok]
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def mock_detect(
    scene: Scene,
    model: CameraModel,
    mode: InterpretationMode,
    noise: Optional[NoiseSpec] = None,
    seed: int = 0,
) -> List[VirtualDetection]:
    """Emulate a perspective-trained detector run on ``model``'s image of the scene.

    Args:
        scene: Ground truth.
        model: Projection of the image the detector consumes (cylindrical,
            spherical or pinhole).
        mode: Interpretation the outputs are destined for; the virtual-space
            modes require the matching projection.
        noise: Per-field Gaussian noise; ``None`` means exact outputs.
        seed: Seed of the noise generator.

    Returns:
        One detection per visible box, in scene order.
    """
    mode = InterpretationMode(mode)
    if mode is not InterpretationMode.NAIVE and _MODE_FOR_KIND.get(model.kind) is not mode:
        raise ValueError(f"{mode.value} interpretation needs a {mode.value} image, got {model.kind.value}")
    noise = noise or NoiseSpec()

    kept = []
    for b in scene.boxes:
        box2d = visible_box2d(b, model)
        if box2d is None:
            continue
        uv, ok = model.project_points(b.center)
        if not ok:
            continue
        depth = virtual_depth(model, b.center)
        if depth <= 0:
            continue
        kept.append((b, box2d, uv, depth))

    n = len(kept)
    rng = np.random.default_rng(seed)
    e_depth = rng.normal(0.0, noise.depth, n)
    e_center = rng.normal(0.0, noise.center_px, (n, 2))
    e_dims = rng.normal(0.0, noise.dims, (n, 3))
    e_alpha = rng.normal(0.0, noise.alpha, n)
    e_box = rng.normal(0.0, noise.box2d_px, (n, 4))

    dets = []
    for k, (b, box2d, uv, depth) in enumerate(kept):
        azimuth = math.atan2(b.center[0], b.center[2])
        bb = np.array(box2d.as_list()) + e_box[k]
        bb = [min(bb[0], bb[2]), min(bb[1], bb[3]), max(bb[0], bb[2]), max(bb[1], bb[3])]
        dets.append(
            VirtualDetection(
                box2d=Box2D(*bb),
                center2d=tuple(uv + e_center[k]),
                depth_out=max(depth + e_depth[k], 1e-3),
                dims=tuple(np.maximum(np.asarray(b.dims) + e_dims[k], 1e-3)),
                alpha=float(global_to_allocentric_yaw(b.yaw, azimuth) + e_alpha[k]),
                score=1.0,
                class_id=b.class_id,
                image_id=b.image_id,
            )
        )
    return dets


# -- magnification probe ----------------------------------------------------

def _probe_width_px(model: CameraModel, distance: float, elevation: float, width: float) -> float:
    if model.kind is ProjectionKind.CYLINDRICAL:
        # Fixed cylindrical radius; elevation enters only through y.
        c = np.array([0.0, distance * math.tan(elevation), distance])
    else:
        c = distance * np.array([0.0, math.sin(elevation), math.cos(elevation)])
    ends = c + np.array([[-width / 2, 0.0, 0.0], [width / 2, 0.0, 0.0]])
    uv, ok = model.project_points(ends)
    if not np.all(ok):
        raise ValueError("probe object is outside the field of view")
    return float(uv[1, 0] - uv[0, 0])


def width_depth_probe(model: CameraModel, distance: float, elevation: float,
                      ref_elevation: float = 0.0, width: float = 2.0) -> float:
    """Depth error of a width-to-depth regressor calibrated at ``ref_elevation``.

    The regressor knows the exact relation between projected width and depth
    (``rho`` for cylindrical, ``r`` for spherical images) for objects at
    ``ref_elevation`` and is shown an object at ``elevation``.

    Returns:
        Absolute error of the predicted depth, meters.
    """
    observed = _probe_width_px(model, distance, elevation, width)
    lo, hi = 1e-3, 1e6
    # Projected width decreases monotonically with depth.
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _probe_width_px(model, mid, ref_elevation, width) > observed:
            lo = mid
        else:
            hi = mid
    return abs(math.sqrt(lo * hi) - distance)
