"""Oriented 3D boxes, their projection into any camera, and box recovery from detector outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from fisheye3d.camera_models import CameraModel, ProjectionKind
from fisheye3d.errors import InvalidDepthError, NotVisibleError
from fisheye3d.virtual_transform import (
    InterpretationMode,
    allocentric_to_global_yaw,
    naive_direction_point,
    virtual_az_el,
    virtual_to_real_cyl,
    virtual_to_real_sph,
    wrap_angle,
)

EDGE_SAMPLES = 16

# Local corner signs (x, y, z). y points down, so indices 0-3 are the bottom
# face and 4-7 the top face; each face runs counter-clockwise seen from above
# (-y), starting at the rear-left corner.
_CORNER_SIGNS = np.array(
    [
        [-1, 1, -1],
        [1, 1, -1],
        [1, 1, 1],
        [-1, 1, 1],
        [-1, -1, -1],
        [1, -1, -1],
        [1, -1, 1],
        [-1, -1, 1],
    ],
    dtype=float,
)

EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

# Faces as corner quads (a, b, c, d) with outward normals via (b - a) x (d - a).
FACES = (
    (0, 3, 2, 1),  # bottom, +y
    (4, 5, 6, 7),  # top, -y
    (0, 1, 5, 4),  # rear, -z
    (2, 3, 7, 6),  # front, +z
    (1, 2, 6, 5),  # right, +x
    (3, 0, 4, 7),  # left, -x
)


@dataclass(frozen=True)
class Box2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min <= self.u_max and self.v_min <= self.v_max):
            raise ValueError(f"Box2D corners are not ordered: {self}")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))

    def as_list(self):
        return [self.u_min, self.v_min, self.u_max, self.v_max]


@dataclass(frozen=True, eq=False)
class Box3D:
    """Yaw-only oriented box in camera coordinates.

    ``dims`` is ``(width, height, length)`` along the box's local x, y and z
    axes; ``yaw`` rotates the local frame about the camera y axis, so that
    ``yaw = 0`` puts the length along the optical axis. The remaining fields
    carry annotation metadata used by evaluation.
    """

    center: np.ndarray
    dims: Tuple[float, float, float]
    yaw: float = 0.0
    class_id: int = 0
    score: float = 1.0
    image_id: str = "0"
    box2d: Optional[Box2D] = field(default=None, compare=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        if not np.all(np.isfinite(c)):
            raise ValueError(f"box center must be finite, got {c}")
        object.__setattr__(self, "center", c)
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or not all(d > 0 for d in dims):
            raise ValueError(f"box dims must be three positive values, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def __eq__(self, other):
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and (self.dims, self.yaw, self.class_id, self.score, self.image_id)
            == (other.dims, other.yaw, other.class_id, other.score, other.image_id)
        )

    __hash__ = None

    @property
    def volume(self) -> float:
        w, h, l = self.dims
        return w * h * l

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    def with_meta(self, **kw) -> "Box3D":
        return replace(self, **kw)


@dataclass(frozen=True)
class VirtualDetection:
    """One object as reported by a perspective-trained monocular detector."""

    box2d: Box2D
    center2d: Tuple[float, float]
    depth_out: float
    dims: Tuple[float, float, float]
    alpha: float
    score: float = 1.0
    class_id: int = 0
    image_id: str = "0"

    def __post_init__(self):
        if not self.depth_out > 0:
            raise InvalidDepthError(f"depth_out must be positive, got {self.depth_out}")
        if len(self.dims) != 3 or not all(d > 0 for d in self.dims):
            raise ValueError(f"dims must be three positive values, got {self.dims}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "center2d", tuple(float(c) for c in self.center2d))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))


def corners(b: Box3D) -> np.ndarray:
    """The 8 corners, shape ``[8, 3]``, in the order of ``_CORNER_SIGNS``."""
    local = _CORNER_SIGNS * (0.5 * np.asarray(b.dims))
    return local @ b.rotation().T + b.center


def edge_points(b: Box3D, n: int = EDGE_SAMPLES) -> np.ndarray:
    """``n`` evenly spaced samples (endpoints included) along each of the 12 edges.

    Returns:
        Array with shape ``[12, n, 3]``.
    """
    c = corners(b)
    t = np.linspace(0.0, 1.0, n)[None, :, None]
    a = c[[e[0] for e in EDGES]][:, None, :]
    z = c[[e[1] for e in EDGES]][:, None, :]
    return a + t * (z - a)


def project_box(b: Box3D, model: CameraModel, n: int = EDGE_SAMPLES) -> Box2D:
    """Axis-aligned hull of the projected, edge-sampled outline of ``b``.

    Straight edges bend in every projection but the pinhole one, so the
    corners alone underestimate the extent.

    Raises:
        NotVisibleError: if no edge sample has a valid projection.
    """
    uv, valid = model.project_points(edge_points(b, n).reshape(-1, 3))
    if not np.any(valid):
        raise NotVisibleError("no part of the box projects into the camera")
    uv = uv[valid]
    lo = uv.min(axis=0)
    hi = uv.max(axis=0)
    return Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def _virtual_center(det: VirtualDetection, model: CameraModel) -> np.ndarray:
    # Ray of the virtual pinhole camera sharing the model's intrinsic matrix.
    k = model.intrinsics
    u, v = det.center2d
    return np.array([(u - k.u0) / k.fx, (v - k.v0) / k.fy, 1.0]) * det.depth_out


def detection_to_box(det: VirtualDetection, model: CameraModel, mode: InterpretationMode) -> Box3D:
    """Rebuild a real-space box from one detection.

    Only the center goes through the virtual-to-real map; dimensions are
    copied and the global yaw is the allocentric angle plus the azimuth of
    the recovered center.

    Args:
        det: Detector outputs in the image the detector consumed.
        model: Camera model of that image.
        mode: Interpretation of ``det.depth_out``.

    Returns:
        The recovered :class:`Box3D`, carrying the detection's metadata and
        2D box.
    """
    mode = InterpretationMode(mode)
    if mode is InterpretationMode.NAIVE:
        center = naive_direction_point(model, det.center2d, det.depth_out)
        azimuth = math.atan2(center[0], center[2])
    else:
        pv = _virtual_center(det, model)
        if mode is InterpretationMode.CYLINDRICAL:
            center = virtual_to_real_cyl(pv)
        else:
            center = virtual_to_real_sph(pv)
        azimuth, _ = virtual_az_el(pv)
    yaw = allocentric_to_global_yaw(det.alpha, azimuth)
    return Box3D(
        center=center,
        dims=det.dims,
        yaw=float(yaw),
        class_id=det.class_id,
        score=det.score,
        image_id=det.image_id,
        box2d=det.box2d,
    )


def expected_mode_for(kind: ProjectionKind) -> Optional[InterpretationMode]:
    """The virtual-space interpretation matching an image projection, if any."""
    return {
        ProjectionKind.CYLINDRICAL: InterpretationMode.CYLINDRICAL,
        ProjectionKind.SPHERICAL: InterpretationMode.SPHERICAL,
    }.get(kind)


# -- record I/O (angles are degrees on disk) -------------------------------

def detection_from_record(rec: dict) -> VirtualDetection:
    """Parse one line-delimited detection record.

    Raises:
        ValueError: on missing or malformed fields.
    """
    try:
        b = [float(x) for x in rec["box2d"]]
        c = [float(x) for x in rec["center2d"]]
        if len(b) != 4 or len(c) != 2:
            raise ValueError("box2d needs 4 values and center2d 2")
        return VirtualDetection(
            box2d=Box2D(*b),
            center2d=tuple(c),
            depth_out=float(rec["depth_out"]),
            dims=tuple(float(x) for x in rec["dims"]),
            alpha=math.radians(float(rec["alpha"])),
            score=float(rec.get("score", 1.0)),
            class_id=int(rec.get("class_id", 0)),
            image_id=str(rec.get("image_id", "0")),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed detection record: {e}") from None


def detection_to_record(det: VirtualDetection) -> dict:
    return {
        "image_id": det.image_id,
        "class_id": det.class_id,
        "score": det.score,
        "box2d": det.box2d.as_list(),
        "center2d": list(det.center2d),
        "depth_out": det.depth_out,
        "dims": list(det.dims),
        "alpha": math.degrees(det.alpha),
    }


def box_to_record(b: Box3D) -> dict:
    rec = {
        "image_id": b.image_id,
        "class_id": b.class_id,
        "score": b.score,
        "center": [float(x) for x in b.center],
        "dims": list(b.dims),
        "yaw": math.degrees(b.yaw),
    }
    if b.box2d is not None:
        rec["box2d"] = b.box2d.as_list()
    return rec


def box_from_record(rec: dict) -> Box3D:
    """Parse a box record (GT or transformed output).

    Raises:
        ValueError: on missing or malformed fields.
    """
    try:
        box2d = rec.get("box2d")
        return Box3D(
            center=[float(x) for x in rec["center"]],
            dims=tuple(float(x) for x in rec["dims"]),
            yaw=math.radians(float(rec["yaw"])),
            class_id=int(rec.get("class_id", 0)),
            score=float(rec.get("score", 1.0)),
            image_id=str(rec.get("image_id", "0")),
            box2d=None if box2d is None else Box2D(*[float(x) for x in box2d]),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed box record: {e}") from None


def boxes_as_arrays(boxes: Sequence[Box3D]):
    """Stack centers, dims and yaws for vectorised consumers."""
    if not boxes:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    return (
        np.stack([b.center for b in boxes]),
        np.array([b.dims for b in boxes]),
        np.array([b.yaw for b in boxes]),
    )
