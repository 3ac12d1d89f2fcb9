"""Projection models: pinhole, equidistant fisheye, spherical and cylindrical.

Coordinate convention: camera frame with +x right, +y down, +z forward.
Pixel coordinates are continuous; the center of pixel ``(i, j)`` (column,
row) sits at ``(i + 0.5, j + 0.5)``, so an image of width ``W`` covers
``u`` in ``[0, W]``.

All four models share the same intrinsic slots ``fx, fy, u0, v0``:

* pinhole::

    u = fx * x / z + u0
    v = fy * y / z + v0

* equidistant fisheye, with ``theta = atan2(sqrt(x^2 + y^2), z)``::

    u = fx * theta * x / sqrt(x^2 + y^2) + u0
    v = fy * theta * y / sqrt(x^2 + y^2) + v0

* spherical (equirectangular), ``phi = atan2(x, z)``,
  ``psi = atan2(y, sqrt(x^2 + z^2))``::

    u = fx * phi + u0
    v = fy * psi + v0

* cylindrical, ``rho = sqrt(x^2 + z^2)``::

    u = fx * phi + u0
    v = fy * y / rho + v0

Every model exposes a vectorised, non-raising pair
(:meth:`CameraModel.project_points`, :meth:`CameraModel.unproject_pixels`)
that returns a validity mask, and the module-level :func:`project` and
:func:`unproject` wrappers raise a specific :class:`GeometryError` instead.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from fisheye3d.errors import (
    BehindCameraError,
    BeyondFovError,
    DegeneratePointError,
    OutOfDomainError,
)

ArrayLike = Union[np.ndarray, Tuple[float, ...], list]

DEFAULT_FISHEYE_FOV_LIMIT = math.radians(95.0)
DEFAULT_PANORAMA_FOV_LIMIT = math.pi
DEFAULT_PINHOLE_FOV_LIMIT = math.pi / 2


class ProjectionKind(str, enum.Enum):
    PINHOLE = "pinhole"
    FISHEYE = "fisheye"
    SPHERICAL = "spherical"
    CYLINDRICAL = "cylindrical"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point, in pixels.

    For the spherical and cylindrical models ``fx`` plays the role of the
    azimuth focal length and ``fy`` the elevation (or ``y / rho``) one.
    """

    fx: float
    fy: float
    u0: float
    v0: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (math.isfinite(self.u0) and math.isfinite(self.v0)):
            raise ValueError(f"principal point must be finite, got ({self.u0}, {self.v0})")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.u0],
             [0.0, self.fy, self.v0],
             [0.0, 0.0, 1.0]]
        )


class AngularCoords(NamedTuple):
    """Angular decomposition of a camera-frame point.

    ``azimuth`` is ``atan2(x, z)`` (0 on the y axis), ``elevation`` is the
    exact ``atan2(y, rho)``, ``viewing_angle`` is the angle to the optical
    axis, ``r`` the Euclidean distance and ``rho`` the cylindrical radius.
    """

    azimuth: np.ndarray
    elevation: np.ndarray
    viewing_angle: np.ndarray
    r: np.ndarray
    rho: np.ndarray


def azimuth_of(x, z):
    """``atan2(x, z)`` folded into ``(-pi, pi]`` (``atan2(-0.0, -1)`` is ``-pi``)."""
    a = np.arctan2(x, z)
    return np.where(a == -np.pi, np.pi, a)


def angular_coords(p: ArrayLike) -> AngularCoords:
    """Azimuth, elevation, viewing angle, Euclidean and cylindrical distance.

    Args:
        p: Point(s) with shape ``[..., 3]``.

    Returns:
        :class:`AngularCoords` whose fields have shape ``[...]``.

    Raises:
        DegeneratePointError: if any point is the origin.
    """
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, z)
    r = np.hypot(rho, y)
    if np.any(r == 0):
        raise DegeneratePointError("angular coordinates are undefined at the origin")
    # atan2(0, 0) == 0, which is the azimuth convention on the y axis.
    azimuth = azimuth_of(x, z)
    elevation = np.arctan2(y, rho)
    viewing_angle = np.arctan2(np.hypot(x, y), z)
    return AngularCoords(azimuth, elevation, viewing_angle, r, rho)


def _default_fov_limit(kind: ProjectionKind) -> float:
    if kind is ProjectionKind.FISHEYE:
        return DEFAULT_FISHEYE_FOV_LIMIT
    if kind is ProjectionKind.PINHOLE:
        return DEFAULT_PINHOLE_FOV_LIMIT
    return DEFAULT_PANORAMA_FOV_LIMIT


@dataclass(frozen=True)
class CameraModel:
    """A projection kind, its intrinsics, image size and admissible FoV.

    ``fov_limit`` is the maximum viewing angle for fisheye and pinhole
    models and the azimuth half-range for spherical and cylindrical ones.
    """

    kind: ProjectionKind
    intrinsics: CameraIntrinsics
    image_size: Tuple[int, int]
    fov_limit: Optional[float] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "kind", ProjectionKind(self.kind))
        w, h = self.image_size
        if int(w) != w or int(h) != h or w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive integers, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(w), int(h)))
        if self.fov_limit is None:
            object.__setattr__(self, "fov_limit", _default_fov_limit(self.kind))
        lim = float(self.fov_limit)
        object.__setattr__(self, "fov_limit", lim)
        if self.kind is ProjectionKind.FISHEYE and not 0 < lim < math.pi:
            raise ValueError(f"fisheye fov_limit must lie in (0, pi), got {lim}")
        if self.kind is ProjectionKind.PINHOLE and not 0 < lim <= math.pi / 2:
            raise ValueError(f"pinhole fov_limit must lie in (0, pi/2], got {lim}")
        if self.kind in (ProjectionKind.SPHERICAL, ProjectionKind.CYLINDRICAL) and not 0 < lim <= math.pi:
            raise ValueError(f"azimuth half-range must lie in (0, pi], got {lim}")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def with_kind(self, kind: ProjectionKind, image_size=None, fov_limit=None) -> "CameraModel":
        """Same intrinsic matrix, different projection."""
        return CameraModel(kind, self.intrinsics, image_size or self.image_size, fov_limit)

    # -- vectorised core -------------------------------------------------

    def project_points(self, pts: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """Project camera-frame points without raising.

        Args:
            pts: Array with shape ``[..., 3]``.

        Returns:
            ``(uv, valid)``: pixel coordinates ``[..., 2]`` (NaN where
            invalid) and a boolean mask ``[...]``.
        """
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        k = self.intrinsics
        lim = self.fov_limit
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind is ProjectionKind.PINHOLE:
                valid = z > 0
                if lim < math.pi / 2:
                    valid &= np.arctan2(np.hypot(x, y), z) <= lim
                a, b = x / z, y / z
            elif self.kind is ProjectionKind.FISHEYE:
                s = np.hypot(x, y)
                theta = np.arctan2(s, z)
                valid = ((s > 0) | (z > 0)) & (theta <= lim)
                scale = np.where(s > 0, theta / np.where(s > 0, s, 1.0), 0.0)
                a, b = x * scale, y * scale
            elif self.kind is ProjectionKind.SPHERICAL:
                rho = np.hypot(x, z)
                a = azimuth_of(x, z)
                b = np.arctan2(y, rho)
                valid = ((rho > 0) | (y != 0)) & (np.abs(a) <= lim)
            else:
                rho = np.hypot(x, z)
                a = azimuth_of(x, z)
                b = y / rho
                valid = (rho > 0) & (np.abs(a) <= lim)
            valid &= np.isfinite(a) & np.isfinite(b)
        uv = np.stack([k.fx * a + k.u0, k.fy * b + k.v0], axis=-1)
        uv[~valid] = np.nan
        return uv, valid

    def unproject_pixels(self, uv: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """Unit viewing directions for pixel coordinates, without raising.

        Args:
            uv: Array with shape ``[..., 2]``.

        Returns:
            ``(dirs, valid)``: unit vectors ``[..., 3]`` (NaN where the
            pixel has no admissible direction) and a boolean mask ``[...]``.
        """
        uv = np.asarray(uv, dtype=float)
        k = self.intrinsics
        a = (uv[..., 0] - k.u0) / k.fx
        b = (uv[..., 1] - k.v0) / k.fy
        lim = self.fov_limit
        if self.kind is ProjectionKind.PINHOLE:
            d = np.stack([a, b, np.ones_like(a)], axis=-1)
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            valid = np.isfinite(a) & np.isfinite(b)
            if lim < math.pi / 2:
                valid &= np.arccos(np.clip(d[..., 2], -1, 1)) <= lim
        elif self.kind is ProjectionKind.FISHEYE:
            theta = np.hypot(a, b)
            valid = theta <= lim
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(theta > 0, np.sin(theta) / np.where(theta > 0, theta, 1.0), 1.0)
            d = np.stack([a * scale, b * scale, np.cos(theta)], axis=-1)
        elif self.kind is ProjectionKind.SPHERICAL:
            valid = (np.abs(a) <= lim) & (np.abs(b) <= math.pi / 2)
            cb = np.cos(b)
            d = np.stack([cb * np.sin(a), np.sin(b), cb * np.cos(a)], axis=-1)
        else:
            valid = np.abs(a) <= lim
            d = np.stack([np.sin(a), b, np.cos(a)], axis=-1)
            d /= np.sqrt(1.0 + b * b)[..., None]
        valid = valid & np.all(np.isfinite(d), axis=-1)
        d[~valid] = np.nan
        return d, valid

    def pixel_centers(self) -> np.ndarray:
        """Continuous coordinates of every pixel center, shape ``[H, W, 2]``."""
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)

    def in_image(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return (
            (uv[..., 0] >= 0) & (uv[..., 0] <= self.width)
            & (uv[..., 1] >= 0) & (uv[..., 1] <= self.height)
        )


def _raise_for_point(model: CameraModel, p: np.ndarray) -> None:
    x, y, z = p
    if x == 0 and y == 0 and z == 0:
        raise DegeneratePointError("cannot project the origin")
    if model.kind is ProjectionKind.PINHOLE and z <= 0:
        raise BehindCameraError(f"point {tuple(p)} is behind the pinhole camera")
    if model.kind is ProjectionKind.CYLINDRICAL and x == 0 and z == 0:
        raise DegeneratePointError(f"point {tuple(p)} lies on the cylinder axis")
    raise BeyondFovError(f"point {tuple(p)} is outside the {model.kind.value} field of view")


def project(model: CameraModel, p: ArrayLike) -> np.ndarray:
    """Project point(s) into ``model``'s image.

    Args:
        model: Camera to project into.
        p: Point or points with shape ``[..., 3]``.

    Returns:
        Pixel coordinates with shape ``[..., 2]``.

    Raises:
        DegeneratePointError, BehindCameraError, BeyondFovError: for the
        first offending point.
    """
    p = np.asarray(p, dtype=float)
    uv, valid = model.project_points(p)
    if not np.all(valid):
        bad = p.reshape(-1, 3)[np.flatnonzero(~valid.reshape(-1))[0]]
        _raise_for_point(model, bad)
    return uv


def unproject(model: CameraModel, px: ArrayLike) -> np.ndarray:
    """Unit direction(s) whose projection is ``px``.

    Image bounds are not enforced; only the admissible direction domain is.

    Raises:
        OutOfDomainError: if any pixel has no admissible direction.
    """
    px = np.asarray(px, dtype=float)
    d, valid = model.unproject_pixels(px)
    if not np.all(valid):
        bad = px.reshape(-1, 2)[np.flatnonzero(~valid.reshape(-1))[0]]
        raise OutOfDomainError(
            f"pixel {tuple(bad)} maps outside the {model.kind.value} domain"
        )
    return d


def rotation_y(angle: float) -> np.ndarray:
    """Rotation about the camera y axis taking +z towards +x for positive angles."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# -- calibration files ----------------------------------------------------

def camera_to_dict(model: CameraModel) -> dict:
    k = model.intrinsics
    return {
        "kind": model.kind.value,
        "fx": k.fx,
        "fy": k.fy,
        "u0": k.u0,
        "v0": k.v0,
        "width": model.width,
        "height": model.height,
        "fov_limit_deg": math.degrees(model.fov_limit),
    }


def camera_from_dict(d: dict) -> CameraModel:
    """Build a :class:`CameraModel` from a calibration mapping.

    Raises:
        ValueError: on a missing field or invalid value.
    """
    try:
        kind = ProjectionKind(d["kind"])
        intr = CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["u0"]), float(d["v0"]))
        size = (d["width"], d["height"])
    except KeyError as e:
        raise ValueError(f"calibration is missing field {e.args[0]!r}") from None
    fov = d.get("fov_limit_deg")
    return CameraModel(kind, intr, size, None if fov is None else math.radians(float(fov)))


def load_camera(path) -> CameraModel:
    with open(path) as f:
        return camera_from_dict(json.load(f))


def save_camera(model: CameraModel, path) -> None:
    Path(path).write_text(json.dumps(camera_to_dict(model), indent=2) + "\n")
