"""Real <-> virtual 3D space for detectors that see panoramas as perspective images.

A perspective-trained detector looking at a cylindrical image with the
intrinsic matrix ``K`` reports objects in a *virtual* scene: the scene that
a pinhole camera with the same ``K`` would need to see to produce that
image. For the cylinder the map is::

    real (x, y, z)  ->  virtual (rho * phi, y, rho)
    virtual (xv, yv, zv)  ->  real (zv * sin(xv / zv), yv, zv * cos(xv / zv))

with ``rho = sqrt(x^2 + z^2)`` and ``phi = atan2(x, z)``. The spherical
analogue, built the same way from the equirectangular projection, is::

    real -> virtual (r * phi, r * psi, r)

All transforms are vectorised over a trailing axis of size 3.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from fisheye3d.camera_models import CameraModel, azimuth_of, unproject
from fisheye3d.errors import (
    AzimuthRangeError,
    DegeneratePointError,
    InvalidDepthError,
    OutOfDomainError,
)


class InterpretationMode(str, enum.Enum):
    """How the detector's depth output is mapped back to real space."""

    CYLINDRICAL = "cylindrical"
    SPHERICAL = "spherical"
    NAIVE = "naive"


def _split(p):
    p = np.asarray(p, dtype=float)
    return p, p[..., 0], p[..., 1], p[..., 2]


def real_to_virtual_cyl(p) -> np.ndarray:
    """Map real camera-frame points to the virtual space of a cylindrical image.

    Raises:
        DegeneratePointError: if any point lies on the camera y axis.
    """
    p, x, y, z = _split(p)
    rho = np.hypot(x, z)
    if np.any(rho == 0):
        raise DegeneratePointError("cylindrical radius is zero")
    phi = azimuth_of(x, z)
    return np.stack([rho * phi, y, rho], axis=-1)


def _check_virtual(xv, zv):
    if np.any(~(zv > 0)):
        raise InvalidDepthError("virtual depth must be positive")
    phi = xv / zv
    if np.any(np.abs(phi) >= math.pi):
        raise AzimuthRangeError("virtual point implies an azimuth outside (-pi, pi)")
    return phi


def virtual_to_real_cyl(pv) -> np.ndarray:
    """Inverse of :func:`real_to_virtual_cyl`.

    Raises:
        InvalidDepthError: if ``zv <= 0``.
        AzimuthRangeError: if ``|xv / zv| >= pi``.
    """
    pv, xv, yv, zv = _split(pv)
    phi = _check_virtual(xv, zv)
    return np.stack([zv * np.sin(phi), yv, zv * np.cos(phi)], axis=-1)


def virtual_az_el(pv):
    """Real azimuth and small-angle elevation (``y / rho``) of a virtual point."""
    pv, xv, yv, zv = _split(pv)
    if np.any(~(zv > 0)):
        raise InvalidDepthError("virtual depth must be positive")
    return xv / zv, yv / zv


def real_to_virtual_sph(p) -> np.ndarray:
    """Map real points to the virtual space of an equirectangular image."""
    p, x, y, z = _split(p)
    rho = np.hypot(x, z)
    r = np.hypot(rho, y)
    if np.any(r == 0):
        raise DegeneratePointError("cannot transform the origin")
    phi = azimuth_of(x, z)
    psi = np.arctan2(y, rho)
    return np.stack([r * phi, r * psi, r], axis=-1)


def virtual_to_real_sph(pv) -> np.ndarray:
    """Inverse of :func:`real_to_virtual_sph`.

    Raises:
        InvalidDepthError: if ``zv <= 0``.
        AzimuthRangeError: if ``|xv / zv| >= pi`` or ``|yv / zv| > pi / 2``.
    """
    pv, xv, yv, zv = _split(pv)
    phi = _check_virtual(xv, zv)
    psi = yv / zv
    if np.any(np.abs(psi) > math.pi / 2):
        raise AzimuthRangeError("virtual point implies an elevation outside [-pi/2, pi/2]")
    cpsi = np.cos(psi)
    return np.stack([zv * cpsi * np.sin(phi), zv * np.sin(psi), zv * cpsi * np.cos(phi)], axis=-1)


def naive_direction_point(model: CameraModel, px, z_out: float) -> np.ndarray:
    """Baseline: aim along the model's true ray but read the depth as literal z.

    Raises:
        InvalidDepthError: if ``z_out <= 0``.
        OutOfDomainError: if the ray is parallel to or behind the image plane.
    """
    if not z_out > 0:
        raise InvalidDepthError(f"depth output must be positive, got {z_out}")
    d = unproject(model, px)
    if np.any(d[..., 2] <= 0):
        raise OutOfDomainError("ray does not intersect the plane z = z_out in front of the camera")
    return d * (z_out / d[..., 2:3])


def wrap_angle(a):
    """Wrap angle(s) to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    out = a - 2 * math.pi * np.ceil((a - math.pi) / (2 * math.pi))
    return float(out) if out.ndim == 0 else out


def allocentric_to_global_yaw(alpha, azimuth):
    return wrap_angle(np.asarray(alpha) + np.asarray(azimuth))


def global_to_allocentric_yaw(yaw, azimuth):
    return wrap_angle(np.asarray(yaw) - np.asarray(azimuth))
