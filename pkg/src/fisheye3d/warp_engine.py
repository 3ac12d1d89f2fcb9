"""Image warping between projection models through inverse-mapping tables.

A :class:`RemapTable` stores, for every destination pixel center, the
continuous source coordinate it samples from (or NaN when the direction is
not visible in the source camera). :func:`remap` then samples bilinearly.
Images are plain ``uint8`` numpy arrays of shape ``[H, W]`` or ``[H, W, C]``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from PIL import Image

from fisheye3d.camera_models import CameraIntrinsics, CameraModel, ProjectionKind
from fisheye3d.errors import InvalidFovError

TABLE_MAGIC = b"FRMP"
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class FovSpec:
    """Horizontal and vertical field of view, radians."""

    h_fov: float
    v_fov: float

    def __post_init__(self):
        if not 0 < self.h_fov <= 2 * math.pi:
            raise InvalidFovError(f"horizontal FoV must lie in (0, 2*pi], got {self.h_fov}")
        if not 0 < self.v_fov < math.pi:
            raise InvalidFovError(f"vertical FoV must lie in (0, pi), got {self.v_fov}")

    @classmethod
    def from_degrees(cls, h_deg: float, v_deg: float) -> "FovSpec":
        return cls(math.radians(h_deg), math.radians(v_deg))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def cylindrical_size_for_fov(intr: CameraIntrinsics, fov: FovSpec) -> Tuple[int, int]:
    """Cylindrical image size covering ``fov``: ``W = fx * dphi``, ``H = 2 fy tan(dpsi / 2)``.

    Raises:
        InvalidFovError: if either side rounds to less than one pixel.
    """
    w = _round_half_up(intr.fx * fov.h_fov)
    h = _round_half_up(2 * intr.fy * math.tan(fov.v_fov / 2))
    if w < 1 or h < 1:
        raise InvalidFovError(f"FoV {fov} yields an empty {w}x{h} image")
    return w, h


def cylindrical_camera_for_fov(intr: CameraIntrinsics, fov: FovSpec) -> CameraModel:
    """Cylindrical camera with the same focal lengths, centered on the optical axis."""
    w, h = cylindrical_size_for_fov(intr, fov)
    k = CameraIntrinsics(intr.fx, intr.fy, w / 2, h / 2)
    return CameraModel(ProjectionKind.CYLINDRICAL, k, (w, h), min(fov.h_fov / 2, math.pi))


def spherical_camera_for_fov(intr: CameraIntrinsics, fov: FovSpec) -> CameraModel:
    """Equirectangular camera with the same focal lengths: ``W = fx dphi``, ``H = fy dpsi``."""
    w = _round_half_up(intr.fx * fov.h_fov)
    h = _round_half_up(intr.fy * fov.v_fov)
    if w < 1 or h < 1:
        raise InvalidFovError(f"FoV {fov} yields an empty {w}x{h} image")
    k = CameraIntrinsics(intr.fx, intr.fy, w / 2, h / 2)
    return CameraModel(ProjectionKind.SPHERICAL, k, (w, h), min(fov.h_fov / 2, math.pi))


@dataclass(frozen=True, eq=False)
class RemapTable:
    """Per-destination-pixel source coordinates.

    ``src_coords`` has shape ``[dst_h, dst_w, 2]``; rows whose direction is
    not visible in the source camera hold NaN.
    """

    src_size: Tuple[int, int]
    dst_size: Tuple[int, int]
    src_coords: np.ndarray

    def __post_init__(self):
        w, h = self.dst_size
        if self.src_coords.shape != (h, w, 2):
            raise ValueError(
                f"src_coords shape {self.src_coords.shape} does not match dst size {self.dst_size}"
            )
        self.src_coords.setflags(write=False)

    @property
    def defined(self) -> np.ndarray:
        """Mask of destination pixels with a source coordinate."""
        return ~np.isnan(self.src_coords[..., 0])

    def valid_mask(self) -> np.ndarray:
        """Destination pixels whose source coordinate lies inside the source image."""
        w, h = self.src_size
        u, v = self.src_coords[..., 0], self.src_coords[..., 1]
        with np.errstate(invalid="ignore"):
            return (u >= 0) & (u <= w) & (v >= 0) & (v <= h)

    def save(self, path) -> None:
        dw, dh = self.dst_size
        sw, sh = self.src_size
        with open(path, "wb") as f:
            f.write(_HEADER.pack(TABLE_MAGIC, dw, dh, sw, sh))
            f.write(np.ascontiguousarray(self.src_coords, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "RemapTable":
        with open(path, "rb") as f:
            raw = f.read()
        magic, dw, dh, sw, sh = _HEADER.unpack_from(raw)
        if magic != TABLE_MAGIC:
            raise ValueError(f"{path}: not a remap table (magic {magic!r})")
        n = dw * dh * 2
        data = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size)
        return cls((sw, sh), (dw, dh), data.astype(float).reshape(dh, dw, 2))


def build_remap_table(src: CameraModel, dst: CameraModel, rows_per_chunk: int = 256) -> RemapTable:
    """Inverse mapping: for each ``dst`` pixel center, where to sample ``src``.

    Work is split into row blocks; each row's values depend only on that
    row, so the result is independent of ``rows_per_chunk``.
    """
    w, h = dst.image_size
    coords = np.empty((h, w, 2))
    u = np.arange(w) + 0.5
    for r0 in range(0, h, rows_per_chunk):
        r1 = min(h, r0 + rows_per_chunk)
        v = np.arange(r0, r1) + 0.5
        uu, vv = np.meshgrid(u, v)
        dirs, ok = dst.unproject_pixels(np.stack([uu, vv], axis=-1))
        uv, vis = src.project_points(np.where(ok[..., None], dirs, 1.0))
        uv[~(ok & vis)] = np.nan
        coords[r0:r1] = uv
    return RemapTable(src.image_size, dst.image_size, coords)


def remap(img: np.ndarray, table: RemapTable, return_mask: bool = False):
    """Bilinear resampling of ``img`` through ``table``.

    Destination pixels with no source coordinate, or whose coordinate falls
    outside the source image, are black. Samples within half a pixel of the
    border replicate the edge pixel.

    Args:
        img: ``uint8`` array ``[H, W]`` or ``[H, W, C]`` matching ``table.src_size``.
        table: Mapping built by :func:`build_remap_table`.
        return_mask: Also return the boolean validity mask.

    Returns:
        The warped image, or ``(image, mask)`` if ``return_mask``.
    """
    img = np.asarray(img)
    sw, sh = table.src_size
    if img.shape[:2] != (sh, sw):
        raise ValueError(f"image is {img.shape[1]}x{img.shape[0]}, table expects {sw}x{sh}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    squeeze = img.ndim == 2
    src = img[..., None] if squeeze else img

    mask = table.valid_mask()
    # Continuous coordinate -> array index: pixel centers sit at i + 0.5.
    x = np.where(mask, table.src_coords[..., 0] - 0.5, 0.0)
    y = np.where(mask, table.src_coords[..., 1] - 0.5, 0.0)
    x = np.clip(x, 0, sw - 1)
    y = np.clip(y, 0, sh - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]

    s = src.astype(np.float64)
    top = s[y0, x0] * (1 - fx) + s[y0, x1] * fx
    bot = s[y1, x0] * (1 - fx) + s[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    out[~mask] = 0
    if squeeze:
        out = out[..., 0]
    return (out, mask) if return_mask else out


def warp_image(img: np.ndarray, src: CameraModel, dst: CameraModel):
    """Convenience wrapper: build the table and remap, returning ``(image, mask)``."""
    return remap(img, build_remap_table(src, dst), return_mask=True)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.array(im)


def write_png(path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG")
