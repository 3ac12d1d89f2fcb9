import math

import numpy as np
import pytest

from fisheye3d.camera_models import CameraIntrinsics
from fisheye3d.errors import InvalidFovError
from fisheye3d.warp_engine import (
    FovSpec,
    RemapTable,
    build_remap_table,
    cylindrical_camera_for_fov,
    cylindrical_size_for_fov,
    read_png,
    remap,
    spherical_camera_for_fov,
    warp_image,
    write_png,
)

from conftest import INTR, make_camera, random_directions


def _bilinear(table, coords):
    """Sample a coordinate table at continuous destination positions."""
    c = table.src_coords
    h, w = c.shape[:2]
    x = coords[:, 0] - 0.5
    y = coords[:, 1] - 0.5
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = c[y0, x0] * (1 - fx) + c[y0, x1] * fx
    bot = c[y1, x0] * (1 - fx) + c[y1, x1] * fx
    return top * (1 - fy) + bot * fy


class TestSizing:
    def test_width_half_turn(self):
        assert cylindrical_size_for_fov(INTR, FovSpec(math.pi, math.pi / 2)) == (1571, 1000)

    def test_tiny_fov_rejected(self):
        with pytest.raises(InvalidFovError):
            cylindrical_size_for_fov(INTR, FovSpec(1e-4, 1.0))

    def test_vertical_limit(self):
        with pytest.raises(InvalidFovError):
            FovSpec(1.0, math.pi)

    def test_camera_centered(self):
        cam = cylindrical_camera_for_fov(INTR, FovSpec(math.pi, math.pi / 2))
        assert (cam.intrinsics.u0, cam.intrinsics.v0) == (785.5, 500.0)
        assert cam.intrinsics.fx == INTR.fx
        sph = spherical_camera_for_fov(INTR, FovSpec(math.pi, math.pi / 2))
        assert sph.image_size == (1571, 785)


class TestBuildTable:
    def test_identity(self, any_camera):
        t = build_remap_table(any_camera, any_camera)
        w, h = any_camera.image_size
        uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
        ok = t.defined
        assert ok.mean() > 0.5
        np.testing.assert_allclose(t.src_coords[ok], np.stack([uu, vv], -1)[ok], atol=1e-9)

    def test_fisheye_to_cylindrical_center(self):
        fish = make_camera("fisheye", size=(1280, 720))
        cyl = make_camera("cylindrical", size=(1280, 720))
        t = build_remap_table(fish, cyl)
        np.testing.assert_allclose(t.src_coords[360, 640], [640.5, 360.5], atol=1e-9)

    def test_pinhole_source_sentinel_beyond_ninety(self):
        # A fisheye view resampled from a pinhole image: rays at or beyond
        # 90 degrees from the axis have no pinhole pixel.
        fish = make_camera("fisheye", size=(2000, 720), intr=CameraIntrinsics(500, 500, 1000, 360))
        pin = make_camera("pinhole")
        t = build_remap_table(pin, fish)
        theta = np.abs(np.arange(2000) + 0.5 - 1000) / 500
        row = t.defined[360]
        assert not row[theta >= math.pi / 2].any()
        assert row[theta < math.pi / 2 - 0.01].all()

    def test_chunking_invariant(self):
        fish = make_camera("fisheye")
        cyl = make_camera("cylindrical")
        a = build_remap_table(fish, cyl, rows_per_chunk=7).src_coords
        b = build_remap_table(fish, cyl, rows_per_chunk=720).src_coords
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("src_kind,dst_kind", [("fisheye", "cylindrical"), ("fisheye", "spherical"),
                                                   ("spherical", "cylindrical"), ("cylindrical", "pinhole")])
    def test_warp_consistency(self, src_kind, dst_kind, rng):
        src = make_camera(src_kind)
        dst = make_camera(dst_kind)
        t = build_remap_table(src, dst)
        d = random_directions(rng, dst, 4000)
        uv_dst, ok_d = dst.project_points(d)
        uv_src, ok_s = src.project_points(d)
        inner = ok_d & ok_s & (uv_dst[:, 0] > 1) & (uv_dst[:, 0] < 1279) & (uv_dst[:, 1] > 1) & (uv_dst[:, 1] < 719)
        mapped = _bilinear(t, uv_dst[inner])
        fine = np.all(np.isfinite(mapped), axis=1)
        assert fine.sum() > 500
        err = np.linalg.norm(mapped[fine] - uv_src[inner][fine], axis=1)
        assert err.max() < 0.5

    def test_composition(self):
        a = make_camera("fisheye")
        b = make_camera("cylindrical")
        ab = build_remap_table(a, b)  # B pixels -> A coords
        ba = build_remap_table(b, a)  # A pixels -> B coords
        w, h = a.image_size
        uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
        ok = ba.defined
        # Keep A pixels whose B coordinate is well inside B.
        bc = ba.src_coords
        with np.errstate(invalid="ignore"):
            ok &= (bc[..., 0] > 2) & (bc[..., 0] < w - 2) & (bc[..., 1] > 2) & (bc[..., 1] < h - 2)
        back = _bilinear(ab, bc[ok])
        fine = np.all(np.isfinite(back), axis=1)
        err = np.abs(back[fine] - np.stack([uu, vv], -1)[ok][fine])
        assert err.mean() < 1.0


class TestRemap:
    def test_identity_byte_identical(self, rng):
        cam = make_camera("fisheye")
        img = rng.integers(0, 256, (720, 1280, 3), dtype=np.uint8)
        out, mask = remap(img, build_remap_table(cam, cam), return_mask=True)
        assert np.array_equal(out[mask], img[mask])
        # Identity fisheye covers everything within the image circle.
        assert mask[360, 640]

    def test_pinhole_identity_full_image(self, rng):
        cam = make_camera("pinhole")
        img = rng.integers(0, 256, (720, 1280), dtype=np.uint8)
        out = remap(img, build_remap_table(cam, cam))
        assert out.tobytes() == img.tobytes()

    def test_constant_color(self):
        fish = make_camera("fisheye")
        cyl = make_camera("cylindrical")
        img = np.full((720, 1280, 3), (17, 200, 93), dtype=np.uint8)
        out, mask = warp_image(img, fish, cyl)
        assert mask.any()
        assert np.all(out[mask] == (17, 200, 93))
        assert np.all(out[~mask] == 0)

    def test_size_mismatch(self):
        cam = make_camera("pinhole")
        with pytest.raises(ValueError):
            remap(np.zeros((10, 10), np.uint8), build_remap_table(cam, cam))

    def test_deterministic(self, rng):
        fish = make_camera("fisheye")
        cyl = make_camera("cylindrical")
        img = rng.integers(0, 256, (720, 1280, 3), dtype=np.uint8)
        a = remap(img, build_remap_table(fish, cyl, rows_per_chunk=13))
        b = remap(img, build_remap_table(fish, cyl))
        assert a.tobytes() == b.tobytes()

    def test_bilinear_midpoint(self):
        coords = np.array([[[1.0, 0.5]]])
        t = RemapTable((2, 1), (1, 1), coords)
        img = np.array([[10, 21]], dtype=np.uint8)
        assert remap(img, t)[0, 0] == 16  # rint(15.5) rounds to even


class TestTableFile:
    def test_round_trip(self, tmp_path):
        t = build_remap_table(make_camera("fisheye"), make_camera("cylindrical"))
        path = tmp_path / "t.bin"
        t.save(path)
        back = RemapTable.load(path)
        assert back.src_size == t.src_size and back.dst_size == t.dst_size
        np.testing.assert_array_equal(back.defined, t.defined)
        ok = t.defined
        np.testing.assert_allclose(back.src_coords[ok], t.src_coords[ok], atol=1e-3)
        assert path.stat().st_size == 20 + 1280 * 720 * 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(b"XXXX" + bytes(16))
        with pytest.raises(ValueError):
            RemapTable.load(path)


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    write_png(tmp_path / "a.png", img)
    assert np.array_equal(read_png(tmp_path / "a.png"), img)

