import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisheye3d.box3d import (
    FACES,
    Box2D,
    Box3D,
    VirtualDetection,
    box_from_record,
    box_to_record,
    corners,
    detection_from_record,
    detection_to_box,
    detection_to_record,
    edge_points,
    project_box,
)
from fisheye3d.camera_models import CameraIntrinsics
from fisheye3d.errors import InvalidDepthError, NotVisibleError
from fisheye3d.synth_scene import NoiseSpec, Scene, mock_detect
from fisheye3d.virtual_transform import InterpretationMode

from conftest import INTR, make_camera, rotation_about_y
from oracles import box_rotation_matrix


class TestBoxTypes:
    def test_dims_positive(self):
        with pytest.raises(ValueError):
            Box3D([0, 0, 5], (1, 0, 1))

    def test_yaw_wrapped(self):
        assert Box3D([0, 0, 5], (1, 1, 1), yaw=-math.pi).yaw == math.pi
        assert Box3D([0, 0, 5], (1, 1, 1), yaw=3 * math.pi / 2).yaw == pytest.approx(-math.pi / 2)

    def test_box2d_order(self):
        with pytest.raises(ValueError):
            Box2D(5, 0, 4, 1)

    def test_detection_validation(self):
        b = Box2D(0, 0, 1, 1)
        with pytest.raises(InvalidDepthError):
            VirtualDetection(b, (0, 0), 0.0, (1, 1, 1), 0.0)
        with pytest.raises(ValueError):
            VirtualDetection(b, (0, 0), 1.0, (1, 1, 1), 0.0, score=1.5)


class TestCorners:
    def test_unit_cube(self):
        c = corners(Box3D([0, 0, 10], (1, 1, 1)))
        expected = {(x, y, 10 + z) for x, y, z in itertools.product((-0.5, 0.5), repeat=3)}
        assert {tuple(p) for p in c} == expected

    def test_quarter_turn_swaps_width_and_length(self):
        b = Box3D([0, 0, 0], (2, 1, 4), yaw=math.pi / 2)
        c = corners(b)
        np.testing.assert_allclose(np.ptp(c, axis=0), [4, 1, 2], atol=1e-12)

    @pytest.mark.parametrize("yaw", [math.pi / 4, -1.1, 2.9])
    def test_against_rotation_oracle(self, yaw):
        b = Box3D([1, -2, 7], (1.5, 1.2, 3.7), yaw=yaw)
        signs = np.array(list(itertools.product((-1, 1), repeat=3)), dtype=float)
        ref = (signs * np.array(b.dims) / 2) @ box_rotation_matrix(yaw).T + b.center
        got = corners(b)
        for p in ref:
            assert np.min(np.linalg.norm(got - p, axis=1)) < 1e-12

    def test_pi_over_four_offset(self):
        c = corners(Box3D([0, 0, 0], (1, 1, 1), yaw=math.pi / 4))
        assert np.max(np.abs(c[:, 0])) == pytest.approx(0.5 * math.sqrt(2), abs=1e-12)

    def test_face_normals_point_outward(self):
        b = Box3D([0.3, 0.1, 6], (2, 1, 3), yaw=0.7)
        c = corners(b)
        for a, bb, _, d in FACES:
            n = np.cross(c[bb] - c[a], c[d] - c[a])
            face_center = c[[a, bb, d]].mean(axis=0)
            assert np.dot(n, face_center - b.center) > 0

    def test_edge_samples(self):
        e = edge_points(Box3D([0, 0, 5], (1, 1, 1)), 16)
        assert e.shape == (12, 16, 3)
        lengths = np.linalg.norm(e[:, -1] - e[:, 0], axis=1)
        np.testing.assert_allclose(lengths, 1.0)


class TestProjectBox:
    def test_pinhole_width(self):
        cam = make_camera("pinhole", CameraIntrinsics(1000, 1000, 640, 360))
        # Thin camera-facing unit square.
        b = project_box(Box3D([0, 0, 10], (1, 1, 1e-9)), cam)
        assert b.width == pytest.approx(100.0, abs=1e-6)
        assert b.height == pytest.approx(100.0, abs=1e-6)

    @pytest.mark.parametrize("kind", ["cylindrical", "spherical"])
    def test_rotation_shifts_horizontally(self, kind):
        cam = make_camera(kind, size=(4000, 1000))
        b = Box3D([0.5, 0.7, 8], (2, 1.5, 4), yaw=0.3)
        before = project_box(b, cam)
        for delta in (0.4, -1.2):
            r = rotation_about_y(delta)
            moved = Box3D(r @ b.center, b.dims, yaw=b.yaw + delta)
            after = project_box(moved, cam)
            assert after.width == pytest.approx(before.width, abs=1e-9)
            assert after.height == pytest.approx(before.height, abs=1e-9)
            assert after.u_min - before.u_min == pytest.approx(500 * delta, abs=1e-9)
            assert after.v_min == pytest.approx(before.v_min, abs=1e-9)

    def test_fisheye_needs_edge_samples(self):
        cam = make_camera("fisheye")
        b = Box3D([0, 0, 3], (4, 1, 1))
        corner_only = project_box(b, cam, n=2)
        sampled = project_box(b, cam)
        # Bottom and top edges bulge outward between the corners.
        assert sampled.height - corner_only.height > 5.0

    def test_not_visible(self):
        with pytest.raises(NotVisibleError):
            project_box(Box3D([0, 0, -10], (1, 1, 1)), make_camera("pinhole"))


def _det(u, v, depth, alpha=0.0, dims=(2, 1.5, 4)):
    return VirtualDetection(Box2D(0, 0, 1, 1), (u, v), depth, dims, alpha)


class TestDetectionToBox:
    def test_on_axis(self):
        cam = make_camera("cylindrical")
        b = detection_to_box(_det(INTR.u0, INTR.v0, 10.0), cam, InterpretationMode.CYLINDRICAL)
        np.testing.assert_allclose(b.center, [0, 0, 10], atol=1e-15)
        assert b.yaw == 0
        assert b.dims == (2, 1.5, 4)

    def _gt_scene(self, cam_kind):
        cam = make_camera(cam_kind, size=(4000, 2000), intr=CameraIntrinsics(500, 500, 2000, 1000))
        gt = Box3D([8.660254037844387, 0, 5], (2, 1.5, 4), yaw=0.3)
        return cam, gt, Scene({cam_kind: cam}, [gt], 0)

    @pytest.mark.parametrize("kind", ["cylindrical", "spherical"])
    def test_mock_round_trip(self, kind):
        cam, gt, scene = self._gt_scene(kind)
        (det,) = mock_detect(scene, cam, kind)
        b = detection_to_box(det, cam, kind)
        assert np.linalg.norm(b.center - gt.center) < 1e-6
        assert abs(b.yaw - gt.yaw) < 1e-9
        assert b.dims == gt.dims

    def test_naive_sixty_degrees(self):
        cam, gt, scene = self._gt_scene("cylindrical")
        (det,) = mock_detect(scene, cam, "naive")
        b = detection_to_box(det, cam, "naive")
        np.testing.assert_allclose(b.center, [17.320508075688775, 0, 10], atol=1e-6)
        assert np.linalg.norm(b.center - gt.center) == pytest.approx(10.0, abs=1e-6)
        # Naive keeps the true azimuth, so yaw survives.
        assert b.yaw == pytest.approx(gt.yaw, abs=1e-9)

    def test_noise_degrades_monotonically(self):
        cam, gt, scene = self._gt_scene("cylindrical")
        medians = []
        for sigma in (0.0, 0.25, 0.5, 1.0):
            errs = []
            for seed in range(200):
                (det,) = mock_detect(scene, cam, "cylindrical", NoiseSpec(depth=sigma), seed=seed)
                errs.append(np.linalg.norm(detection_to_box(det, cam, "cylindrical").center - gt.center))
            medians.append(np.median(errs))
        assert medians[0] < 1e-9
        assert all(a <= b for a, b in zip(medians, medians[1:]))

    @settings(max_examples=40, deadline=None)
    @given(
        phi=st.floats(-math.radians(85), math.radians(85)),
        rho=st.floats(2, 60),
        y=st.floats(-3, 3),
        yaw=st.floats(-math.pi, math.pi),
        kind=st.sampled_from(["cylindrical", "spherical"]),
    )
    def test_round_trip_property(self, phi, rho, y, yaw, kind):
        cam = make_camera(kind, size=(4000, 4000), intr=CameraIntrinsics(500, 500, 2000, 2000))
        gt = Box3D([rho * math.sin(phi), y, rho * math.cos(phi)], (1.8, 1.5, 4.2), yaw=yaw)
        dets = mock_detect(Scene({kind: cam}, [gt], 0), cam, kind)
        assert len(dets) == 1
        b = detection_to_box(dets[0], cam, kind)
        assert np.linalg.norm(b.center - gt.center) < 1e-6
        assert math.cos(b.yaw - gt.yaw) > 1 - 1e-15


class TestRecords:
    def test_detection_round_trip(self):
        det = VirtualDetection(Box2D(1, 2, 30, 40), (15.5, 20.25), 12.0, (1.8, 1.5, 4.0), 0.25, 0.9, 2, "img7")
        back = detection_from_record(detection_to_record(det))
        assert back.center2d == det.center2d
        assert back.alpha == pytest.approx(det.alpha, abs=1e-15)
        assert (back.box2d, back.dims, back.score, back.class_id, back.image_id) == (
            det.box2d, det.dims, det.score, det.class_id, det.image_id,
        )

    def test_detection_alpha_in_degrees(self):
        rec = detection_to_record(_det(0, 0, 5.0, alpha=math.pi / 2))
        assert rec["alpha"] == pytest.approx(90.0)

    def test_box_round_trip(self):
        b = Box3D([1, 2, 3], (1, 2, 3), yaw=0.5, class_id=1, score=0.7, image_id="x", box2d=Box2D(0, 0, 5, 5))
        back = box_from_record(box_to_record(b))
        np.testing.assert_array_equal(back.center, b.center)
        assert back.yaw == pytest.approx(0.5, abs=1e-15)
        assert back.box2d == b.box2d

    @pytest.mark.parametrize(
        "rec",
        [{}, {"box2d": [0, 0, 1], "center2d": [0, 0], "depth_out": 1, "dims": [1, 1, 1], "alpha": 0},
         {"box2d": [0, 0, 1, 1], "center2d": [0, 0], "depth_out": -1, "dims": [1, 1, 1], "alpha": 0},
         {"box2d": [0, 0, 1, 1], "center2d": [0, 0], "depth_out": 1, "dims": "abc", "alpha": 0}],
    )
    def test_malformed_detection(self, rec):
        with pytest.raises(ValueError):
            detection_from_record(rec)
