import math

import numpy as np
import pytest

from conftest import default_camera, look_at_pose, random_rotation
from ellipose.errors import BehindCamera, EmptyInput, EmptyPointSet
from ellipose.geometry import Ellipse, Pose, rotation_z
from ellipose.metrics import (
    add_error,
    ellipse_iou,
    point_set_diameter,
    pose_error_report,
    pose_errors,
    reprojection_error,
    tabulate,
)


class TestPoseErrors:
    def test_identical(self, rng):
        p = Pose(random_rotation(rng), rng.normal(size=3))
        assert pose_errors(p, p) == (0.0, 0.0)

    def test_half_turn(self):
        gt = Pose(np.eye(3), (0, 0, 0))
        est = Pose(rotation_z(math.pi), (0, 0, 0))
        rot, _ = pose_errors(est, gt)
        assert rot == pytest.approx(math.pi)

    def test_camera_center_distance(self):
        gt = look_at_pose((1.0, 0.0, 0.0), (0, 0, 0))
        est = look_at_pose((1.0, 0.0, 0.05), (0, 0, 0))
        _, pos = pose_errors(est, gt)
        assert pos == pytest.approx(0.05, rel=1e-9)


class TestReprojection:
    def test_zero_for_identical(self, rng):
        cam = default_camera()
        pose = Pose(np.eye(3), (0, 0, 4.0))
        pts = rng.uniform(-0.5, 0.5, size=(50, 3))
        assert reprojection_error(pose, pose, cam, pts) == 0.0

    def test_first_order_pinhole(self):
        # camera shifted by delta in its image plane, points at depth z:
        # pixel displacement ~ f * delta / z
        cam = default_camera()
        z, delta = 4.0, 1e-3
        gt = Pose(np.eye(3), (0.0, 0.0, 0.0))
        est = Pose(np.eye(3), (delta, 0.0, 0.0))
        pts = np.array([[x, y, z] for x in (-0.2, 0.0, 0.2) for y in (-0.2, 0.2)])
        err = reprojection_error(est, gt, cam, pts)
        assert err == pytest.approx(500.0 * delta / z, rel=1e-6)

    def test_behind_camera(self):
        cam = default_camera()
        gt = Pose(np.eye(3), (0, 0, 0))
        with pytest.raises(BehindCamera):
            reprojection_error(gt, gt, cam, [[0.0, 0.0, -1.0]])


class TestAdd:
    def test_zero_and_translation(self, rng):
        pts = rng.uniform(-1, 1, size=(100, 3))
        gt = Pose(random_rotation(rng), rng.normal(size=3))
        assert add_error(gt, gt, pts) == 0.0
        est = Pose(gt.R, gt.t + np.array([1.0, 0.0, 0.0]))
        assert add_error(est, gt, pts) == pytest.approx(1.0, rel=1e-12)

    def test_empty(self):
        gt = Pose(np.eye(3), (0, 0, 0))
        with pytest.raises(EmptyPointSet):
            add_error(gt, gt, np.empty((0, 3)))

    def test_diameter_threshold(self, rng):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 0.5]], float)
        diam = point_set_diameter(pts)
        assert diam == pytest.approx(math.sqrt(5.0))
        gt = Pose(np.eye(3), (0, 0, 5.0))
        est = Pose(np.eye(3), gt.t + np.array([0.1 * diam, 0, 0]))
        rep = pose_error_report(est, gt, default_camera(), pts, add_frac=(0.1,))
        assert rep.passes["add<=10%diam"] is True
        est2 = Pose(np.eye(3), gt.t + np.array([0.11 * diam, 0, 0]))
        rep2 = pose_error_report(est2, gt, default_camera(), pts, add_frac=(0.1,))
        assert rep2.passes["add<=10%diam"] is False


class TestTabulate:
    def test_examples(self):
        assert tabulate([1.0, 2.0, 3.0], [2.0]) == [pytest.approx(200.0 / 3.0)]
        assert tabulate([1.0, 2.0, 3.0], [0.5]) == [0.0]
        assert tabulate([1.0, 2.0, 3.0], [3.0]) == [100.0]

    def test_monotone(self, rng):
        errors = rng.uniform(0, 10, size=200)
        taus = np.sort(rng.uniform(0, 10, size=20))
        out = tabulate(errors, taus)
        assert all(a <= b for a, b in zip(out, out[1:]))

    def test_empty(self):
        with pytest.raises(EmptyInput):
            tabulate([], [1.0])


class TestEllipseIoU:
    def test_identical(self):
        e = Ellipse((10, 20), (5, 2), 0.7)
        assert ellipse_iou(e, e) == pytest.approx(1.0, abs=0.005)

    def test_disjoint(self):
        a = Ellipse((0, 0), (1, 1), 0.0)
        b = Ellipse((10, 0), (1, 1), 0.0)
        assert ellipse_iou(a, b) == 0.0

    def test_concentric_circles(self):
        a = Ellipse((0, 0), (1, 1), 0.0)
        b = Ellipse((0, 0), (2, 2), 0.0)
        assert ellipse_iou(a, b) == pytest.approx(0.25, abs=0.01)

    def test_symmetry(self, rng):
        for _ in range(10):
            a = Ellipse(rng.uniform(-5, 5, 2), np.sort(rng.uniform(0.5, 4, 2))[::-1], rng.uniform(-1, 1))
            b = Ellipse(rng.uniform(-5, 5, 2), np.sort(rng.uniform(0.5, 4, 2))[::-1], rng.uniform(-1, 1))
            assert ellipse_iou(a, b) == pytest.approx(ellipse_iou(b, a), abs=1e-12)


class TestRigidInvariance:
    def test_common_rigid_transform(self, rng):
        # moving the world by G and composing both poses with G^-1 leaves
        # every metric unchanged
        cam = default_camera()
        pts = rng.uniform(-0.5, 0.5, size=(60, 3)) + np.array([0, 0, 0.0])
        gt = look_at_pose((2.0, 1.0, 1.5), (0, 0, 0))
        est = Pose(rotation_z(0.01) @ gt.R, gt.t + np.array([0.01, -0.02, 0.005]))
        G_R = random_rotation(rng)
        G_t = rng.normal(size=3)
        pts2 = pts @ G_R.T + G_t  # X' = G X
        gt2 = Pose(gt.R @ G_R.T, gt.t - gt.R @ G_R.T @ G_t)
        est2 = Pose(est.R @ G_R.T, est.t - est.R @ G_R.T @ G_t)
        assert pose_errors(est2, gt2)[0] == pytest.approx(pose_errors(est, gt)[0], abs=1e-9)
        assert pose_errors(est2, gt2)[1] == pytest.approx(pose_errors(est, gt)[1], abs=1e-9)
        assert add_error(est2, gt2, pts2) == pytest.approx(add_error(est, gt, pts), abs=1e-9)
        assert reprojection_error(est2, gt2, cam, pts2) == pytest.approx(
            reprojection_error(est, gt, cam, pts), abs=1e-6
        )
