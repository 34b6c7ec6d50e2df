import math

import numpy as np
import pytest

from conftest import default_camera, look_at_pose, random_rotation
from ellipose.errors import (
    AmbiguousSolution,
    BehindCamera,
    DegenerateConfiguration,
    NoValidPose,
)
from ellipose.geometry import Ellipse, Ellipsoid, Pose, project_ellipsoid, rotation_z
from ellipose.metrics import pose_errors
from ellipose.pose import (
    Correspondence,
    EllipsoidCloud,
    PoseEstimate,
    RansacOptions,
    enumerate_associations,
    pose_from_two_pairs,
    position_from_pair,
    ransac_iterations,
    ransac_pose,
    refine_pose,
)
from ellipose.simulator import DEG, OrientationNoise, perturb_orientation


def sized_ellipsoid(rng, center_scale=0.5, lo=0.05, hi=0.12):
    center = rng.uniform(-center_scale, center_scale, size=3)
    axes = np.sort(rng.uniform(lo, hi, size=3))[::-1]
    axes[0] *= 1.3
    return Ellipsoid(center, axes, random_rotation(rng))


def camera_near(rng, target, dist=2.0):
    az = rng.uniform(0, 2 * math.pi)
    el = rng.uniform(0.25, 1.1)
    pos = np.asarray(target) + dist * np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )
    return look_at_pose(pos, target)


class TestPositionFromPair:
    def test_round_trip(self, rng):
        cam = default_camera()
        for _ in range(30):
            E = sized_ellipsoid(rng)
            pose = camera_near(rng, E.center + rng.uniform(-0.1, 0.1, 3))
            ell = project_ellipsoid(E, pose, cam)
            t = position_from_pair(Correspondence(ell, E, "x"), pose.R, cam)
            assert np.linalg.norm(t - pose.t) < 1e-6

    def test_tangent_cone_depth(self):
        # on-axis sphere: refined depth along the ray equals r / sin(alpha)
        cam = default_camera()
        E = Ellipsoid((0, 0, 0), (0.3, 0.3, 0.3), np.eye(3))
        pose = Pose(np.eye(3), (0.0, 0.0, 2.5))
        ell = project_ellipsoid(E, pose, cam)
        t = position_from_pair(Correspondence(ell, E, "s"), pose.R, cam)
        # from the projected circle radius (pixels): tan(alpha) = a / f
        alpha = math.atan2(ell.axes[0], 500.0)
        assert np.linalg.norm(t) == pytest.approx(0.3 / math.sin(alpha), abs=1e-6)
        assert np.linalg.norm(t - pose.t) < 1e-6

    def test_impossible_detection_behind_camera(self):
        cam = default_camera()
        E = Ellipsoid((0, 0, 0), (0.3, 0.3, 0.3), np.eye(3))
        # detection center outside the image and far larger than any valid
        # projection: the object would have to cross the principal plane
        ell = Ellipse((900.0, 700.0), (2500.0, 2200.0), 0.2)
        R = look_at_pose((2.0, 0.0, 0.5), (8.0, 0.0, 0.0)).R  # pointing away
        with pytest.raises(BehindCamera):
            position_from_pair(Correspondence(ell, E, "x"), R, cam)


class TestPoseFromTwoPairs:
    def test_round_trip(self, rng):
        cam = default_camera()
        for _ in range(10):
            E1 = sized_ellipsoid(rng)
            E2 = sized_ellipsoid(rng)
            while np.linalg.norm(E1.center - E2.center) < 0.3:
                E2 = sized_ellipsoid(rng)
            pose = camera_near(rng, 0.5 * (E1.center + E2.center), dist=2.2)
            c1 = Correspondence(project_ellipsoid(E1, pose, cam), E1, "a")
            c2 = Correspondence(project_ellipsoid(E2, pose, cam), E2, "b")
            est = pose_from_two_pairs(c1, c2, cam)
            rot, pos = pose_errors(est, pose)
            assert rot < 1e-4 and pos < 1e-4

    def test_coincident_centers_rejected(self, rng):
        cam = default_camera()
        E = sized_ellipsoid(rng)
        pose = camera_near(rng, E.center)
        ell = project_ellipsoid(E, pose, cam)
        c = Correspondence(ell, E, "a")
        with pytest.raises(DegenerateConfiguration):
            pose_from_two_pairs(c, c, cam)

    def test_two_spheres_axially_ambiguous(self):
        # two spheres share a rotational symmetry about the line joining
        # their centers: the pose is only defined up to that rotation
        cam = default_camera()
        E1 = Ellipsoid((0.4, 0.0, 0.0), (0.1, 0.1, 0.1), np.eye(3))
        E2 = Ellipsoid((-0.4, 0.0, 0.0), (0.15, 0.15, 0.15), np.eye(3))
        pose = look_at_pose((1.2, 1.5, 1.0), (0.0, 0.0, 0.0))
        c1 = Correspondence(project_ellipsoid(E1, pose, cam), E1, "a")
        c2 = Correspondence(project_ellipsoid(E2, pose, cam), E2, "b")
        with pytest.raises(AmbiguousSolution) as ei:
            pose_from_two_pairs(c1, c2, cam)
        assert len(ei.value.candidates) == 2


class TestRefinePose:
    def _scene(self, rng, n=4):
        cam = default_camera()
        objs = [sized_ellipsoid(rng, center_scale=0.4) for _ in range(n)]
        pose = camera_near(rng, (0.0, 0.0, 0.0), dist=2.0)
        corrs = [
            Correspondence(project_ellipsoid(E, pose, cam), E, f"o{i}")
            for i, E in enumerate(objs)
        ]
        return cam, pose, corrs

    def test_stationary_at_ground_truth(self, rng):
        cam, pose, corrs = self._scene(rng)
        out = refine_pose(pose, corrs, cam)
        assert out.converged
        rot, pos = pose_errors(out.pose, pose)
        assert rot < 1e-10 and pos < 1e-10

    def test_recovers_from_perturbation(self, rng):
        cam, pose, corrs = self._scene(rng, n=4)
        R0 = rotation_z(2.0 * DEG) @ pose.R
        p0 = Pose(R0, pose.t + np.array([0.02, -0.01, 0.015]))
        out = refine_pose(p0, corrs, cam, max_iter=100)
        rot, pos = pose_errors(out.pose, pose)
        assert rot < 1e-5 and pos < 1e-5

    def test_costs_monotone(self, rng):
        cam, pose, corrs = self._scene(rng, n=3)
        p0 = Pose(rotation_z(3.0 * DEG) @ pose.R, pose.t + 0.03)
        out = refine_pose(p0, corrs, cam)
        assert all(a >= b for a, b in zip(out.costs, out.costs[1:]))

    def test_single_correspondence_cost_decreases(self, rng):
        cam, pose, corrs = self._scene(rng, n=1)
        p0 = Pose(rotation_z(2.0 * DEG) @ pose.R, pose.t + 0.02)
        out = refine_pose(p0, corrs, cam)
        assert out.costs[-1] < out.costs[0]

    def test_empty_rejected(self, rng):
        cam, pose, _ = self._scene(rng, n=1)
        with pytest.raises(ValueError):
            refine_pose(pose, [], cam)


class TestAssociations:
    def _cloud(self, rng, labels):
        return EllipsoidCloud(
            tuple((l, sized_ellipsoid(rng)) for l in labels), allow_duplicate_labels=True
        )

    def test_one_to_one(self, rng):
        cloud = self._cloud(rng, ["a"])
        dets = [("a", Ellipse((0, 0), (2, 1), 0.0))]
        assert len(enumerate_associations(dets, cloud)) == 1

    def test_two_by_two(self, rng):
        cloud = self._cloud(rng, ["duck", "duck"])
        e = Ellipse((0, 0), (2, 1), 0.0)
        dets = [("duck", e), ("duck", e)]
        assert len(enumerate_associations(dets, cloud)) == 4

    def test_unknown_label_ignored(self, rng):
        cloud = self._cloud(rng, ["a"])
        dets = [("b", Ellipse((0, 0), (2, 1), 0.0))]
        assert enumerate_associations(dets, cloud) == []


def board_scene(rng, n=6):
    objs = []
    for i in range(n):
        az = 2 * math.pi * i / n
        center = np.array([0.25 * math.cos(az), 0.25 * math.sin(az), 0.05])
        axes = np.sort(rng.uniform(0.04, 0.1, size=3))[::-1]
        objs.append((f"obj{i}", Ellipsoid(center, axes, random_rotation(rng))))
    return EllipsoidCloud(tuple(objs))


class TestRansac:
    def test_known_orientation_with_noise(self, rng):
        cam = default_camera()
        cloud = board_scene(rng)
        pose = camera_near(rng, (0, 0, 0), dist=1.8)
        dets = [
            (l, project_ellipsoid(E, pose, cam)) for l, E in cloud.entries
        ]
        R_noisy = perturb_orientation(pose.R, OrientationNoise(2.0 * DEG), rng)
        opts = RansacOptions(
            mode="orientation_known", rotation=R_noisy, iterations=10,
            inlier_iou_threshold=0.75, seed=4,
        )
        est = ransac_pose(dets, cloud, cam, opts)
        assert len(est.inliers) == 6
        _, pos = pose_errors(est.pose, pose)
        assert pos < 0.02  # far below the object scale

    def test_outlier_rejection(self, rng):
        cam = default_camera()
        cloud = board_scene(rng)
        pose = camera_near(rng, (0, 0, 0), dist=1.8)
        dets = []
        for i, (l, E) in enumerate(cloud.entries):
            e = project_ellipsoid(E, pose, cam)
            if i < 2:  # swap labels of the first two detections
                l = cloud.entries[1 - i][0]
            dets.append((l, e))
        opts = RansacOptions(
            mode="orientation_known", rotation=pose.R, iterations=24, seed=9,
        )
        est = ransac_pose(dets, cloud, cam, opts)
        rot, pos = pose_errors(est.pose, pose)
        assert pos < 1e-4
        assert len(est.inliers) == 4
        labels = [l for l, _ in dets]
        assert all(labels[i] == f"obj{i}" for i in est.inliers)

    def test_full_mode(self, rng):
        cam = default_camera()
        cloud = board_scene(rng, n=4)
        pose = camera_near(rng, (0, 0, 0), dist=2.0)
        dets = [(l, project_ellipsoid(E, pose, cam)) for l, E in cloud.entries]
        opts = RansacOptions(mode="full", iterations=6, seed=3)
        est = ransac_pose(dets, cloud, cam, opts)
        rot, pos = pose_errors(est.pose, pose)
        assert rot < 1e-4 and pos < 1e-4
        assert len(est.inliers) == 4

    def test_zero_correspondences(self, rng):
        cam = default_camera()
        cloud = board_scene(rng)
        with pytest.raises(NoValidPose):
            ransac_pose([], cloud, cam, RansacOptions(rotation=np.eye(3)))

    def test_deterministic(self, rng):
        cam = default_camera()
        cloud = board_scene(rng)
        pose = camera_near(rng, (0, 0, 0), dist=1.8)
        dets = [(l, project_ellipsoid(E, pose, cam)) for l, E in cloud.entries]
        opts = RansacOptions(mode="orientation_known", rotation=pose.R, iterations=8, seed=11)
        a = ransac_pose(dets, cloud, cam, opts)
        b = ransac_pose(dets, cloud, cam, opts)
        assert repr(a.pose.R.tolist()) == repr(b.pose.R.tolist())
        assert repr(a.pose.t.tolist()) == repr(b.pose.t.tolist())
        assert a.inliers == b.inliers and a.score == b.score

    def test_consensus_with_half_outliers(self, rng):
        # >= 50% inliers: coverage bound at 99% says 7 single-pair draws
        cam = default_camera()
        n_trials, hits = 20, 0
        iters = ransac_iterations(0.5, 1, 0.99)
        assert iters == 7
        for trial in range(n_trials):
            cloud = board_scene(rng)
            pose = camera_near(rng, (0, 0, 0), dist=1.8)
            dets = []
            for i, (l, E) in enumerate(cloud.entries):
                e = project_ellipsoid(E, pose, cam)
                if i % 2 == 1:  # 3 of 6 labels corrupted
                    l = cloud.entries[(i + 1) % 6][0]
                dets.append((l, e))
            est = ransac_pose(
                dets, cloud, cam,
                RansacOptions(mode="orientation_known", rotation=pose.R,
                              iterations=2 * iters, seed=trial),
            )
            _, pos = pose_errors(est.pose, pose)
            hits += pos < 1e-3
        assert hits >= 19


def test_ransac_iterations_bound():
    assert ransac_iterations(1.0, 2) == 1
    assert ransac_iterations(0.5, 2, 0.99) == math.ceil(math.log(0.01) / math.log(0.75))


def test_pose_estimate_validation(rng):
    pose = Pose(np.eye(3), (0, 0, 0))
    with pytest.raises(ValueError):
        PoseEstimate(pose, (), 0.5)
    with pytest.raises(ValueError):
        PoseEstimate(pose, (0,), 1.5)
