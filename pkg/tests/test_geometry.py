"""Projection and root-centering tests.

The projection is checked against hand-computed pinhole values and an
independent 3x4-matrix-multiply-then-divide oracle.
"""

from __future__ import annotations

import numpy as np
import pytest

from poselift.errors import ConfigError, NonPositiveDepth
from poselift.geometry import CameraModel, Frame, load_topology, project, root_center


def _ident_cam(fx=1000.0, fy=1000.0, cx=500.0, cy=500.0) -> CameraModel:
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy)


def _matrix_projection_oracle(points: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Independent route: full 3x4 matrix multiply, then perspective divide."""
    K = np.array([[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]])
    Rt = np.hstack([cam.rotation, cam.translation[:, None]])
    P = K @ Rt
    homo = np.hstack([points, np.ones((points.shape[0], 1))])
    proj = (P @ homo.T).T
    return proj[:, :2] / proj[:, 2:3]


class TestProject:
    def test_optical_axis_point_maps_to_principal_point(self):
        pose = np.array([[0.0, 0.0, 2.0]])
        out = project(np.repeat(pose, 15, axis=0), _ident_cam(), Frame.CAMERA)
        np.testing.assert_array_equal(out, np.full((15, 2), 500.0))

    def test_hand_computed_off_axis_point(self):
        # u = 1000 * 0.1 / 2 + 500 = 550
        pose = np.array([[0.1, 0.0, 2.0]])
        out = project(pose, _ident_cam(), Frame.CAMERA)
        np.testing.assert_allclose(out, [[550.0, 500.0]], atol=1e-12)

    def test_matches_matrix_form_oracle_on_random_poses(self):
        rng = np.random.default_rng(42)
        checked = 0
        for _ in range(1000):
            cam_pts = rng.normal(size=(17, 3))
            cam_pts[:, 2] = rng.uniform(1.0, 6.0, size=17)
            q = rng.normal(size=(3, 3))
            R, _ = np.linalg.qr(q)
            if np.linalg.det(R) < 0:
                R[:, 0] *= -1
            t = rng.normal(size=3) * 0.1
            world = (cam_pts - t) @ R  # chosen so the camera-frame depth stays safe
            cam = CameraModel(fx=1100.0, fy=1150.0, cx=490.0, cy=510.0,
                              rotation=R, translation=t)
            ours = project(world, cam, Frame.WORLD)
            oracle = _matrix_projection_oracle(world, cam)
            np.testing.assert_allclose(ours, oracle, atol=1e-9)
            checked += 1
        assert checked == 1000

    def test_scale_invariance_per_camera_frame_point(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(17, 3))
        pts[:, 2] = rng.uniform(1.0, 5.0, size=17)
        cam = _ident_cam()
        base = project(pts, cam, Frame.CAMERA)
        scaled = project(pts * 3.7, cam, Frame.CAMERA)
        np.testing.assert_allclose(base, scaled, atol=1e-9)

    def test_behind_camera_raises_with_joint_index(self):
        pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, -1.0], [0.0, 0.0, 3.0]])
        with pytest.raises(NonPositiveDepth) as excinfo:
            project(pts, _ident_cam(), Frame.CAMERA)
        assert excinfo.value.joint_index == 1

    def test_depth_guard_at_1e9(self):
        pts = np.array([[0.0, 0.0, 1e-10]])
        with pytest.raises(NonPositiveDepth):
            project(pts, _ident_cam(), Frame.CAMERA)


class TestRootCenter:
    def setup_method(self):
        self.topo = load_topology("h36m17")

    def test_already_rooted_is_unchanged(self):
        rng = np.random.default_rng(0)
        pose = rng.normal(size=(17, 3))
        pose[self.topo.root_index] = 0.0
        np.testing.assert_array_equal(root_center(pose, self.topo), pose)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        pose = rng.normal(size=(17, 3))
        shifted = pose + np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(
            root_center(shifted, self.topo), root_center(pose, self.topo), atol=1e-12)

    def test_direct_subtraction_oracle(self):
        rng = np.random.default_rng(2)
        pose = rng.normal(size=(17, 3))
        out = root_center(pose, self.topo)
        np.testing.assert_array_equal(out[self.topo.root_index], np.zeros(3))
        # pairwise differences preserved
        for i in range(17):
            for j in range(17):
                np.testing.assert_allclose(out[i] - out[j], pose[i] - pose[j], atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        pose = rng.normal(size=(17, 3))
        once = root_center(pose, self.topo)
        np.testing.assert_array_equal(root_center(once, self.topo), once)


class TestCameraModel:
    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(ConfigError):
            CameraModel(fx=1.0, fy=1.0, cx=0.0, cy=0.0,
                        rotation=np.eye(3) * 1.001, translation=np.zeros(3))

    def test_rejects_non_positive_focal(self):
        with pytest.raises(ConfigError):
            CameraModel(fx=-1.0, fy=1.0, cx=0.0, cy=0.0)


class TestTopology:
    def test_presets_load_and_validate(self):
        for name, n in (("h36m17", 17), ("humaneva15", 15)):
            topo = load_topology(name)
            assert topo.joint_count == n
            assert topo.parent[topo.root_index] == -1

    def test_loads_from_json_file(self, tmp_path):
        import json

        topo = load_topology("humaneva15")
        path = tmp_path / "custom.json"
        path.write_text(json.dumps({
            "name": "custom",
            "joint_names": list(topo.joint_names),
            "parent": list(topo.parent),
            "root_index": topo.root_index,
            "head_segment": list(topo.head_segment),
            "limb_segments": [list(s) for s in topo.limb_segments],
            "torso_quad": list(topo.torso_quad),
        }))
        loaded = load_topology(str(path))
        assert loaded.joint_names == topo.joint_names
        assert loaded.name == "custom"

    def test_unknown_name_raises(self):
        with pytest.raises(ConfigError):
            load_topology("nope")
