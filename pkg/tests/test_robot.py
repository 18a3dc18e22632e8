import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from selfcollide.errors import DimensionMismatch, FormatError
from selfcollide.geometry import Pose, box_mesh
from selfcollide.robot import (
    Joint,
    RobotModel,
    build_desk_arm,
    default_mask,
    desk_arm,
    forward_kinematics,
    link_transforms,
    load_robot,
    make_link,
    save_robot,
    self_collision,
    self_collision_batch,
    self_collision_brute,
)


def homogeneous_fk(model, q):
    """4x4 matrix chain, rotation from a rotation vector."""
    out = [np.eye(4)]
    T = np.eye(4)
    for joint, angle in zip(model.joints, q):
        origin = np.eye(4)
        origin[:3, :3] = joint.origin.rotation
        origin[:3, 3] = joint.origin.translation
        spin = np.eye(4)
        spin[:3, :3] = Rotation.from_rotvec(joint.axis * angle).as_matrix()
        T = T @ origin @ spin
        out.append(T)
    return out


def three_link_chain(gap=1.0, reach=0.1):
    """Base box, a rod, and a box of height ``reach``; only pair (0, 2) is checked."""
    links = (
        make_link("a", box_mesh([-0.1, -0.1, 0.0], [0.1, 0.1, 0.1])),
        make_link("b", box_mesh([-0.02, -0.02, 0.0], [0.02, 0.02, gap])),
        make_link("c", box_mesh([-0.1, -0.1, 0.0], [0.1, 0.1, reach])),
    )
    joints = (
        Joint(0, [0, 0, 1], Pose.from_rpy(xyz=(0, 0, 0.1))),
        Joint(1, [1, 0, 0], Pose.from_rpy(xyz=(0, 0, gap))),
    )
    return RobotModel("chain", joints, links, ((0, 2),))


class TestForwardKinematics:
    def test_zero_config_composes_origins(self, arm):
        poses = forward_kinematics(arm, np.zeros(arm.dof))
        expected = Pose()
        np.testing.assert_array_equal(poses[0].rotation, np.eye(3))
        for k, joint in enumerate(arm.joints):
            expected = expected.compose(joint.origin)
            np.testing.assert_allclose(poses[k + 1].rotation, expected.rotation, atol=1e-15)
            np.testing.assert_allclose(poses[k + 1].translation, expected.translation, atol=1e-15)

    def test_quarter_turn(self):
        link = make_link("l", box_mesh([0, 0, 0], [1, 1, 1]))
        model = RobotModel("one", (Joint(0, [0, 0, 1], Pose()),), (link, link), ())
        pose = forward_kinematics(model, [np.pi / 2])[1]
        np.testing.assert_allclose(pose.rotation @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_matches_homogeneous_chain(self, arm, rng):
        for q in rng.uniform(-np.pi, np.pi, size=(100, arm.dof)):
            poses = forward_kinematics(arm, q)
            for pose, T in zip(poses, homogeneous_fk(arm, q)):
                np.testing.assert_allclose(pose.rotation, T[:3, :3], atol=1e-12)
                np.testing.assert_allclose(pose.translation, T[:3, 3], atol=1e-12)

    def test_rotations_stay_orthonormal(self, arm, rng):
        rot, _ = link_transforms(arm, rng.uniform(-np.pi, np.pi, size=(500, arm.dof)))
        eye = np.einsum("bkji,bkjl->bkil", rot, rot)
        np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), eye.shape), atol=1e-9)

    def test_batch_bits_equal_single(self, arm, rng):
        qs = rng.uniform(-np.pi, np.pi, size=(20, arm.dof))
        rb, tb = link_transforms(arm, qs)
        for i, q in enumerate(qs):
            r1, t1 = link_transforms(arm, q[None])
            np.testing.assert_array_equal(rb[i], r1[0])
            np.testing.assert_array_equal(tb[i], t1[0])

    def test_wrong_length(self, arm):
        with pytest.raises(DimensionMismatch):
            forward_kinematics(arm, np.zeros(arm.dof + 1))
        with pytest.raises(DimensionMismatch):
            self_collision(arm, np.zeros(3))


class TestModelValidation:
    def test_adjacent_pair_rejected(self):
        chain = three_link_chain()
        with pytest.raises(ValueError):
            chain.with_mask([(0, 1)])

    def test_axis_must_be_unit(self):
        with pytest.raises(ValueError):
            Joint(0, [0, 0, 2], Pose())

    def test_default_mask(self):
        assert default_mask(4) == ((0, 2), (0, 3), (1, 3))

    def test_mask_order_normalised(self):
        chain = three_link_chain()
        assert chain.with_mask([(2, 0)]).collision_mask == ((0, 2),)


class TestSelfCollision:
    def test_far_links_free(self):
        assert not self_collision(three_link_chain(gap=1.0), [0.0, 0.0])

    def test_folded_chain_collides(self):
        # fold the rod back onto the base
        chain = three_link_chain(gap=0.3, reach=0.6)
        qs = np.column_stack([np.zeros(64), np.linspace(-np.pi, np.pi, 64)])
        brute = np.array([self_collision_brute(chain, q) for q in qs])
        assert brute.any() and not brute.all()
        np.testing.assert_array_equal([self_collision(chain, q) for q in qs], brute)

    def test_equals_brute_force(self, arm):
        qs = np.random.default_rng(3).uniform(-np.pi, np.pi, size=(300, arm.dof))
        fast = np.array([self_collision(arm, q) for q in qs])
        brute = np.array([self_collision_brute(arm, q) for q in qs])
        np.testing.assert_array_equal(fast, brute)
        assert 0 < fast.sum() < len(qs)

    def test_batch_equals_scalar(self, arm):
        qs = np.random.default_rng(4).uniform(-np.pi, np.pi, size=(500, arm.dof))
        np.testing.assert_array_equal(self_collision_batch(arm, qs, chunk=64),
                                      [self_collision(arm, q) for q in qs])

    def test_mask_order_irrelevant(self, arm):
        qs = np.random.default_rng(5).uniform(-np.pi, np.pi, size=(200, arm.dof))
        flipped = arm.with_mask(list(reversed(arm.collision_mask)))
        np.testing.assert_array_equal(self_collision_batch(arm, qs), self_collision_batch(flipped, qs))

    def test_deterministic(self, arm):
        q = np.random.default_rng(6).uniform(-np.pi, np.pi, size=arm.dof)
        assert self_collision(arm, q) == self_collision(arm, q.copy())


class TestDeskArm:
    def test_bundled_matches_builder(self, arm):
        assert arm.content_hash() == build_desk_arm().content_hash()

    def test_shape(self, arm):
        assert arm.dof == 6
        assert len(arm.links) == 7
        for link in arm.links:
            assert 12 <= link.mesh.n_faces <= 96
        assert arm.collision_mask == default_mask(7)

    def test_zero_config_free(self, arm):
        assert not self_collision(arm, np.zeros(6))

    def test_collision_rate(self, arm):
        qs = np.random.default_rng(0).uniform(-np.pi, np.pi, size=(4000, 6))
        rate = self_collision_batch(arm, qs).mean()
        assert 0.10 <= rate <= 0.40


class TestRobotFiles:
    def test_round_trip(self, arm, tmp_path):
        path = save_robot(arm, tmp_path / "copy")
        back = load_robot(path)
        assert back.content_hash() == arm.content_hash()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.json"):
            load_robot(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(FormatError):
            load_robot(p)

    def test_missing_key(self, arm, tmp_path):
        path = save_robot(arm, tmp_path / "r")
        doc = json.loads(path.read_text())
        del doc["joints"][0]["axis"]
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_robot(path)

    def test_mask_defaults_to_non_adjacent(self, arm, tmp_path):
        path = save_robot(arm, tmp_path / "r")
        doc = json.loads(path.read_text())
        del doc["collision_mask"]
        path.write_text(json.dumps(doc))
        assert load_robot(path).collision_mask == default_mask(7)
