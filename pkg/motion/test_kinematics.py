"""
Tests for skeleton kinematics and stationary-joint post-processing
"""
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from motion.exceptions import ProbabilityOutOfRange, ShapeMismatch, UnknownJoint
from motion.kinematics import (
    PostprocessConfig,
    Skeleton,
    adjust_stationary_positions,
    ccd_ik_solve,
    forward_kinematics,
    forward_kinematics_backward,
    forward_kinematics_batch,
    get_skeleton,
    postprocess_motion,
    refine_global_translation,
    smpl24_skeleton,
)
from motion.metrics import foot_sliding, mpjpe
from motion.pipeline import refine_motion
from motion.rotmath import Rotation, axis_angles_to_matrices, rot_about_z
from motion.synth import SynthConfig, inject_foot_slide, synth_sequence


def chain_skeleton(lengths=(0.3, 0.25, 0.2, 0.15)):
    """Root plus one joint per link, links along +y"""
    n = len(lengths) + 1
    offsets = [(0.0, 0.0, 0.0)] + [(0.0, length, 0.0) for length in lengths]
    return Skeleton(names=[f'j{i}' for i in range(n)], parents=[-1] + list(range(n - 1)),
                    offsets=offsets, name='chain')


class SkeletonTests(SimpleTestCase):
    """Test skeleton construction and lookup"""

    def test_smpl24_layout(self):
        """Test the built-in 24-joint skeleton"""
        skel = smpl24_skeleton()
        self.assertEqual(skel.n_joints, 24)
        self.assertEqual(skel.parents[0], -1)
        self.assertEqual(skel.index('left_foot'), 10)
        self.assertEqual(len(skel.stationary_indices), 6)
        self.assertEqual(list(skel.foot_indices), [10, 11])

    def test_unknown_joint(self):
        """Test that unknown names and indices raise UnknownJoint"""
        skel = smpl24_skeleton()
        with self.assertRaises(UnknownJoint):
            skel.index('tail')
        with self.assertRaises(UnknownJoint):
            skel.index(24)

    def test_unknown_skeleton_name(self):
        """Test that get_skeleton rejects unregistered names"""
        with self.assertRaises(UnknownJoint):
            get_skeleton('smplx55')

    def test_parents_must_precede_children(self):
        """Test that a non-topological joint order is rejected"""
        with self.assertRaises(ShapeMismatch):
            Skeleton(names=['a', 'b', 'c'], parents=[-1, 2, 0], offsets=[[0, 0, 0], [0, 1, 0], [0, 1, 0]])

    def test_dict_round_trip(self):
        """Test that an inline skeleton dict rebuilds the same skeleton"""
        skel = chain_skeleton()
        again = get_skeleton(skel.to_dict())
        self.assertEqual(again.names, skel.names)
        self.assertEqual(again.parents, skel.parents)
        assert_allclose(again.offsets, skel.offsets)


class ForwardKinematicsTests(SimpleTestCase):
    """Test forward kinematics and its backward pass"""

    def test_rest_pose_sums_offsets(self):
        """Test that the identity pose places joints at accumulated offsets"""
        skel = chain_skeleton()
        pos = forward_kinematics(skel, Rotation.identity(), np.zeros(3), np.zeros((4, 3)))
        assert_allclose(pos[:, 1], [0.0, 0.3, 0.55, 0.75, 0.9])

    def test_root_rotation_moves_whole_body(self):
        """Test that the root rotation turns every offset"""
        skel = chain_skeleton()
        root = rot_about_z(np.pi / 2)
        pos = forward_kinematics(skel, root, np.array([1.0, 0.0, 0.0]), np.zeros((4, 3)))
        assert_allclose(pos[-1], [1.0 - 0.9, 0.0, 0.0], atol=1e-15)

    def test_bone_lengths_preserved(self):
        """Test that any pose keeps parent-child distances"""
        skel = smpl24_skeleton()
        rng = np.random.default_rng(1)
        pos = forward_kinematics(skel, Rotation.from_axis_angle(rng.normal(size=3)), rng.normal(size=3),
                                 rng.normal(size=(23, 3)))
        for j in range(1, 24):
            self.assertAlmostEqual(np.linalg.norm(pos[j] - pos[skel.parents[j]]),
                                   np.linalg.norm(skel.offsets[j]), places=12)

    def test_backward_matches_finite_differences(self):
        """Test FK gradients of a random linear functional against central differences"""
        skel = chain_skeleton()
        rng = np.random.default_rng(2)
        root = axis_angles_to_matrices(rng.normal(size=(2, 3)))
        root_pos = rng.normal(size=(2, 3))
        local = axis_angles_to_matrices(rng.normal(size=(2, 4, 3)))
        w_pos = rng.normal(size=(2, 5, 3))

        def loss(root_, pos_, local_):
            p, _ = forward_kinematics_batch(skel, root_, pos_, local_)
            return float((p * w_pos).sum())

        _, glob = forward_kinematics_batch(skel, root, root_pos, local)
        d_local, d_root, d_pos = forward_kinematics_backward(skel, glob, local, w_pos)
        h = 1e-6
        for index in np.ndindex(local.shape):
            bumped = [local.copy(), local.copy()]
            bumped[0][index] += h
            bumped[1][index] -= h
            numeric = (loss(root, root_pos, bumped[0]) - loss(root, root_pos, bumped[1])) / (2 * h)
            self.assertAlmostEqual(d_local[index], numeric, places=6)
        for index in np.ndindex(root.shape):
            bumped = [root.copy(), root.copy()]
            bumped[0][index] += h
            bumped[1][index] -= h
            numeric = (loss(bumped[0], root_pos, local) - loss(bumped[1], root_pos, local)) / (2 * h)
            self.assertAlmostEqual(d_root[index], numeric, places=6)
        assert_allclose(d_pos, w_pos.sum(axis=1), atol=1e-12)


class InverseKinematicsTests(SimpleTestCase):
    """Test cyclic coordinate descent"""

    def test_random_reachable_targets(self):
        """Test that at least 95 of 100 reachable targets are solved to 1 mm"""
        skel = chain_skeleton()
        rng = np.random.default_rng(31)
        solved = 0
        for _ in range(100):
            goal_root = axis_angles_to_matrices(rng.normal(size=3))
            goal_local = axis_angles_to_matrices(rng.normal(size=(4, 3)))
            target = forward_kinematics(skel, goal_root, np.zeros(3), goal_local)[4]
            result = ccd_ik_solve(skel, np.eye(3), np.zeros(3), np.zeros((4, 3)), {'j4': target},
                                  max_iter=50, tol=1e-3, solve_root=True)
            self.assertLessEqual(result.iterations, 50)
            self.assertTrue(all(b <= a for a, b in zip(result.history, result.history[1:])))
            solved += bool(result.errors[0] < 1e-3)
        self.assertGreaterEqual(solved, 95)

    def test_fixed_root_keeps_root_rotation(self):
        """Test that solve_root=False never turns the root"""
        skel = chain_skeleton()
        root = rot_about_z(0.3).matrix
        result = ccd_ik_solve(skel, root, np.zeros(3), np.zeros((4, 3)), {4: np.array([0.3, 0.6, 0.1])})
        assert_allclose(result.root_rotation, root)

    def test_already_solved_target_takes_no_iterations(self):
        """Test that a target at the effector returns immediately"""
        skel = chain_skeleton()
        target = forward_kinematics(skel, np.eye(3), np.zeros(3), np.zeros((4, 3)))[4]
        result = ccd_ik_solve(skel, np.eye(3), np.zeros(3), np.zeros((4, 3)), {4: target})
        self.assertEqual(result.iterations, 0)
        self.assertTrue(result.converged)

    def test_unreachable_target_does_not_increase_error(self):
        """Test that an out-of-reach target still yields a non-increasing error history"""
        skel = chain_skeleton()
        result = ccd_ik_solve(skel, np.eye(3), np.zeros(3), np.zeros((4, 3)), {4: np.array([5.0, 0.0, 0.0])},
                              solve_root=True)
        self.assertFalse(result.converged)
        self.assertTrue(all(b <= a for a, b in zip(result.history, result.history[1:])))
        self.assertAlmostEqual(result.errors[0], 5.0 - 0.9, delta=1e-2)


class StationaryRefinementTests(SimpleTestCase):
    """Test root refinement and stationary target smoothing"""

    def test_root_update_removes_pinned_joint_motion(self):
        """Test that a single dominant joint ends up motionless"""
        rng = np.random.default_rng(4)
        t = 10
        joint_path = np.cumsum(rng.normal(size=(t, 3)), axis=0)
        joints = np.stack([joint_path, rng.normal(size=(t, 3))], axis=1)
        logits = np.tile([50.0, -50.0], (t, 1))
        tau = refine_global_translation(np.zeros((t, 3)), joints, logits)
        assert_allclose(joints[:, 0] + tau, np.tile(joint_path[0], (t, 1)), atol=1e-9)

    def test_gating_skips_frames_below_threshold(self):
        """Test that frames without a confident joint get no correction"""
        t = 5
        joints = np.zeros((t, 2, 3))
        joints[:, :, 0] = np.arange(t)[:, None]
        logits = np.full((t, 2), -3.0)
        tau = refine_global_translation(np.zeros((t, 3)), joints, logits, min_logit=0.0)
        assert_allclose(tau, np.zeros((t, 3)))
        ungated = refine_global_translation(np.zeros((t, 3)), joints, logits)
        assert_allclose(ungated[:, 0], -np.arange(t))

    def test_adjusted_positions_follow_recurrence(self):
        """Test p*_i = p_i (1 - c_i) + p*_(i-1) c_i"""
        rng = np.random.default_rng(6)
        p = rng.normal(size=(8, 3))
        c = rng.uniform(size=8)
        out = adjust_stationary_positions(p, c)
        expected = p[0].copy()
        assert_allclose(out[0], p[0])
        for i in range(1, 8):
            expected = p[i] * (1 - c[i]) + expected * c[i]
            assert_allclose(out[i], expected, atol=1e-15)

    def test_certain_contact_freezes_position(self):
        """Test that c = 1 holds the previous target"""
        p = np.arange(12, dtype=float).reshape(4, 3)
        out = adjust_stationary_positions(p, np.array([0.0, 1.0, 1.0, 0.0]))
        assert_allclose(out[2], p[0])
        assert_allclose(out[3], p[3])

    def test_probability_out_of_range(self):
        """Test that probabilities outside [0, 1] name the frame"""
        with self.assertRaises(ProbabilityOutOfRange) as ctx:
            adjust_stationary_positions(np.zeros((3, 3)), np.array([0.2, 1.5, 0.3]))
        self.assertEqual(ctx.exception.frame, 1)
        self.assertIn('frame 1', str(ctx.exception))


class PostprocessTests(SimpleTestCase):
    """Test the full stationary-joint post-processing pass"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = synth_sequence(3, SynthConfig(length=150, camera_mode='static'))
        cls.skel = cls.bundle.motion.skeleton
        cls.feet = [list(cls.skel.stationary).index(f) for f in cls.skel.feet]

    def test_removes_injected_foot_slide(self):
        """Test that a 10 mm per frame slide during contact is cut by at least 80%"""
        clean = self.bundle.motion
        slid = inject_foot_slide(clean, self.bundle.contact, self.skel, step=0.01)
        contact = self.bundle.contact[:, self.feet]
        feet = self.skel.foot_indices

        before = foot_sliding(slid.joints()[:, feet], contact=contact)
        refined = postprocess_motion(slid, self.skel, PostprocessConfig())
        after = foot_sliding(refined.joints()[:, feet], contact=contact)
        self.assertGreater(before, 5.0)
        self.assertLessEqual(after, 0.2 * before)

        self.assertLessEqual(mpjpe(refined.joints(), clean.joints()), mpjpe(slid.joints(), clean.joints()) + 5.0)

    def test_requires_stationary_logits(self):
        """Test that a motion without logits is rejected"""
        with self.assertRaises(ShapeMismatch):
            postprocess_motion(replace(self.bundle.motion, stationary_logits=None), self.skel)

    def test_translation_stage_can_be_skipped(self):
        """Test that refine_translation off keeps the root path and still pins the feet with IK"""
        slid = inject_foot_slide(self.bundle.motion, self.bundle.contact, self.skel, step=0.01)
        refined = postprocess_motion(slid, self.skel, PostprocessConfig(refine_translation=False))
        self.assertTrue(np.array_equal(refined.root_translation, slid.root_translation))
        self.assertGreater(np.abs(refined.joints() - slid.joints()).max(), 1e-4)

    def test_ik_stage_can_be_skipped(self):
        """Test that solve_ik off moves the body rigidly with the refined root"""
        slid = inject_foot_slide(self.bundle.motion, self.bundle.contact, self.skel, step=0.01)
        refined = postprocess_motion(slid, self.skel, PostprocessConfig(solve_ik=False))
        self.assertGreater(np.abs(refined.root_translation - slid.root_translation).max(), 1e-4)
        assert_allclose(
            refined.joints() - refined.root_translation[:, None, :],
            slid.joints() - slid.root_translation[:, None, :],
            atol=1e-9,
        )

    def test_both_stages_off_keeps_the_motion(self):
        """Test that switching off every stage returns the input pose"""
        slid = inject_foot_slide(self.bundle.motion, self.bundle.contact, self.skel, step=0.01)
        refined = postprocess_motion(slid, self.skel, PostprocessConfig(refine_translation=False, solve_ik=False))
        assert_allclose(refined.joints(), slid.joints(), atol=1e-9)

    def test_refine_motion_can_skip_post_processing(self):
        """Test that refine_motion without post-processing returns its input untouched"""
        slid = inject_foot_slide(self.bundle.motion, self.bundle.contact, self.skel, step=0.01)
        self.assertIs(refine_motion(slid, PostprocessConfig(), postprocess=False), slid)
        refined = refine_motion(slid, PostprocessConfig())
        self.assertFalse(np.array_equal(refined.root_translation, slid.root_translation))

    def test_clean_walk_is_unchanged(self):
        """Test that exact contact labels leave a slide-free walk in place"""
        refined = postprocess_motion(self.bundle.motion, self.skel)
        assert_allclose(refined.root_translation, self.bundle.motion.root_translation, atol=1e-6)
