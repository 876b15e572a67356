"""
Tests for world trajectory recovery
"""
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from motion.exceptions import LengthMismatch
from motion.gv_geometry import build_gv_basis
from motion.rotmath import axis_angles_to_matrices, geodesic_angles, rot_about_y, yaw_matrices
from motion.synth import WORLD_GRAVITY, NoiseConfig, SynthConfig, synth_sequence
from motion.tracks import relative_from_absolute
from motion.trajectory import (
    TrajectoryInputs,
    drift_curves,
    gravity_tilt,
    naive_camera_chain,
    recover_global_trajectory,
    recover_world_orientations,
    recover_world_translations,
    relative_gv_rotations,
)


class RolloutFormulaTests(SimpleTestCase):
    """Test the orientation and translation rollouts against explicit loops"""

    def test_orientations_match_explicit_product(self):
        """Test Gamma_w^t = (R^1 ... R^t) Gamma_gv^t on random inputs"""
        rng = np.random.default_rng(21)
        for _ in range(100):
            t = int(rng.integers(1, 40))
            gamma_gv = axis_angles_to_matrices(rng.normal(size=(t, 3)))
            r_dgv = yaw_matrices(rng.uniform(-np.pi, np.pi, size=t))
            expected = np.empty_like(gamma_gv)
            for k in range(t):
                product = np.eye(3)
                for i in range(1, k + 1):
                    product = product @ r_dgv[i]
                expected[k] = product @ gamma_gv[k]
            assert_allclose(recover_world_orientations(gamma_gv, r_dgv), expected, atol=1e-12)

    def test_translations_match_explicit_sum(self):
        """Test tau^t = sum over i < t of Gamma_w^i v^i"""
        rng = np.random.default_rng(22)
        for _ in range(100):
            t = int(rng.integers(1, 40))
            gamma_w = axis_angles_to_matrices(rng.normal(size=(t, 3)))
            v = rng.normal(size=(t, 3))
            expected = np.zeros((t, 3))
            for k in range(t):
                for i in range(k):
                    expected[k] += gamma_w[i] @ v[i]
            assert_allclose(recover_world_translations(gamma_w, v), expected, atol=1e-12)

    def test_first_relative_rotation_is_ignored(self):
        """Test that r_delta_gv[0] does not enter the rollout"""
        rng = np.random.default_rng(23)
        gamma_gv = axis_angles_to_matrices(rng.normal(size=(5, 3)))
        r_dgv = yaw_matrices(rng.normal(size=5))
        changed = r_dgv.copy()
        changed[0] = yaw_matrices(np.array([2.0]))[0]
        assert_allclose(recover_world_orientations(gamma_gv, r_dgv), recover_world_orientations(gamma_gv, changed))

    def test_single_frame(self):
        """Test that a one-frame input stays at the origin with its GV orientation"""
        gamma_gv = axis_angles_to_matrices(np.array([[0.1, 0.2, 0.3]]))
        inputs = TrajectoryInputs(gamma_gv=gamma_gv, gamma_c=gamma_gv, v_root=np.ones((1, 3)),
                                  r_delta=np.eye(3)[None])
        trajectory = recover_global_trajectory(inputs)
        assert_allclose(trajectory.orientations, gamma_gv)
        assert_allclose(trajectory.translations, np.zeros((1, 3)))

    def test_length_mismatch(self):
        """Test that tracks of different lengths are rejected"""
        with self.assertRaises(LengthMismatch):
            TrajectoryInputs(gamma_gv=np.tile(np.eye(3), (3, 1, 1)), gamma_c=np.tile(np.eye(3), (3, 1, 1)),
                             v_root=np.zeros((2, 3)), r_delta=np.tile(np.eye(3), (3, 1, 1)))


def world_yawed_inputs(bundle, phi):
    """Trajectory inputs derived from the bundle's scene after turning the whole world about gravity"""
    yaw = rot_about_y(phi).matrix
    world_to_camera = bundle.camera.world_to_camera @ yaw.T
    gamma_w = yaw @ bundle.motion.root_orientation
    tau = bundle.motion.root_translation @ yaw.T
    steps = np.diff(tau, axis=0)
    steps = np.vstack([steps, steps[-1:]])
    gamma_c = world_to_camera @ gamma_w
    gravity_c = world_to_camera @ WORLD_GRAVITY
    gamma_gv = np.stack([build_gv_basis(g).r_c2gv.matrix @ r for g, r in zip(gravity_c, gamma_c)])
    return TrajectoryInputs(
        gamma_gv=gamma_gv,
        gamma_c=gamma_c,
        v_root=np.einsum('tji,tj->ti', gamma_w, steps),
        r_delta=relative_from_absolute(world_to_camera),
        fps=bundle.config.fps,
    )


class SyntheticRecoveryTests(SimpleTestCase):
    """Test recovery on exact synthetic inputs"""

    def test_recovery_matches_ground_truth_after_gauge(self):
        """Test zero-noise recovery on orbit and handheld cameras"""
        for seed in range(20):
            mode = 'orbit' if seed % 2 else 'handheld'
            bundle = synth_sequence(seed, SynthConfig(length=300, camera_mode=mode))
            trajectory = recover_global_trajectory(bundle.trajectory_inputs())
            angles = geodesic_angles(trajectory.orientations, bundle.gauge_orientations())
            self.assertLess(angles.max(), 1e-6, f"seed {seed} ({mode})")
            error = np.linalg.norm(trajectory.translations - bundle.gauge_translations(), axis=-1)
            self.assertLess(error.max(), 1e-6, f"seed {seed} ({mode})")

    def test_static_camera_gives_identity_relative_yaw(self):
        """Test that R_delta = I gives R_delta_gv = I exactly"""
        bundle = synth_sequence(4, SynthConfig(length=30, camera_mode='static'))
        inputs = bundle.trajectory_inputs()
        r_dgv = relative_gv_rotations(inputs.gamma_c, inputs.gamma_gv, inputs.r_delta)
        self.assertTrue(np.array_equal(r_dgv, np.tile(np.eye(3), (30, 1, 1))))

    def test_naive_chain_agrees_without_noise(self):
        """Test that the camera-chaining baseline is exact on exact inputs"""
        bundle = synth_sequence(5, SynthConfig(length=120, camera_mode='handheld'))
        inputs = bundle.trajectory_inputs()
        r_c2gv0 = inputs.gamma_gv[0] @ inputs.gamma_c[0].T
        baseline = naive_camera_chain(inputs.gamma_c, inputs.r_delta, r_c2gv0)
        assert_allclose(baseline, bundle.gauge_orientations(), atol=1e-9)

    def test_world_yaw_does_not_change_recovery(self):
        """Test that turning the whole scene about gravity leaves the recovered trajectory unchanged"""
        bundle = synth_sequence(6, SynthConfig(length=200, camera_mode='orbit'))
        reference = recover_global_trajectory(world_yawed_inputs(bundle, 0.0))
        for phi in (0.4, -2.1, 3.0):
            turned = recover_global_trajectory(world_yawed_inputs(bundle, phi))
            assert_allclose(turned.orientations, reference.orientations, atol=1e-9)
            assert_allclose(turned.translations, reference.translations, atol=1e-9)

    def test_translations_scale_with_velocity(self):
        """Test that scaling every root velocity scales the recovered translations"""
        bundle = synth_sequence(7, SynthConfig(length=120, camera_mode='handheld'))
        inputs = bundle.trajectory_inputs()
        base = recover_global_trajectory(inputs)
        for scale in (2.0, -0.5, 0.0):
            scaled = recover_global_trajectory(replace(inputs, v_root=scale * inputs.v_root))
            assert_allclose(scaled.translations, scale * base.translations, atol=1e-12)
            assert_allclose(scaled.orientations, base.orientations, atol=1e-15)


class GravityDriftTests(SimpleTestCase):
    """Test that tilt noise in relative rotations never tilts the recovered gravity axis"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        config = SynthConfig(length=3000, camera_mode='handheld', noise=NoiseConfig(r_delta_tilt_deg=5.0))
        cls.bundle = synth_sequence(17, config)
        cls.inputs = cls.bundle.trajectory_inputs()
        cls.trajectory = recover_global_trajectory(cls.inputs)
        cls.curves = drift_curves(cls.inputs, cls.trajectory, cls.bundle.gauge_orientations())

    def test_recovered_gravity_never_tilts(self):
        """Test that every GV-to-world map keeps the y axis within 1e-9"""
        to_world = np.einsum('tij,tkj->tik', self.trajectory.orientations, self.inputs.gamma_gv)
        self.assertLess(gravity_tilt(to_world).max(), 1e-9)
        self.assertLess(np.abs(self.curves['tilt_deg']).max(), np.degrees(1e-9))

    def test_baseline_accumulates_tilt(self):
        """Test that chaining raw relative rotations drifts by more than a degree"""
        self.assertGreater(self.curves['baseline_tilt_deg'][-1], 1.0)

    def test_curve_columns(self):
        """Test the error-vs-time columns"""
        self.assertEqual(
            set(self.curves),
            {'frame', 'tilt_deg', 'baseline_tilt_deg', 'orientation_error_deg', 'baseline_orientation_error_deg'},
        )
        for column in self.curves.values():
            self.assertEqual(len(column), 3000)
        self.assertLess(self.curves['orientation_error_deg'][0], 1e-6)
