"""
Tests for gravity-view frames
"""
import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from motion.exceptions import GravityParallelToView, LengthMismatch, NonUnitGravity, NotAYaw
from motion.gv_geometry import (
    GvOrientationTrack,
    build_gv_basis,
    orientation_to_gv,
    relative_gv_rotation,
)
from motion.rotmath import (
    Rotation,
    Z_AXIS,
    axis_angles_to_matrices,
    rot_about_x,
    rot_about_y,
    rot_about_z,
)


def camera_looking(pitch, roll, yaw=0.0):
    """World-to-camera rotation of a camera with the given attitude, world y down"""
    return (rot_about_z(roll) @ rot_about_x(pitch) @ rot_about_y(yaw)).matrix


class GvBasisTests(SimpleTestCase):
    """Test build_gv_basis"""

    def test_level_camera_gives_identity(self):
        """Test that a level camera's GV frame is the camera frame"""
        basis = build_gv_basis([0.0, 1.0, 0.0])
        assert_allclose(basis.r_c2gv.matrix, np.eye(3), atol=1e-15)

    def test_axes_are_right_handed_and_orthonormal(self):
        """Test the basis properties for random gravity directions"""
        rng = np.random.default_rng(5)
        for _ in range(100):
            g = rng.normal(size=3)
            g /= np.linalg.norm(g)
            basis = build_gv_basis(g)
            m = basis.r_c2gv.matrix
            assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
            self.assertAlmostEqual(np.linalg.det(m), 1.0, places=12)
            assert_allclose(basis.y_axis, g, atol=1e-15)
            self.assertAlmostEqual(float(basis.x_axis @ g), 0.0, places=12)
            # z is the horizontal part of the view direction
            self.assertGreaterEqual(float(basis.z_axis @ Z_AXIS), -1e-12)

    def test_gravity_maps_to_y(self):
        """Test that gravity in camera coordinates becomes +y in GV coordinates"""
        g = camera_looking(0.4, -0.3) @ np.array([0.0, 1.0, 0.0])
        basis = build_gv_basis(g)
        assert_allclose(basis.r_c2gv @ g, [0.0, 1.0, 0.0], atol=1e-14)

    def test_gv_frame_is_independent_of_camera_pitch_and_roll(self):
        """Test that two cameras with the same heading share a GV orientation"""
        body = axis_angles_to_matrices(np.array([0.2, 1.0, -0.4]))
        gammas = []
        for pitch, roll in ((0.0, 0.0), (0.5, 0.0), (-0.3, 0.6)):
            w2c = camera_looking(pitch, roll, yaw=0.8)
            basis = build_gv_basis(w2c @ np.array([0.0, 1.0, 0.0]))
            gammas.append(orientation_to_gv(Rotation(w2c @ body), basis).matrix)
        assert_allclose(gammas[1], gammas[0], atol=1e-12)
        assert_allclose(gammas[2], gammas[0], atol=1e-12)

    def test_camera_looking_down_falls_back_to_x(self):
        """Test that gravity along the view axis still yields a basis"""
        basis = build_gv_basis([0.0, 0.0, 1.0])
        assert_allclose(basis.y_axis, [0.0, 0.0, 1.0])
        self.assertAlmostEqual(float(basis.x_axis @ [0.0, 0.0, 1.0]), 0.0)

    def test_non_unit_gravity_is_rejected(self):
        """Test that gravity must be a unit vector"""
        with self.assertRaises(NonUnitGravity):
            build_gv_basis([0.0, 2.0, 0.0])
        with self.assertRaises(GravityParallelToView):
            build_gv_basis([0.0, 0.5, 0.0])


class RelativeGvRotationTests(SimpleTestCase):
    """Test the yaw between consecutive GV frames"""

    def _frames(self, w2c_prev, w2c, body):
        g_up = np.array([0.0, 1.0, 0.0])
        basis_prev = build_gv_basis(w2c_prev @ g_up)
        basis = build_gv_basis(w2c @ g_up)
        gamma_c = Rotation(w2c @ body)
        gamma_gv = orientation_to_gv(gamma_c, basis)
        gamma_gv_prev = orientation_to_gv(Rotation(w2c_prev @ body), basis_prev)
        r_delta = Rotation(w2c @ w2c_prev.T)
        return gamma_c, gamma_gv, gamma_gv_prev, r_delta

    def test_result_is_pure_yaw(self):
        """Test that the relative GV rotation fixes the y axis"""
        rng = np.random.default_rng(8)
        body = axis_angles_to_matrices(rng.normal(size=3))
        gamma_c, gamma_gv, _, r_delta = self._frames(
            camera_looking(0.3, 0.1, 0.0), camera_looking(-0.2, 0.4, 0.7), body
        )
        r = relative_gv_rotation(gamma_c, gamma_gv, r_delta).matrix
        assert_allclose(r @ [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_chains_gv_orientations(self):
        """Test that the yaw carries GV_t orientations into GV_(t-1)"""
        rng = np.random.default_rng(9)
        for _ in range(50):
            body = axis_angles_to_matrices(rng.normal(size=3))
            prev = camera_looking(*rng.uniform(-0.6, 0.6, size=2), yaw=rng.uniform(-3, 3))
            cur = camera_looking(*rng.uniform(-0.6, 0.6, size=2), yaw=rng.uniform(-3, 3))
            gamma_c, gamma_gv, gamma_gv_prev, r_delta = self._frames(prev, cur, body)
            r = relative_gv_rotation(gamma_c, gamma_gv, r_delta)
            assert_allclose((r @ gamma_gv).matrix, gamma_gv_prev.matrix, atol=1e-12)

    def test_pure_yaw_camera_motion(self):
        """Test that a level camera panning by a yaw gives that yaw back"""
        body = axis_angles_to_matrices(np.array([0.1, 0.2, 0.3]))
        prev = camera_looking(0.0, 0.0, 0.0)
        cur = camera_looking(0.0, 0.0, 0.25)
        gamma_c, gamma_gv, _, r_delta = self._frames(prev, cur, body)
        r = relative_gv_rotation(gamma_c, gamma_gv, r_delta)
        assert_allclose(r.matrix, rot_about_y(-0.25).matrix, atol=1e-14)

    def test_world_yaw_rotates_gv_orientation_about_y(self):
        """Test that turning the camera about gravity turns the GV orientation by the same yaw"""
        rng = np.random.default_rng(10)
        for _ in range(50):
            body = axis_angles_to_matrices(rng.normal(size=3))
            pitch, roll = rng.uniform(-0.6, 0.6, size=2)
            yaw, phi = rng.uniform(-3, 3, size=2)
            gammas = []
            for w2c in (camera_looking(pitch, roll, yaw), camera_looking(pitch, roll, yaw) @ rot_about_y(phi).matrix):
                basis = build_gv_basis(w2c @ np.array([0.0, 1.0, 0.0]))
                gammas.append(orientation_to_gv(Rotation(w2c @ body), basis))
            assert_allclose((rot_about_y(phi) @ gammas[0]).matrix, gammas[1].matrix, atol=1e-12)


class GvOrientationTrackTests(SimpleTestCase):
    """Test GvOrientationTrack validation"""

    def test_accepts_yaw_steps(self):
        """Test that a track of pure yaw steps is accepted"""
        yaws = np.stack([rot_about_y(a).matrix for a in (0.0, 0.1, -0.4)])
        gammas = axis_angles_to_matrices(np.random.default_rng(11).normal(size=(3, 3)))
        track = GvOrientationTrack(gamma_gv=gammas, r_delta_gv=yaws)
        self.assertEqual(len(track), 3)

    def test_rejects_tilted_step(self):
        """Test that a step which moves the gravity axis is reported with its frame"""
        steps = np.stack([np.eye(3), rot_about_y(0.2).matrix, rot_about_x(0.05).matrix])
        with self.assertRaises(NotAYaw) as ctx:
            GvOrientationTrack(gamma_gv=np.stack([np.eye(3)] * 3), r_delta_gv=steps)
        self.assertEqual(ctx.exception.frame, 2)

    def test_rejects_length_mismatch(self):
        """Test that both stacks must have the same number of frames"""
        with self.assertRaises(LengthMismatch):
            GvOrientationTrack(gamma_gv=np.stack([np.eye(3)] * 3), r_delta_gv=np.stack([np.eye(3)] * 2))
