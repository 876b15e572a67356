"""
In-memory motion and camera tracks.

Rotations are (T, 3, 3) matrix stacks; file-level quaternions live in
schemas.py and are converted in formats.py.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import LengthMismatch, NormViolation, ShapeMismatch
from .kinematics import Skeleton, forward_kinematics_batch, local_rotation_matrices

DEFAULT_GRAVITY = (0.0, -1.0, 0.0)


@dataclass(frozen=True)
class Intrinsics:
    f: float
    px: float
    py: float
    width: int
    height: int

    def project(self, points_c):
        """Pinhole projection of camera-frame points (..., 3) to pixels (..., 2)"""
        points_c = np.asarray(points_c, dtype=float)
        z = points_c[..., 2:3]
        return self.f * points_c[..., :2] / z + np.array([self.px, self.py])


@dataclass(frozen=True)
class MotionSequence:
    """World motion of one person"""

    fps: float
    skeleton: Skeleton
    root_orientation: np.ndarray
    root_translation: np.ndarray
    local_rotations: np.ndarray
    joint_positions: Optional[np.ndarray] = None
    stationary_logits: Optional[np.ndarray] = None
    camera_orientation: Optional[np.ndarray] = None
    gravity: tuple = DEFAULT_GRAVITY

    def __post_init__(self):
        t = len(self.root_orientation)
        if self.root_orientation.shape != (t, 3, 3):
            raise ShapeMismatch(f"root_orientation must be (T, 3, 3), got {self.root_orientation.shape}")
        object.__setattr__(self, 'local_rotations', local_rotation_matrices(self.skeleton, self.local_rotations))
        tracks = {
            'root_translation': (self.root_translation, (t, 3)),
            'local_rotations': (self.local_rotations, (t, self.skeleton.n_joints - 1, 3, 3)),
            'joint_positions': (self.joint_positions, (t, self.skeleton.n_joints, 3)),
            'stationary_logits': (self.stationary_logits, (t, len(self.skeleton.stationary))),
            'camera_orientation': (self.camera_orientation, (t, 3, 3)),
        }
        for name, (value, shape) in tracks.items():
            if value is None:
                continue
            if len(value) != t:
                raise LengthMismatch(f"{name} has {len(value)} frames, root_orientation has {t}")
            if value.shape != shape:
                raise ShapeMismatch(f"{name} must have shape {shape}, got {value.shape}")

    @property
    def n_frames(self):
        return len(self.root_orientation)

    def joints(self):
        """World joint positions, from the stored track or recomputed by FK"""
        if self.joint_positions is not None:
            return self.joint_positions
        positions, _ = forward_kinematics_batch(
            self.skeleton, self.root_orientation, self.root_translation, self.local_rotations
        )
        return positions

    def camera_relative_joints(self):
        """Root-relative joints rotated into the camera frame, or None without a camera track"""
        if self.camera_orientation is None:
            return None
        rel = self.joints() - self.root_translation[:, None, :]
        world_to_cam = np.einsum('tij,tkj->tik', self.camera_orientation, self.root_orientation)
        return np.einsum('tij,tnj->tni', world_to_cam, rel)

    def ground_heights(self, joint_indices):
        """Height of the given joints above their per-joint minimum along -gravity"""
        up = -np.asarray(self.gravity, dtype=float)
        heights = self.joints()[:, joint_indices] @ up
        return heights - heights.min(axis=0, keepdims=True)


@dataclass(frozen=True)
class CameraTrack:
    fps: float
    intrinsics: Intrinsics
    gravity_c0: np.ndarray
    world_to_camera: Optional[np.ndarray] = None
    relative: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.world_to_camera is None and self.relative is None:
            raise ShapeMismatch("camera track needs world_to_camera or relative rotations")
        if self.world_to_camera is not None and self.relative is not None:
            if len(self.world_to_camera) != len(self.relative):
                raise LengthMismatch(
                    f"world_to_camera has {len(self.world_to_camera)} frames, relative has {len(self.relative)}"
                )
            derived = relative_from_absolute(self.world_to_camera)
            err = np.max(np.abs(derived - self.relative))
            if err > 1e-6:
                raise NormViolation(f"absolute and relative camera rotations disagree by {err:.3e}")

    @property
    def n_frames(self):
        return len(self.relative_rotations())

    def relative_rotations(self):
        if self.relative is not None:
            return self.relative
        return relative_from_absolute(self.world_to_camera)


def relative_from_absolute(world_to_camera):
    """R_delta^t = R_w2c^t (R_w2c^{t-1})^T, identity at t = 0"""
    rel = np.empty_like(world_to_camera)
    rel[0] = np.eye(3)
    rel[1:] = np.einsum('tij,tkj->tik', world_to_camera[1:], world_to_camera[:-1])
    return rel
