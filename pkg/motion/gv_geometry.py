"""
Gravity-View coordinate frames.

A GV frame has its y axis along gravity and its z axis along the horizontal
projection of the camera view direction. Everything here is expressed in
camera coordinates (x right, y down, z forward).
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import GravityParallelToView, LengthMismatch, NonUnitGravity, NotAYaw
from .rotmath import (
    X_AXIS,
    Y_AXIS,
    Z_AXIS,
    Rotation,
    as_matrix_stack,
    as_vec3,
    rot_about_y,
    yaw_between_horizontal,
)

UNIT_TOL = 1e-6
PARALLEL_EPS = 1e-6
YAW_TOL = 1e-9


@dataclass(frozen=True)
class GvBasis:
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray
    r_c2gv: Rotation


@dataclass(frozen=True)
class GvOrientationTrack:
    """Per-frame GV orientations and the yaw from each GV frame to the previous one"""

    gamma_gv: np.ndarray
    r_delta_gv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'gamma_gv', as_matrix_stack(self.gamma_gv, 'gamma_gv'))
        object.__setattr__(self, 'r_delta_gv', as_matrix_stack(self.r_delta_gv, 'r_delta_gv'))
        if len(self.gamma_gv) != len(self.r_delta_gv):
            raise LengthMismatch(
                f"gamma_gv has {len(self.gamma_gv)} frames but r_delta_gv has {len(self.r_delta_gv)}"
            )
        drift = np.linalg.norm(self.r_delta_gv @ Y_AXIS - Y_AXIS, axis=-1)
        if np.any(drift > YAW_TOL):
            frame = int(np.flatnonzero(drift > YAW_TOL)[0])
            raise NotAYaw(f"r_delta_gv moves the gravity axis by {drift[frame]:.3e}", frame=frame)

    def __len__(self):
        return len(self.gamma_gv)


def build_gv_basis(gravity_c, view=Z_AXIS):
    g = as_vec3(gravity_c, 'gravity')
    view = as_vec3(view, 'view')
    n = np.linalg.norm(g)
    if abs(n - 1.0) > UNIT_TOL:
        raise NonUnitGravity(f"gravity direction must be unit length, got norm {n:.9f}")
    y = g / n

    x = np.cross(y, view)
    if np.linalg.norm(x) <= PARALLEL_EPS:
        # camera looking along gravity: fall back to the camera x axis
        x = X_AXIS - np.dot(X_AXIS, y) * y
        if np.linalg.norm(x) <= PARALLEL_EPS:
            raise GravityParallelToView("gravity is parallel to both the view and the camera x axis")
    x = x / np.linalg.norm(x)

    z = np.cross(x, y)
    z = z / np.linalg.norm(z)
    return GvBasis(x_axis=x, y_axis=y, z_axis=z, r_c2gv=Rotation(np.stack([x, y, z])))


def orientation_to_gv(gamma_c, basis):
    return basis.r_c2gv @ gamma_c


def relative_gv_rotation(gamma_c_t, gamma_gv_t, r_delta_t):
    """
    Yaw taking GV_t coordinates to GV_{t-1} coordinates.

    r_delta_t maps camera t-1 coordinates into camera t coordinates, so
    r_delta_t @ e_z is the previous view direction seen from camera t. Both
    view directions are expressed in GV_t and the yaw between their horizontal
    headings is returned as a pure rotation about +y.
    """
    r_c2gv = gamma_gv_t.matrix @ gamma_c_t.matrix.T
    v_t = r_c2gv @ Z_AXIS
    v_prev = r_c2gv @ (r_delta_t.matrix @ Z_AXIS)
    return rot_about_y(yaw_between_horizontal(v_prev, v_t))
