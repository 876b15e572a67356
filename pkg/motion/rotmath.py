"""
3D rotation and vector primitives.

Rotations are stored as 3x3 double-precision matrices. Quaternions (w, x, y, z)
and axis-angle vectors are conversion views backed by scipy. Track-level code
works on stacks of matrices with shape (T, 3, 3).
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation

from .exceptions import DegenerateHorizontalProjection, GeometryError, NotARotation, ShapeMismatch

ORTHO_TOL = 1e-9
EPS_DEG = 1e-6

X_AXIS = np.array([1.0, 0.0, 0.0])
Y_AXIS = np.array([0.0, 1.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


def as_vec3(v, name='vector'):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ShapeMismatch(f"{name} must have shape (3,), got {arr.shape}")
    return arr


def normalize(v, eps=1e-12):
    n = np.linalg.norm(v)
    if n <= eps:
        raise GeometryError(f"cannot normalize vector of norm {n:.3e}")
    return v / n


def is_rotation_matrix(m, tol=ORTHO_TOL):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class Rotation:
    """Immutable 3D rotation backed by an orthonormal matrix"""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ShapeMismatch(f"rotation matrix must be 3x3, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, 'matrix', m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def from_matrix(cls, m, tol=ORTHO_TOL):
        """Wrap a matrix after checking it is a proper rotation"""
        if not is_rotation_matrix(m, tol):
            raise NotARotation("matrix is not orthonormal with determinant +1")
        return cls(m)

    @classmethod
    def from_axis_angle(cls, v):
        return cls(ScipyRotation.from_rotvec(as_vec3(v, 'axis-angle')).as_matrix())

    @classmethod
    def from_quaternion(cls, q):
        """Build from a unit quaternion in (w, x, y, z) order"""
        q = np.asarray(q, dtype=float)
        if q.shape != (4,):
            raise ShapeMismatch(f"quaternion must have shape (4,), got {q.shape}")
        return cls(quaternions_to_matrices(q[None])[0])

    def as_axis_angle(self):
        return ScipyRotation.from_matrix(self.matrix).as_rotvec()

    def as_quaternion(self):
        return matrices_to_quaternions(self.matrix[None])[0]

    def inv(self):
        return Rotation(self.matrix.T)

    def apply(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self.matrix @ other.matrix)
        return self.apply(other)

    def __repr__(self):
        return f"Rotation(axis_angle={np.array2string(self.as_axis_angle(), precision=6)})"


def rot_from_axis_angle(v):
    return Rotation.from_axis_angle(v)


def rot_compose(a, b):
    return Rotation(a.matrix @ b.matrix)


def rot_inverse(a):
    return a.inv()


def geodesic_angle(a, b):
    """
    Angle of the relative rotation a^T b in [0, pi].

    Uses atan2 of the skew and trace parts, which equals the arccos form but
    stays accurate for nearly identical rotations.
    """
    return float(geodesic_angles(np.asarray(_matrix(a))[None], np.asarray(_matrix(b))[None])[0])


def geodesic_angles(a, b):
    """Per-frame geodesic angles between two (T, 3, 3) stacks"""
    rel = np.einsum('tji,tjk->tik', a, b)
    cos = (np.trace(rel, axis1=1, axis2=2) - 1.0) / 2.0
    skew = np.stack([
        rel[:, 2, 1] - rel[:, 1, 2],
        rel[:, 0, 2] - rel[:, 2, 0],
        rel[:, 1, 0] - rel[:, 0, 1],
    ], axis=-1)
    sin = 0.5 * np.linalg.norm(skew, axis=-1)
    return np.arctan2(sin, cos)


def rot_about_x(theta):
    c, s = np.cos(theta), np.sin(theta)
    return Rotation(np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]))


def rot_about_y(theta):
    """Rotation about +y; positive angles turn +z toward +x"""
    c, s = np.cos(theta), np.sin(theta)
    return Rotation(np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]))


def rot_about_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return Rotation(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))


def yaw_between_horizontal(u, w, eps=EPS_DEG):
    """
    Signed angle about +y taking the xz-projection of u onto that of w.

    Raises DegenerateHorizontalProjection when either vector is within eps of
    the y axis.
    """
    u = as_vec3(u, 'u')
    w = as_vec3(w, 'w')
    ux, uz = u[0], u[2]
    wx, wz = w[0], w[2]
    if np.hypot(ux, uz) <= eps or np.hypot(wx, wz) <= eps:
        raise DegenerateHorizontalProjection(
            "direction is parallel to the gravity axis; no horizontal heading"
        )
    cross_y = uz * wx - ux * wz
    dot = ux * wx + uz * wz
    return float(np.arctan2(cross_y, dot))


def yaw_matrices(thetas):
    """Stack of rot_about_y matrices for an array of angles"""
    thetas = np.asarray(thetas, dtype=float)
    c, s = np.cos(thetas), np.sin(thetas)
    out = np.zeros(thetas.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def orthonormalize(m):
    """Nearest rotation to m in the Frobenius sense (polar decomposition)"""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def quaternions_to_matrices(q):
    """(T, 4) w-first quaternions to (T, 3, 3) matrices"""
    q = np.asarray(q, dtype=float)
    return ScipyRotation.from_quat(q.reshape(-1, 4)[:, [1, 2, 3, 0]]).as_matrix().reshape(q.shape[:-1] + (3, 3))


def matrices_to_quaternions(m):
    """(T, 3, 3) matrices to (T, 4) w-first quaternions with w >= 0"""
    m = np.asarray(m, dtype=float)
    xyzw = ScipyRotation.from_matrix(m.reshape(-1, 3, 3)).as_quat()
    wxyz = xyzw[:, [3, 0, 1, 2]]
    wxyz[wxyz[:, 0] < 0] *= -1.0
    return wxyz.reshape(m.shape[:-2] + (4,))


def axis_angles_to_matrices(v):
    v = np.asarray(v, dtype=float)
    return ScipyRotation.from_rotvec(v.reshape(-1, 3)).as_matrix().reshape(v.shape[:-1] + (3, 3))


def matrices_to_axis_angles(m):
    m = np.asarray(m, dtype=float)
    return ScipyRotation.from_matrix(m.reshape(-1, 3, 3)).as_rotvec().reshape(m.shape[:-2] + (3,))


def as_matrix_stack(rotations, name='rotations'):
    """Accept a (T, 3, 3) array or a sequence of Rotation values"""
    if isinstance(rotations, np.ndarray):
        arr = np.asarray(rotations, dtype=float)
    else:
        arr = np.asarray([_matrix(r) for r in rotations], dtype=float).reshape(-1, 3, 3)
    if arr.ndim != 3 or arr.shape[1:] != (3, 3):
        raise ShapeMismatch(f"{name} must have shape (T, 3, 3), got {arr.shape}")
    return arr


def matrix_to_6d(m):
    """First two columns of each matrix, concatenated"""
    m = np.asarray(m, dtype=float)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def _matrix(r):
    return r.matrix if isinstance(r, Rotation) else np.asarray(r, dtype=float)
