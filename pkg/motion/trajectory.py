"""
World trajectory rollout from per-frame GV orientations and root velocities.

The first frame's GV system is the world frame, so gravity in the output is
exactly +y. Orientations are chained through the yaw-only rotations between
consecutive GV frames; translations are the cumulative sum of root
displacements rotated into the world.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import GeometryError, LengthMismatch, ShapeMismatch
from .gv_geometry import GvOrientationTrack, relative_gv_rotation
from .rotmath import Y_AXIS, Rotation, as_matrix_stack, geodesic_angles, orthonormalize

logger = logging.getLogger(__name__)

RENORM_EVERY = 256


@dataclass(frozen=True)
class TrajectoryInputs:
    gamma_gv: np.ndarray
    gamma_c: np.ndarray
    v_root: np.ndarray
    r_delta: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, 'gamma_gv', as_matrix_stack(self.gamma_gv, 'gamma_gv'))
        object.__setattr__(self, 'gamma_c', as_matrix_stack(self.gamma_c, 'gamma_c'))
        object.__setattr__(self, 'r_delta', as_matrix_stack(self.r_delta, 'r_delta'))
        object.__setattr__(self, 'v_root', _as_vec_track(self.v_root, 'v_root'))
        lengths = {
            'gamma_gv': len(self.gamma_gv),
            'gamma_c': len(self.gamma_c),
            'v_root': len(self.v_root),
            'r_delta': len(self.r_delta),
        }
        if len(set(lengths.values())) != 1:
            raise LengthMismatch(f"track lengths differ: {lengths}")
        if lengths['gamma_gv'] < 1:
            raise LengthMismatch("trajectory inputs need at least one frame")

    def __len__(self):
        return len(self.gamma_gv)


@dataclass(frozen=True)
class WorldTrajectory:
    orientations: np.ndarray
    translations: np.ndarray
    r_delta_gv: np.ndarray

    def __len__(self):
        return len(self.orientations)


def recover_world_orientations(gamma_gv, r_delta_gv, renorm_every=RENORM_EVERY):
    """
    Gamma_w^t = (R_dgv^1 ... R_dgv^t) Gamma_gv^t with the product built left to right.

    r_delta_gv[0] is ignored. The running product is projected back onto SO(3)
    every renorm_every frames.
    """
    gamma_gv = as_matrix_stack(gamma_gv, 'gamma_gv')
    r_delta_gv = as_matrix_stack(r_delta_gv, 'r_delta_gv')
    if len(gamma_gv) != len(r_delta_gv):
        raise LengthMismatch(
            f"gamma_gv has {len(gamma_gv)} frames but r_delta_gv has {len(r_delta_gv)}"
        )

    out = np.empty_like(gamma_gv)
    acc = np.eye(3)
    out[0] = gamma_gv[0]
    for t in range(1, len(gamma_gv)):
        acc = acc @ r_delta_gv[t]
        if renorm_every and t % renorm_every == 0:
            acc = orthonormalize(acc)
        out[t] = acc @ gamma_gv[t]
    return out


def recover_world_translations(gamma_w, v_root):
    """tau_w^0 = 0 and tau_w^t = sum_{i<t} Gamma_w^i v_root^i"""
    gamma_w = as_matrix_stack(gamma_w, 'gamma_w')
    v_root = _as_vec_track(v_root, 'v_root')
    if len(gamma_w) != len(v_root):
        raise LengthMismatch(f"gamma_w has {len(gamma_w)} frames but v_root has {len(v_root)}")

    steps = np.einsum('tij,tj->ti', gamma_w, v_root)
    tau = np.zeros_like(v_root)
    tau[1:] = np.cumsum(steps[:-1], axis=0)
    return tau


def relative_gv_rotations(gamma_c, gamma_gv, r_delta):
    """Per-frame GV_t -> GV_{t-1} yaw; entry 0 is the identity"""
    out = np.empty_like(gamma_gv)
    out[0] = np.eye(3)
    identity = np.eye(3)
    for t in range(1, len(gamma_gv)):
        if np.array_equal(r_delta[t], identity):
            out[t] = identity
            continue
        try:
            out[t] = relative_gv_rotation(
                Rotation(gamma_c[t]), Rotation(gamma_gv[t]), Rotation(r_delta[t])
            ).matrix
        except GeometryError as exc:
            raise type(exc)(str(exc), frame=t) from exc
    return out


def recover_global_trajectory(inputs, renorm_every=RENORM_EVERY):
    track = GvOrientationTrack(
        gamma_gv=inputs.gamma_gv,
        r_delta_gv=relative_gv_rotations(inputs.gamma_c, inputs.gamma_gv, inputs.r_delta),
    )
    orientations = recover_world_orientations(track.gamma_gv, track.r_delta_gv, renorm_every)
    translations = recover_world_translations(orientations, inputs.v_root)
    logger.debug("Recovered world trajectory over %d frames", len(track))
    return WorldTrajectory(orientations=orientations, translations=translations, r_delta_gv=track.r_delta_gv)


def naive_camera_chain(gamma_c, r_delta, r_c2gv0):
    """
    Baseline world orientations from chaining raw relative camera rotations.

    Camera-space orientations are carried back to camera 0 through the product
    of relative rotations and then into GV_0. Any tilt error in r_delta
    accumulates in the result.
    """
    gamma_c = as_matrix_stack(gamma_c, 'gamma_c')
    r_delta = as_matrix_stack(r_delta, 'r_delta')
    if len(gamma_c) != len(r_delta):
        raise LengthMismatch(f"gamma_c has {len(gamma_c)} frames but r_delta has {len(r_delta)}")
    out = np.empty_like(gamma_c)
    chain = np.eye(3)
    for t in range(len(gamma_c)):
        if t > 0:
            chain = r_delta[t] @ chain
        out[t] = r_c2gv0 @ chain.T @ gamma_c[t]
    return out


def gravity_tilt(rotations):
    """Angle between R e_y and e_y for each rotation in a (T, 3, 3) stack"""
    rotations = as_matrix_stack(rotations)
    up = rotations @ Y_AXIS
    cos = np.clip(up[:, 1], -1.0, 1.0)
    sin = np.linalg.norm(up[:, [0, 2]], axis=-1)
    return np.arctan2(sin, cos)


def orientation_error_curve(recovered, reference):
    """
    Per-frame geodesic error after aligning both tracks on their first frame.

    The alignment removes the gauge freedom between the two world frames.
    """
    recovered = as_matrix_stack(recovered, 'recovered')
    reference = as_matrix_stack(reference, 'reference')
    if len(recovered) != len(reference):
        raise LengthMismatch(f"recovered has {len(recovered)} frames but reference has {len(reference)}")
    gauge = recovered[0] @ reference[0].T
    return geodesic_angles(recovered, gauge @ reference)


def drift_curves(inputs, trajectory, reference_orientations=None):
    """
    Columns for the error-vs-time CSV: GV rollout against the naive baseline.

    Tilt columns measure how far each method's GV_t -> world map moves the
    gravity axis. Error columns are filled when reference orientations exist.
    """
    r_c2gv0 = inputs.gamma_gv[0] @ inputs.gamma_c[0].T
    baseline = naive_camera_chain(inputs.gamma_c, inputs.r_delta, r_c2gv0)
    to_world = np.einsum('tij,tkj->tik', trajectory.orientations, inputs.gamma_gv)
    baseline_to_world = np.einsum('tij,tkj->tik', baseline, inputs.gamma_gv)
    columns = {
        'frame': np.arange(len(inputs), dtype=float),
        'tilt_deg': np.degrees(gravity_tilt(to_world)),
        'baseline_tilt_deg': np.degrees(gravity_tilt(baseline_to_world)),
    }
    if reference_orientations is not None:
        columns['orientation_error_deg'] = np.degrees(
            orientation_error_curve(trajectory.orientations, reference_orientations)
        )
        columns['baseline_orientation_error_deg'] = np.degrees(
            orientation_error_curve(baseline, reference_orientations)
        )
    return columns


def _as_vec_track(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeMismatch(f"{name} must have shape (T, 3), got {arr.shape}")
    return arr
