"""
Skeletons, forward kinematics, CCD inverse kinematics and the stationary-joint
post-processing pass that removes foot sliding from recovered motion.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .exceptions import ProbabilityOutOfRange, ShapeMismatch, UnknownJoint
from .rotmath import axis_angles_to_matrices, matrices_to_axis_angles

logger = logging.getLogger(__name__)

SKELETON_VERSION = 'smpl24-neutral-v1'

# Neutral SMPL rest pose, y up, metres. Offsets are relative to the parent joint.
SMPL24_JOINTS = (
    ('pelvis', -1, (0.0, 0.0, 0.0)),
    ('left_hip', 0, (0.0695, -0.0914, -0.0068)),
    ('right_hip', 0, (-0.0677, -0.0905, -0.0043)),
    ('spine1', 0, (-0.0025, 0.1089, -0.0267)),
    ('left_knee', 1, (0.0343, -0.3752, -0.0045)),
    ('right_knee', 2, (-0.0383, -0.3826, -0.0089)),
    ('spine2', 3, (0.0055, 0.1352, 0.0011)),
    ('left_ankle', 4, (-0.0136, -0.3980, -0.0437)),
    ('right_ankle', 5, (0.0158, -0.3984, -0.0423)),
    ('spine3', 6, (0.0015, 0.0529, 0.0254)),
    ('left_foot', 7, (0.0264, -0.0558, 0.1193)),
    ('right_foot', 8, (-0.0254, -0.0481, 0.1233)),
    ('neck', 9, (-0.0028, 0.2139, -0.0429)),
    ('left_collar', 9, (0.0788, 0.1217, -0.0341)),
    ('right_collar', 9, (-0.0818, 0.1188, -0.0386)),
    ('head', 12, (0.0052, 0.0650, 0.0513)),
    ('left_shoulder', 13, (0.0910, 0.0305, -0.0089)),
    ('right_shoulder', 14, (-0.0960, 0.0326, -0.0091)),
    ('left_elbow', 16, (0.2596, -0.0128, -0.0275)),
    ('right_elbow', 17, (-0.2538, -0.0133, -0.0214)),
    ('left_wrist', 18, (0.2492, 0.0090, -0.0012)),
    ('right_wrist', 19, (-0.2553, 0.0078, -0.0056)),
    ('left_hand', 20, (0.0840, -0.0082, -0.0149)),
    ('right_hand', 21, (-0.0846, -0.0061, -0.0103)),
)

# ankles stand in for heels, feet for toes, wrists for hands
SMPL24_STATIONARY = ('left_ankle', 'left_foot', 'right_ankle', 'right_foot', 'left_wrist', 'right_wrist')
SMPL24_FEET = ('left_foot', 'right_foot')


@dataclass(frozen=True)
class Skeleton:
    """Joint tree with rest offsets; joints are topologically sorted, root first"""

    names: tuple
    parents: tuple
    offsets: np.ndarray
    stationary: tuple = ()
    feet: tuple = ()
    name: str = 'custom'

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'parents', tuple(int(p) for p in self.parents))
        offsets = np.array(self.offsets, dtype=float)
        offsets.setflags(write=False)
        object.__setattr__(self, 'offsets', offsets)
        object.__setattr__(self, 'stationary', tuple(self.stationary))
        object.__setattr__(self, 'feet', tuple(self.feet))

        n = len(self.names)
        if n < 1 or len(self.parents) != n or offsets.shape != (n, 3):
            raise ShapeMismatch(
                f"skeleton needs matching names, parents and (J, 3) offsets; got {n}, "
                f"{len(self.parents)}, {offsets.shape}"
            )
        if self.parents[0] != -1:
            raise ShapeMismatch("joint 0 must be the root (parent -1)")
        for j in range(1, n):
            if not 0 <= self.parents[j] < j:
                raise ShapeMismatch(f"joint {self.names[j]} has parent {self.parents[j]}; parents must precede children")
            if not np.any(offsets[j]):
                raise ShapeMismatch(f"joint {self.names[j]} has a zero rest offset")
        for joint in self.stationary + self.feet:
            self.index(joint)

    @property
    def n_joints(self):
        return len(self.names)

    def index(self, joint):
        if isinstance(joint, (int, np.integer)):
            if not 0 <= joint < self.n_joints:
                raise UnknownJoint(f"joint index {joint} out of range for {self.n_joints} joints")
            return int(joint)
        try:
            return self.names.index(joint)
        except ValueError:
            raise UnknownJoint(f"unknown joint '{joint}'") from None

    @cached_property
    def stationary_indices(self):
        return np.array([self.index(j) for j in self.stationary], dtype=int)

    @cached_property
    def foot_indices(self):
        return np.array([self.index(j) for j in self.feet], dtype=int)

    @cached_property
    def subtree_masks(self):
        """masks[j] selects joint j and all of its descendants"""
        masks = np.eye(self.n_joints, dtype=bool)
        for j in range(self.n_joints - 1, 0, -1):
            masks[self.parents[j]] |= masks[j]
        return masks

    def to_dict(self):
        return {
            'name': self.name,
            'names': list(self.names),
            'parents': list(self.parents),
            'offsets': self.offsets.tolist(),
            'stationary': list(self.stationary),
            'feet': list(self.feet),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            names=data['names'],
            parents=data['parents'],
            offsets=data['offsets'],
            stationary=data.get('stationary', ()),
            feet=data.get('feet', ()),
            name=data.get('name', 'custom'),
        )


def smpl24_skeleton():
    names, parents, offsets = zip(*SMPL24_JOINTS)
    return Skeleton(
        names=names,
        parents=parents,
        offsets=offsets,
        stationary=SMPL24_STATIONARY,
        feet=SMPL24_FEET,
        name='smpl24',
    )


SKELETONS = {'smpl24': smpl24_skeleton}


def get_skeleton(ref):
    """Resolve a registered skeleton name or an inline skeleton dict"""
    if isinstance(ref, Skeleton):
        return ref
    if isinstance(ref, dict):
        return Skeleton.from_dict(ref)
    try:
        return SKELETONS[ref]()
    except KeyError:
        raise UnknownJoint(f"unknown skeleton '{ref}'; known: {', '.join(sorted(SKELETONS))}") from None


def local_rotation_matrices(skel, theta):
    """Accept (..., J-1, 3) axis-angle or (..., J-1, 3, 3) matrices"""
    theta = np.asarray(theta, dtype=float)
    n = skel.n_joints - 1
    if theta.ndim >= 3 and theta.shape[-2:] == (3, 3) and theta.shape[-3] == n:
        return theta
    if theta.ndim >= 2 and theta.shape[-2:] == (n, 3):
        return axis_angles_to_matrices(theta) if n else np.zeros(theta.shape[:-2] + (0, 3, 3))
    raise ShapeMismatch(f"theta must hold {n} local rotations, got shape {theta.shape}")


def forward_kinematics(skel, root_rot, root_pos, theta):
    """Joint positions (J, 3) for a single frame"""
    root = root_rot.matrix if hasattr(root_rot, 'matrix') else np.asarray(root_rot, dtype=float)
    local = local_rotation_matrices(skel, theta)
    if local.ndim != 3:
        raise ShapeMismatch(f"single-frame FK expects one pose, got shape {local.shape}")
    positions, _ = forward_kinematics_batch(skel, root[None], np.asarray(root_pos, dtype=float)[None], local[None])
    return positions[0]


def forward_kinematics_batch(skel, root_rots, root_pos, local):
    """
    Batched FK over frames.

    Returns positions (T, J, 3) and global joint rotations (T, J, 3, 3).
    """
    root_rots = np.asarray(root_rots, dtype=float)
    root_pos = np.asarray(root_pos, dtype=float)
    local = local_rotation_matrices(skel, local)
    t = root_rots.shape[0]
    if root_pos.shape != (t, 3) or local.shape != (t, skel.n_joints - 1, 3, 3):
        raise ShapeMismatch(
            f"FK inputs disagree: root {root_rots.shape}, position {root_pos.shape}, local {local.shape}"
        )

    glob = np.empty((t, skel.n_joints, 3, 3))
    pos = np.empty((t, skel.n_joints, 3))
    glob[:, 0] = root_rots
    pos[:, 0] = root_pos
    for j in range(1, skel.n_joints):
        p = skel.parents[j]
        glob[:, j] = glob[:, p] @ local[:, j - 1]
        pos[:, j] = pos[:, p] + glob[:, p] @ skel.offsets[j]
    return pos, glob


def forward_kinematics_backward(skel, glob, local, d_pos, d_glob=None):
    """
    Reverse-mode FK.

    Given upstream gradients on positions (and optionally global rotations),
    returns gradients on the local rotation matrices, the root rotation and the
    root position.
    """
    d_pos = np.array(d_pos, dtype=float)
    d_glob = np.zeros_like(glob) if d_glob is None else np.array(d_glob, dtype=float)
    d_local = np.zeros_like(local)
    for j in range(skel.n_joints - 1, 0, -1):
        p = skel.parents[j]
        d_pos[:, p] += d_pos[:, j]
        d_glob[:, p] += d_pos[:, j][:, :, None] * skel.offsets[j][None, None, :]
        d_glob[:, p] += d_glob[:, j] @ np.swapaxes(local[:, j - 1], -1, -2)
        d_local[:, j - 1] = np.swapaxes(glob[:, p], -1, -2) @ d_glob[:, j]
    return d_local, d_glob[:, 0], d_pos[:, 0]


@dataclass
class IKResult:
    local_rotations: np.ndarray
    root_rotation: np.ndarray
    errors: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def theta(self):
        return matrices_to_axis_angles(self.local_rotations)


def ccd_ik_solve(skel, root_rot, root_pos, theta, targets, max_iter=50, tol=1e-3,
                 max_step=0.5, solve_root=False):
    """
    Cyclic coordinate descent toward position targets.

    Each outer iteration walks every target's chain from its parent up to the
    root, turning one joint at a time so the end effector swings toward the
    target. Turns are clamped to max_step radians. An outer iteration that
    would raise the summed error is rolled back and ends the solve.
    """
    if max_iter < 1:
        raise ShapeMismatch(f"max_iter must be at least 1, got {max_iter}")
    root = np.array(root_rot.matrix if hasattr(root_rot, 'matrix') else root_rot, dtype=float)
    root_pos = np.asarray(root_pos, dtype=float)
    local = np.array(local_rotation_matrices(skel, theta), dtype=float)

    effectors = [skel.index(joint) for joint in targets]
    goals = np.array([np.asarray(targets[joint], dtype=float) for joint in targets]).reshape(-1, 3)

    pos, glob = forward_kinematics_batch(skel, root[None], root_pos[None], local[None])
    pos, glob = pos[0], glob[0]
    masks = skel.subtree_masks

    def summed_error():
        return float(np.linalg.norm(pos[effectors] - goals, axis=-1).sum()) if effectors else 0.0

    def turn(j, effector, goal):
        nonlocal root
        u = pos[effector] - pos[j]
        w = goal - pos[j]
        if np.linalg.norm(u) < 1e-12 or np.linalg.norm(w) < 1e-12:
            return
        axis = np.cross(u, w)
        sin = np.linalg.norm(axis)
        angle = np.arctan2(sin, np.dot(u, w))
        if angle < 1e-12:
            return
        if sin < 1e-12:
            # opposite directions; any axis normal to u works
            axis = np.cross(u, [1.0, 0.0, 0.0])
            if np.linalg.norm(axis) < 1e-9:
                axis = np.cross(u, [0.0, 1.0, 0.0])
        axis = axis / np.linalg.norm(axis)
        delta = axis_angles_to_matrices(axis * min(angle, max_step))

        if j == 0:
            root = delta @ root
        else:
            parent_glob = glob[skel.parents[j]]
            local[j - 1] = parent_glob.T @ delta @ parent_glob @ local[j - 1]
        sub = masks[j]
        pos[sub] = pos[j] + (pos[sub] - pos[j]) @ delta.T
        glob[sub] = delta @ glob[sub]

    history = [summed_error()]
    iterations = 0
    for _ in range(max_iter):
        if np.all(np.linalg.norm(pos[effectors] - goals, axis=-1) < tol):
            break
        snapshot = (local.copy(), root.copy(), pos.copy(), glob.copy())
        for effector, goal in zip(effectors, goals):
            j = skel.parents[effector]
            while j > 0 or (j == 0 and solve_root):
                turn(j, effector, goal)
                j = skel.parents[j]
        total = summed_error()
        if total > history[-1]:
            local, root, pos, glob = snapshot
            logger.debug("CCD step raised summed error %.6g -> %.6g; rolled back", history[-1], total)
            break
        history.append(total)
        iterations += 1

    final, _ = forward_kinematics_batch(skel, root[None], root_pos[None], local[None])
    errors = np.linalg.norm(final[0, effectors] - goals, axis=-1) if effectors else np.zeros(0)
    return IKResult(
        local_rotations=local,
        root_rotation=root,
        errors=errors,
        iterations=iterations,
        converged=bool(np.all(errors < tol)),
        history=history,
    )


def refine_global_translation(tau, joint_positions, logits, min_logit=None):
    """
    Shift the root so that likely-stationary joints stay put.

    For every frame i >= 1 the softmax-weighted displacement of the candidate
    joints between i-1 and i is subtracted from tau at i and all later frames.
    With min_logit set, joints at or below it are left out of the softmax and
    frames with no remaining joint are not corrected.
    """
    tau = np.asarray(tau, dtype=float)
    joint_positions = np.asarray(joint_positions, dtype=float)
    logits = np.asarray(logits, dtype=float)
    t = tau.shape[0]
    if tau.shape != (t, 3) or joint_positions.ndim != 3 or joint_positions.shape[::2] != (t, 3) \
            or logits.shape != joint_positions.shape[:2]:
        raise ShapeMismatch(
            f"expected tau (T, 3), joints (T, N, 3), logits (T, N); got {tau.shape}, "
            f"{joint_positions.shape}, {logits.shape}"
        )
    if t < 2:
        return tau.copy()

    disp = joint_positions[1:] - joint_positions[:-1]
    scores = logits[1:]
    if min_logit is None:
        active = np.ones_like(scores, dtype=bool)
    else:
        active = scores > min_logit
    frame_active = active.any(axis=1)

    masked = np.where(active, scores, -np.inf)
    masked[~frame_active] = 0.0
    masked = masked - masked.max(axis=1, keepdims=True)
    weights = np.exp(masked)
    weights /= weights.sum(axis=1, keepdims=True)

    correction = np.einsum('tn,tnc->tc', weights, disp)
    correction[~frame_active] = 0.0

    out = tau.copy()
    out[1:] -= np.cumsum(correction, axis=0)
    return out


def adjust_stationary_positions(positions, probs):
    """p*_0 = p_0 and p*_i = p_i (1 - c_i) + p*_{i-1} c_i"""
    positions = np.asarray(positions, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or positions.shape[0] != probs.shape[0]:
        raise ShapeMismatch(f"positions {positions.shape} and probabilities {probs.shape} disagree on frames")
    if np.any((probs < 0.0) | (probs > 1.0)) or not np.all(np.isfinite(probs)):
        bad = int(np.flatnonzero(~((probs >= 0.0) & (probs <= 1.0)))[0])
        raise ProbabilityOutOfRange(f"probability {probs[bad]} outside [0, 1]", frame=bad)

    out = np.empty_like(positions)
    if len(positions) == 0:
        return out
    out[0] = positions[0]
    for i in range(1, len(positions)):
        out[i] = positions[i] * (1.0 - probs[i]) + out[i - 1] * probs[i]
    return out


@dataclass(frozen=True)
class PostprocessConfig:
    contact_threshold: float = 0.5
    ik_max_iter: int = 50
    ik_tol: float = 1e-3
    ik_max_step: float = 0.5
    refine_translation: bool = True
    solve_ik: bool = True


def postprocess_motion(motion, skel, params=PostprocessConfig()):
    """
    Pin stationary joints: root refinement, target smoothing, then per-frame IK.

    Returns a new motion with adjusted root translation, local rotations and
    joint positions. Frames without a joint above the contact threshold keep
    their pose. params.refine_translation and params.solve_ik switch the root
    and the smoothing plus IK stages off independently.
    """
    if motion.stationary_logits is None:
        raise ShapeMismatch("post-processing needs stationary logits on the motion")
    candidates = skel.stationary_indices
    logits = np.asarray(motion.stationary_logits, dtype=float)
    if logits.shape != (motion.n_frames, len(candidates)):
        raise ShapeMismatch(
            f"stationary logits have shape {logits.shape}, expected ({motion.n_frames}, {len(candidates)})"
        )

    local = local_rotation_matrices(skel, motion.local_rotations)
    joints, _ = forward_kinematics_batch(skel, motion.root_orientation, motion.root_translation, local)

    threshold = params.contact_threshold
    min_logit = float(np.log(threshold / (1.0 - threshold)))
    tau = motion.root_translation
    if params.refine_translation:
        tau = refine_global_translation(tau, joints[:, candidates], logits, min_logit=min_logit)
        joints = joints + (tau - motion.root_translation)[:, None, :]
    new_local = local
    if params.solve_ik:
        new_local = _pin_stationary_joints(skel, motion, tau, local, joints[:, candidates], logits, params)

    positions, _ = forward_kinematics_batch(skel, motion.root_orientation, tau, new_local)
    return replace(motion, root_translation=tau, local_rotations=new_local, joint_positions=positions)


def _pin_stationary_joints(skel, motion, tau, local, stationary_joints, logits, params):
    """Smoothed targets for pinned joints, then per-frame IK; returns new local rotations"""
    candidates = skel.stationary_indices
    threshold = params.contact_threshold

    probs = 1.0 / (1.0 + np.exp(-logits))
    targets = np.stack(
        [adjust_stationary_positions(stationary_joints[:, k], probs[:, k]) for k in range(len(candidates))],
        axis=1,
    )

    new_local = local.copy()
    unconverged = 0
    for t in range(motion.n_frames):
        pinned = probs[t] > threshold
        if not pinned.any():
            continue
        frame_targets = {int(candidates[k]): targets[t, k] for k in np.flatnonzero(pinned)}
        result = ccd_ik_solve(
            skel, motion.root_orientation[t], tau[t], local[t], frame_targets,
            max_iter=params.ik_max_iter, tol=params.ik_tol, max_step=params.ik_max_step,
        )
        new_local[t] = result.local_rotations
        unconverged += not result.converged
    if unconverged:
        logger.warning("IK did not reach tolerance on %d of %d frames", unconverged, motion.n_frames)
    return new_local
