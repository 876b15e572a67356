"""
Synthetic walks filmed by simulated cameras.

A skeleton walks along a smooth path with its stance toe locked to the ground,
while a static, orbiting or handheld camera films it. Every quantity the
trajectory pipeline consumes (camera-frame and GV orientations, root
velocities, relative camera rotations) is derived exactly from the ground
truth, and observation noise is applied on top when configured.
"""
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import BadConfig
from .gv_geometry import build_gv_basis
from .kinematics import forward_kinematics_batch, get_skeleton
from .rotmath import axis_angles_to_matrices, matrix_to_6d, rot_about_x, rot_about_y, rot_about_z, yaw_matrices
from .seqmodel import FrameFeatures, KEYPOINT_LIMIT
from .tracks import CameraTrack, Intrinsics, MotionSequence, relative_from_absolute
from .trajectory import TrajectoryInputs

logger = logging.getLogger(__name__)

CAMERA_MODES = ('static', 'orbit', 'handheld')
WORLD_GRAVITY = np.array([0.0, -1.0, 0.0])
CONTACT_LOGIT = 10.0
BBOX_MARGIN = 1.2


@dataclass(frozen=True)
class NoiseConfig:
    """Observation noise; all zero gives exact inputs"""

    r_delta_tilt_deg: float = 0.0
    r_delta_yaw_deg: float = 0.0
    keypoint_sigma: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    length: int = 300
    fps: float = 30.0
    camera_mode: str = 'orbit'
    skeleton: str = 'smpl24'
    gait_hz: float = 0.9
    hip_swing: float = 0.35
    knee_flex: float = 0.6
    turn_std: float = 0.6
    camera_distance: float = 4.0
    camera_height: float = 0.5
    orbit_rate: float = 0.3
    handheld_sigma_deg: float = 1.5
    handheld_tau: float = 0.5
    focal: float = 1000.0
    width: int = 1280
    height: int = 720
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.length < 2:
            raise BadConfig(f"synthetic sequences need at least 2 frames, got {self.length}")
        if self.camera_mode not in CAMERA_MODES:
            raise BadConfig(f"unknown camera mode '{self.camera_mode}'; expected one of {', '.join(CAMERA_MODES)}")
        if self.fps <= 0 or self.focal <= 0 or self.camera_distance <= 0:
            raise BadConfig("fps, focal and camera_distance must be positive")
        if isinstance(self.noise, dict):
            object.__setattr__(self, 'noise', NoiseConfig(**self.noise))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        noise = data.pop('noise', {})
        try:
            return cls(noise=NoiseConfig(**noise), **data)
        except TypeError as exc:
            raise BadConfig(f"invalid synth config: {exc}") from None


@dataclass(frozen=True)
class SynthBundle:
    """
    Ground truth plus exact derived tracks for one synthetic sequence.

    gauge maps world coordinates into the first frame's GV system, which is
    the frame trajectory recovery reports in. r_delta_observed carries the
    configured noise; camera.relative is exact.
    """

    seed: int
    config: SynthConfig
    motion: MotionSequence
    camera: CameraTrack
    camera_centers: np.ndarray
    gamma_c: np.ndarray
    gamma_gv: np.ndarray
    v_root: np.ndarray
    gravity_c: np.ndarray
    r_delta_observed: np.ndarray
    gauge: np.ndarray
    contact: np.ndarray
    keypoints_px: np.ndarray
    bbox_px: np.ndarray
    transl_c: np.ndarray
    features: FrameFeatures

    @property
    def n_frames(self):
        return self.motion.n_frames

    def trajectory_inputs(self):
        return TrajectoryInputs(
            gamma_gv=self.gamma_gv,
            gamma_c=self.gamma_c,
            v_root=self.v_root,
            r_delta=self.r_delta_observed,
            fps=self.config.fps,
        )

    def gauge_orientations(self):
        return np.einsum('ij,tjk->tik', self.gauge, self.motion.root_orientation)

    def gauge_translations(self):
        tau = self.motion.root_translation
        return (tau - tau[0]) @ self.gauge.T

    def gauge_joints(self):
        return (self.motion.joints() - self.motion.root_translation[0]) @ self.gauge.T


def look_at(center, target, down=WORLD_GRAVITY):
    """World-to-camera rotation for a camera at center looking at target, y axis toward down"""
    z = target - center
    z = z / np.linalg.norm(z)
    y = down - np.dot(down, z) * z
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return np.stack([x, y, z])


def _heading(rng, config, times):
    duration = times[-1]
    knots = np.linspace(0.0, duration, max(2, int(np.ceil(duration)) + 2))
    values = np.cumsum(rng.normal(0.0, config.turn_std, size=len(knots)))
    return CubicSpline(knots, values)(times)


def _gait_pose(skel, config, phase):
    """Local rotations (T, J-1, 3, 3): hip swing, swing-phase knee flex, arms down with a small swing"""
    t = len(phase)
    local = np.broadcast_to(np.eye(3), (t, skel.n_joints - 1, 3, 3)).copy()
    swing = config.hip_swing * np.sin(phase)
    # squared so the knee angle and its rate are zero at the stance switch
    left_knee = config.knee_flex * np.maximum(0.0, -np.cos(phase)) ** 2
    right_knee = config.knee_flex * np.maximum(0.0, np.cos(phase)) ** 2
    arm = 0.2 * np.sin(phase)
    for i in range(t):
        local[i, skel.index('left_hip') - 1] = rot_about_x(swing[i]).matrix
        local[i, skel.index('right_hip') - 1] = rot_about_x(-swing[i]).matrix
        local[i, skel.index('left_knee') - 1] = rot_about_x(left_knee[i]).matrix
        local[i, skel.index('right_knee') - 1] = rot_about_x(right_knee[i]).matrix
        local[i, skel.index('left_shoulder') - 1] = rot_about_x(-arm[i]).matrix @ rot_about_z(-1.2).matrix
        local[i, skel.index('right_shoulder') - 1] = rot_about_x(arm[i]).matrix @ rot_about_z(1.2).matrix
    return local


def _foot_locked_root(skel, gamma_w, body, left_stance):
    """Root translation that keeps the stance toe fixed in the world"""
    toes = {True: skel.index('left_foot'), False: skel.index('right_foot')}

    def toe(i, left):
        return gamma_w[i] @ body[i, toes[left]]

    t = len(gamma_w)
    tau = np.empty((t, 3))
    stance = bool(left_stance[0])
    # stance toe over the origin, lowest toe on the ground plane y = 0
    tau[0] = -toe(0, stance)
    tau[0, 1] = -min(toe(0, True)[1], toe(0, False)[1])
    anchor = tau[0] + toe(0, stance)
    for i in range(1, t):
        tau[i] = anchor - toe(i, stance)
        if bool(left_stance[i]) != stance:
            stance = bool(left_stance[i])
            anchor = tau[i] + toe(i, stance)
    return tau


def _contact_labels(joints, indices):
    """Joint did not move since the previous frame; frame 0 copies frame 1"""
    moved = np.linalg.norm(np.diff(joints[:, indices], axis=0), axis=-1)
    contact = np.zeros((len(joints), len(indices)), dtype=bool)
    contact[1:] = moved < 1e-9
    contact[0] = contact[1]
    return contact


def _camera_path(rng, config, times, tau, psi):
    t = len(times)
    world_to_camera = np.empty((t, 3, 3))
    centers = np.empty((t, 3))
    if config.camera_mode == 'static':
        centroid = tau.mean(axis=0)
        extent = np.max(np.linalg.norm(tau - centroid, axis=1))
        direction = rot_about_y(rng.uniform(-np.pi, np.pi)).matrix @ np.array([0.0, 0.0, 1.0])
        center = centroid + direction * (extent + config.camera_distance) + np.array([0.0, config.camera_height, 0.0])
        world_to_camera[:] = look_at(center, centroid)
        centers[:] = center
        return world_to_camera, centers

    offset = np.array([0.0, config.camera_height, config.camera_distance])
    if config.camera_mode == 'orbit':
        start = rng.uniform(-np.pi, np.pi)
        for i in range(t):
            centers[i] = tau[i] + rot_about_y(start + config.orbit_rate * times[i]).matrix @ offset
            world_to_camera[i] = look_at(centers[i], tau[i])
        return world_to_camera, centers

    # handheld: follow from behind with Ornstein-Uhlenbeck shake on the rotation
    behind = offset * np.array([1.0, 1.0, -1.0])
    dt = 1.0 / config.fps
    decay = np.exp(-dt / config.handheld_tau)
    sigma = np.radians(config.handheld_sigma_deg)
    shake = rng.normal(0.0, sigma, size=3)
    draws = rng.normal(size=(t, 3))
    for i in range(t):
        if i:
            shake = decay * shake + sigma * np.sqrt(1.0 - decay ** 2) * draws[i]
        centers[i] = tau[i] + rot_about_y(psi[i]).matrix @ behind
        world_to_camera[i] = axis_angles_to_matrices(shake) @ look_at(centers[i], tau[i])
    return world_to_camera, centers


def _observe_relative(rng, noise, relative):
    if noise.r_delta_tilt_deg <= 0 and noise.r_delta_yaw_deg <= 0:
        return relative.copy()
    t = len(relative)
    tilt = np.radians(noise.r_delta_tilt_deg)
    yaw = np.radians(noise.r_delta_yaw_deg)
    perturb = np.column_stack([
        rng.uniform(-tilt, tilt, size=t),
        rng.uniform(-yaw, yaw, size=t),
        rng.uniform(-tilt, tilt, size=t),
    ])
    perturb[0] = 0.0
    return axis_angles_to_matrices(perturb) @ relative


def _keypoints(rng, config, intrinsics, joints_c):
    """Pixel keypoints, pixel boxes and box-normalized keypoints with clipped jitter"""
    uv = intrinsics.project(joints_c)
    lo, hi = uv.min(axis=1), uv.max(axis=1)
    center = 0.5 * (lo + hi)
    size = BBOX_MARGIN * np.max(hi - lo, axis=1)
    bbox_px = np.column_stack([center, size])
    normalized = (uv - center[:, None, :]) / (0.5 * size[:, None, None])
    if config.noise.keypoint_sigma > 0:
        normalized = normalized + rng.normal(0.0, config.noise.keypoint_sigma, size=normalized.shape)
    normalized = np.clip(normalized, -KEYPOINT_LIMIT, KEYPOINT_LIMIT)
    keypoints = np.concatenate([normalized, np.ones(normalized.shape[:-1] + (1,))], axis=-1)
    return uv, bbox_px, keypoints


def synth_sequence(seed, config=None):
    """
    Generate one synthetic bundle; the same (seed, config) always gives the same bundle.
    """
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    skel = get_skeleton(config.skeleton)
    t = config.length
    times = np.arange(t) / config.fps

    psi = _heading(rng, config, times)
    gamma_w = yaw_matrices(psi)
    phase = 2.0 * np.pi * config.gait_hz * times + rng.uniform(0.0, 2.0 * np.pi)
    local = _gait_pose(skel, config, phase)

    body, _ = forward_kinematics_batch(skel, np.broadcast_to(np.eye(3), (t, 3, 3)), np.zeros((t, 3)), local)
    tau = _foot_locked_root(skel, gamma_w, body, np.cos(phase) > 0.0)
    joints = tau[:, None, :] + np.einsum('tij,tnj->tni', gamma_w, body)
    contact = _contact_labels(joints, skel.stationary_indices)

    world_to_camera, centers = _camera_path(rng, config, times, tau, psi)
    if config.camera_mode == 'static':
        relative = np.broadcast_to(np.eye(3), (t, 3, 3)).copy()
    else:
        relative = relative_from_absolute(world_to_camera)

    gamma_c = world_to_camera @ gamma_w
    gravity_c = world_to_camera @ WORLD_GRAVITY
    gamma_gv = np.empty_like(gamma_c)
    for i in range(t):
        gamma_gv[i] = build_gv_basis(gravity_c[i]).r_c2gv.matrix @ gamma_c[i]
    gauge = build_gv_basis(gravity_c[0]).r_c2gv.matrix @ world_to_camera[0]

    steps = np.diff(tau, axis=0)
    steps = np.vstack([steps, steps[-1:]])
    v_root = np.einsum('tji,tj->ti', gamma_w, steps)

    intrinsics = Intrinsics(f=config.focal, px=config.width / 2.0, py=config.height / 2.0,
                            width=config.width, height=config.height)
    joints_c = np.einsum('tij,tnj->tni', world_to_camera, joints - centers[:, None, :])
    transl_c = np.einsum('tij,tj->ti', world_to_camera, tau - centers)
    uv, bbox_px, keypoints = _keypoints(rng, config, intrinsics, joints_c)
    r_delta_observed = _observe_relative(rng, config.noise, relative)

    bbox_feature = np.column_stack([
        (bbox_px[:, 0] - intrinsics.px) / intrinsics.f,
        (bbox_px[:, 1] - intrinsics.py) / intrinsics.f,
        bbox_px[:, 2] / intrinsics.f,
    ])
    features = FrameFeatures(bbox=bbox_feature, keypoints=keypoints, cam_rot=matrix_to_6d(r_delta_observed))

    motion = MotionSequence(
        fps=config.fps,
        skeleton=skel,
        root_orientation=gamma_w,
        root_translation=tau,
        local_rotations=local,
        joint_positions=joints,
        stationary_logits=np.where(contact, CONTACT_LOGIT, -CONTACT_LOGIT),
        camera_orientation=gamma_c,
        gravity=tuple(WORLD_GRAVITY),
    )
    camera = CameraTrack(
        fps=config.fps,
        intrinsics=intrinsics,
        gravity_c0=gravity_c[0],
        world_to_camera=world_to_camera,
        relative=relative,
    )
    logger.debug("Synthesised %d frames with a %s camera (seed %d)", t, config.camera_mode, seed)
    return SynthBundle(
        seed=seed,
        config=config,
        motion=motion,
        camera=camera,
        camera_centers=centers,
        gamma_c=gamma_c,
        gamma_gv=gamma_gv,
        v_root=v_root,
        gravity_c=gravity_c,
        r_delta_observed=r_delta_observed,
        gauge=gauge,
        contact=contact,
        keypoints_px=uv,
        bbox_px=bbox_px,
        transl_c=transl_c,
        features=features,
    )


def inject_foot_slide(motion, contact, skel, step=0.01, direction=None):
    """
    Add a horizontal drift of step metres per frame while any foot is in contact.

    Returns a copy of the motion with shifted root and joints.
    """
    direction = np.array([1.0, 0.0, 0.0]) if direction is None else np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    feet = [list(skel.stationary).index(f) for f in skel.feet]
    sliding = np.asarray(contact)[:, feet].any(axis=1).astype(float)
    sliding[0] = 0.0
    drift = np.cumsum(sliding)[:, None] * step * direction
    joints = motion.joints() + drift[:, None, :]
    return replace(motion, root_translation=motion.root_translation + drift, joint_positions=joints)


def observed_camera(bundle):
    return CameraTrack(fps=bundle.camera.fps, intrinsics=bundle.camera.intrinsics,
                       gravity_c0=bundle.camera.gravity_c0, relative=bundle.r_delta_observed)
