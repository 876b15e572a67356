"""
Pipelines shared by the management commands and the HTTP API.

Each function takes parsed file schemas or in-memory tracks and returns
in-memory results; reading and writing files is left to the caller.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import LengthMismatch
from .formats import (
    camera_from_file,
    camera_to_file,
    motion_to_file,
    prediction_arrays,
    prediction_to_file,
    quaternion_track,
)
from .kinematics import ccd_ik_solve, get_skeleton, postprocess_motion
from .metrics import evaluate
from .rotmath import matrices_to_quaternions
from .seqmodel import ModelParams, transformer_forward
from .synth import observed_camera
from .tracks import CameraTrack, MotionSequence
from .trajectory import RENORM_EVERY, TrajectoryInputs, drift_curves, recover_global_trajectory

logger = logging.getLogger(__name__)

# recovered motion lives in the first GV frame, whose y axis points along gravity
GV_GRAVITY = (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class Recovery:
    motion: MotionSequence
    inputs: TrajectoryInputs
    trajectory: object


def recover_motion(prediction_file, camera_file, renorm_every=RENORM_EVERY, source='<payload>'):
    """World motion from per-frame predictions and a camera track"""
    arrays = prediction_arrays(prediction_file, source)
    camera = camera_from_file(camera_file, source) if not isinstance(camera_file, CameraTrack) else camera_file
    r_delta = camera.relative_rotations()
    n = len(arrays['gamma_gv'])
    if len(r_delta) != n:
        raise LengthMismatch(f"prediction has {n} frames but the camera track has {len(r_delta)}")

    inputs = TrajectoryInputs(
        gamma_gv=arrays['gamma_gv'],
        gamma_c=arrays['gamma_c'],
        v_root=arrays['v_root'],
        r_delta=r_delta,
        fps=prediction_file.fps,
    )
    trajectory = recover_global_trajectory(inputs, renorm_every)
    skeleton = arrays['skeleton']
    local = arrays['local_rotations']
    if local is None:
        local = np.broadcast_to(np.eye(3), (n, skeleton.n_joints - 1, 3, 3)).copy()
    motion = MotionSequence(
        fps=prediction_file.fps,
        skeleton=skeleton,
        root_orientation=trajectory.orientations,
        root_translation=trajectory.translations,
        local_rotations=local,
        stationary_logits=arrays['stationary_logits'],
        camera_orientation=arrays['gamma_c'],
        gravity=GV_GRAVITY,
    )
    logger.info("Recovered %d frames of world motion", n)
    return Recovery(motion=motion, inputs=inputs, trajectory=trajectory)


def recovery_curves(recovery, reference=None):
    """Error-vs-time columns; reference is a world MotionSequence"""
    orientations = None if reference is None else reference.root_orientation
    if orientations is not None and len(orientations) != len(recovery.inputs):
        raise LengthMismatch(
            f"reference has {len(orientations)} frames but the recovery has {len(recovery.inputs)}"
        )
    return drift_curves(recovery.inputs, recovery.trajectory, orientations)


def _foot_contact(motion):
    """Ground-truth foot contact from stationary logits, or None"""
    if motion.stationary_logits is None:
        return None
    skel = motion.skeleton
    columns = [list(skel.stationary).index(foot) for foot in skel.feet if foot in skel.stationary]
    if len(columns) != len(skel.feet):
        return None
    return motion.stationary_logits[:, columns] > 0.0


def evaluate_motions(pred, gt, segment_len=100):
    """Full metric report for a predicted world motion against a reference"""
    if pred.n_frames != gt.n_frames:
        raise LengthMismatch(f"prediction has {pred.n_frames} frames but the reference has {gt.n_frames}")
    if pred.skeleton.n_joints != gt.skeleton.n_joints:
        raise LengthMismatch(
            f"prediction has {pred.skeleton.n_joints} joints but the reference has {gt.skeleton.n_joints}"
        )
    feet = gt.skeleton.foot_indices
    contact = _foot_contact(gt)
    return evaluate(
        pred.joints(),
        gt.joints(),
        gt.fps,
        pred_camera=pred.camera_relative_joints(),
        gt_camera=gt.camera_relative_joints(),
        pred_root=pred.root_translation,
        gt_root=gt.root_translation,
        pred_feet=pred.joints()[:, feet] if len(feet) else None,
        contact=contact,
        gt_foot_heights=gt.ground_heights(feet) if contact is None and len(feet) else None,
        gravity=pred.gravity,
        segment_len=segment_len,
    )


def refine_motion(motion, config, postprocess=True):
    """Stationary-joint post-processing; with postprocess=False the motion is returned as is"""
    if not postprocess:
        logger.info("Post-processing skipped for %d frames", motion.n_frames)
        return motion
    return postprocess_motion(motion, motion.skeleton, config)


def synth_files(bundle):
    """Ground-truth motion, observed camera and exact prediction files for a synthetic bundle"""
    noiseless = np.array_equal(bundle.r_delta_observed, bundle.camera.relative_rotations())
    camera = bundle.camera if noiseless else observed_camera(bundle)
    prediction = prediction_to_file(
        bundle.config.fps,
        bundle.gamma_gv,
        bundle.gamma_c,
        bundle.v_root,
        skeleton=bundle.motion.skeleton,
        local_rotations=bundle.motion.local_rotations,
        stationary_logits=bundle.motion.stationary_logits,
    )
    return motion_to_file(bundle.motion), camera_to_file(camera), prediction


def attention_checksums(config, seed=0, length=64):
    """
    Seeded transformer run summarised as checksums.

    Also reports the largest output change under a +1000 shift of every
    temporal index, which rotary attention keeps at rounding level.
    """
    params = ModelParams.init(config, seed=seed)
    tokens = np.random.default_rng(seed + 1).normal(size=(length, config.model_dim))
    out = transformer_forward(params, tokens)
    shifted = transformer_forward(params, tokens, positions=np.arange(length) + 1000.0)
    return {
        'seed': seed,
        'length': length,
        'model': config.to_dict(),
        'sum': float(out.sum()),
        'abs_sum': float(np.abs(out).sum()),
        'sq_sum': float((out ** 2).sum()),
        'first_row': out[0, :4].tolist(),
        'shift_max_abs_diff': float(np.abs(out - shifted).max()),
    }


def solve_ik(request, max_iter=50, tol=1e-3, max_step=0.5, source='<payload>'):
    """Solve one IK request schema; returns a JSON-ready dict"""
    skel = get_skeleton(request.skeleton)
    root = quaternion_track([request.root_orientation], 'root_orientation', source)[0]
    if request.local_rotations is None:
        local = np.broadcast_to(np.eye(3), (skel.n_joints - 1, 3, 3)).copy()
    else:
        local = quaternion_track([request.local_rotations], 'local_rotations', source)[0]
    targets = {skel.index(name): np.asarray(point, dtype=float) for name, point in request.targets.items()}
    result = ccd_ik_solve(
        skel, root, np.asarray(request.root_position, dtype=float), local, targets,
        max_iter=max_iter, tol=tol, max_step=max_step, solve_root=request.solve_root,
    )
    if not result.converged:
        logger.warning("IK stopped after %d iterations with max error %.3g m", result.iterations, result.errors.max())
    return {
        'skeleton': skel.name,
        'converged': result.converged,
        'iterations': result.iterations,
        'errors': {skel.names[j]: float(e) for j, e in zip(targets, result.errors)},
        'history': [float(h) for h in result.history],
        'root_orientation': matrices_to_quaternions(result.root_rotation[None])[0].tolist(),
        'local_rotations': matrices_to_quaternions(result.local_rotations).tolist(),
    }
