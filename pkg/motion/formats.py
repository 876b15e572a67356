"""
Reading and writing motion, camera and prediction files.

Files are JSON with shortest round-trip floats, so a load followed by a save
reproduces every number exactly. Field order follows the schema declaration.
"""
import json
import logging

import numpy as np
from pydantic import ValidationError
from scipy.special import logit

from .exceptions import NormViolation, ParseError, VersionUnsupported
from .kinematics import SKELETONS, get_skeleton
from .rotmath import matrices_to_quaternions, quaternions_to_matrices
from .schemas import (
    FORMAT_VERSION,
    CameraFileSchema,
    IKRequestSchema,
    IntrinsicsSchema,
    MotionFileSchema,
    PredictionFileSchema,
)
from .tracks import CameraTrack, Intrinsics, MotionSequence

logger = logging.getLogger(__name__)

QUAT_TOL = 1e-6
PROB_CLIP = 1e-6


def read_json(path):
    try:
        with open(path, encoding='utf-8') as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse(schema_cls, data, source='<payload>'):
    """Validate a decoded JSON object against a file schema"""
    if not isinstance(data, dict):
        raise ParseError(f"{source}: expected a JSON object, got {type(data).__name__}")
    if schema_cls not in FRAME_TRACKS:
        return _validate(schema_cls, data, source)
    if 'version' not in data:
        raise ParseError(f"{source}: missing field 'version'")
    _check_version(data['version'], source)
    return check_file(_validate(schema_cls, data, source), source)


def check_file(parsed, source='<payload>'):
    """Version and frame-count checks for a file schema validated elsewhere"""
    _check_version(parsed.version, source)
    _check_frame_counts(parsed, source)
    return parsed


def _check_version(version, source):
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{source}: version '{version}' is not supported; expected '{FORMAT_VERSION}'")


def _validate(schema_cls, data, source):
    try:
        return schema_cls.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = '.'.join(str(part) for part in first['loc'])
        if first['type'] == 'missing':
            raise ParseError(f"{source}: missing field '{where}'") from None
        raise ParseError(f"{source}: field '{where}': {first['msg']}") from None


FRAME_TRACKS = {
    MotionFileSchema: ('root_orientation', 'root_translation', 'local_rotations', 'joint_positions',
                       'stationary_logits', 'stationary_probs', 'camera_orientation'),
    CameraFileSchema: ('world_to_camera', 'relative'),
    PredictionFileSchema: ('gamma_gv', 'gamma_c', 'v_root', 'local_rotations', 'stationary_logits'),
}


def _check_frame_counts(parsed, source):
    lengths = {}
    for name in FRAME_TRACKS[type(parsed)]:
        value = getattr(parsed, name)
        if value is not None:
            lengths[name] = len(value)
    if not lengths:
        raise ParseError(f"{source}: no per-frame track present")
    expected = max(lengths.values())
    for name, n in lengths.items():
        if n != expected:
            raise ParseError(f"{source}: track '{name}' has {n} frames, expected {expected}")


def dumps(parsed):
    return json.dumps(parsed.model_dump(exclude_none=True), separators=(',', ':')) + '\n'


def _write(path, parsed):
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(dumps(parsed))
    logger.info("Wrote %s", path)


def load_motion(path):
    return parse(MotionFileSchema, read_json(path), str(path))


def save_motion(path, motion_file):
    _write(path, motion_file)


def load_camera(path):
    return parse(CameraFileSchema, read_json(path), str(path))


def save_camera(path, camera_file):
    _write(path, camera_file)


def load_prediction(path):
    return parse(PredictionFileSchema, read_json(path), str(path))


def save_prediction(path, prediction_file):
    _write(path, prediction_file)


def write_json(path, data):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(data, fh, indent=2)
        fh.write('\n')
    logger.info("Wrote %s", path)


def write_csv(path, columns):
    """One column per key; floats written with 17 significant digits"""
    header = ','.join(columns)
    table = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt='%.17g')
    logger.info("Wrote %d rows to %s", len(table), path)


def quaternion_track(values, name, source='<payload>'):
    """(T, ..., 4) w-first quaternions to rotation matrices, rejecting non-unit entries"""
    q = np.asarray(values, dtype=float)
    if q.ndim < 2 or q.shape[-1] != 4:
        raise ParseError(f"{source}: track '{name}' must hold 4-component quaternions, got shape {q.shape}")
    norms = np.linalg.norm(q, axis=-1)
    bad = np.abs(norms - 1.0) > QUAT_TOL
    if np.any(bad):
        frame = int(np.argwhere(bad)[0][0])
        raise NormViolation(
            f"{source}: track '{name}' has a quaternion of norm {norms[np.nonzero(bad)][0]:.9f}", frame=frame
        )
    return quaternions_to_matrices(q)


def vector_track(values, name, width=3, source='<payload>'):
    v = np.asarray(values, dtype=float)
    if v.ndim < 2 or v.shape[-1] != width:
        raise ParseError(f"{source}: track '{name}' must hold {width}-vectors, got shape {v.shape}")
    return v


def _skeleton_ref(skeleton):
    if skeleton.name in SKELETONS:
        return skeleton.name
    return skeleton.to_dict()


def motion_from_file(motion_file, source='<payload>'):
    skeleton = get_skeleton(motion_file.skeleton)
    n_local = skeleton.n_joints - 1
    local = np.asarray(motion_file.local_rotations, dtype=float)
    if local.size == 0 and n_local == 0:
        local = np.zeros((len(motion_file.root_orientation), 0, 3, 3))
    else:
        local = quaternion_track(local, 'local_rotations', source)

    logits = None
    if motion_file.stationary_logits is not None:
        logits = vector_track(motion_file.stationary_logits, 'stationary_logits',
                              len(skeleton.stationary), source)
    elif motion_file.stationary_probs is not None:
        probs = vector_track(motion_file.stationary_probs, 'stationary_probs', len(skeleton.stationary), source)
        logits = logit(np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP))

    return MotionSequence(
        fps=motion_file.fps,
        skeleton=skeleton,
        root_orientation=quaternion_track(motion_file.root_orientation, 'root_orientation', source),
        root_translation=vector_track(motion_file.root_translation, 'root_translation', 3, source),
        local_rotations=local,
        joint_positions=(None if motion_file.joint_positions is None
                         else vector_track(motion_file.joint_positions, 'joint_positions', 3, source)),
        stationary_logits=logits,
        camera_orientation=(None if motion_file.camera_orientation is None
                            else quaternion_track(motion_file.camera_orientation, 'camera_orientation', source)),
        gravity=tuple(motion_file.gravity) if motion_file.gravity is not None else (0.0, -1.0, 0.0),
    )


def motion_to_file(motion, include_joints=True):
    def optional(value, convert):
        return None if value is None else convert(value).tolist()

    return MotionFileSchema(
        version=FORMAT_VERSION,
        fps=motion.fps,
        skeleton=_skeleton_ref(motion.skeleton),
        root_orientation=matrices_to_quaternions(motion.root_orientation).tolist(),
        root_translation=np.asarray(motion.root_translation).tolist(),
        local_rotations=(matrices_to_quaternions(motion.local_rotations).tolist()
                         if motion.local_rotations.shape[1] else [[] for _ in range(motion.n_frames)]),
        joint_positions=optional(motion.joint_positions if include_joints else None, np.asarray),
        stationary_logits=optional(motion.stationary_logits, np.asarray),
        camera_orientation=optional(motion.camera_orientation, matrices_to_quaternions),
        gravity=list(motion.gravity),
    )


def camera_from_file(camera_file, source='<payload>'):
    intr = camera_file.intrinsics
    return CameraTrack(
        fps=camera_file.fps,
        intrinsics=Intrinsics(f=intr.f, px=intr.px, py=intr.py, width=intr.width, height=intr.height),
        gravity_c0=np.asarray(camera_file.gravity_c0, dtype=float),
        world_to_camera=(None if camera_file.world_to_camera is None
                         else quaternion_track(camera_file.world_to_camera, 'world_to_camera', source)),
        relative=(None if camera_file.relative is None
                  else quaternion_track(camera_file.relative, 'relative', source)),
    )


def camera_to_file(track):
    intr = track.intrinsics
    return CameraFileSchema(
        version=FORMAT_VERSION,
        fps=track.fps,
        intrinsics=IntrinsicsSchema(f=intr.f, px=intr.px, py=intr.py, width=intr.width, height=intr.height),
        gravity_c0=np.asarray(track.gravity_c0, dtype=float).tolist(),
        world_to_camera=(None if track.world_to_camera is None
                         else matrices_to_quaternions(track.world_to_camera).tolist()),
        relative=None if track.relative is None else matrices_to_quaternions(track.relative).tolist(),
    )


def prediction_to_file(fps, gamma_gv, gamma_c, v_root, skeleton=None, local_rotations=None,
                       stationary_logits=None):
    return PredictionFileSchema(
        version=FORMAT_VERSION,
        fps=fps,
        skeleton=_skeleton_ref(skeleton) if skeleton is not None else 'smpl24',
        gamma_gv=matrices_to_quaternions(gamma_gv).tolist(),
        gamma_c=matrices_to_quaternions(gamma_c).tolist(),
        v_root=np.asarray(v_root, dtype=float).tolist(),
        local_rotations=None if local_rotations is None else matrices_to_quaternions(local_rotations).tolist(),
        stationary_logits=None if stationary_logits is None else np.asarray(stationary_logits).tolist(),
    )


def prediction_arrays(prediction_file, source='<payload>'):
    """Matrix and vector tracks of a prediction file"""
    skeleton = get_skeleton(prediction_file.skeleton)
    return {
        'skeleton': skeleton,
        'gamma_gv': quaternion_track(prediction_file.gamma_gv, 'gamma_gv', source),
        'gamma_c': quaternion_track(prediction_file.gamma_c, 'gamma_c', source),
        'v_root': vector_track(prediction_file.v_root, 'v_root', 3, source),
        'local_rotations': (None if prediction_file.local_rotations is None
                            else quaternion_track(prediction_file.local_rotations, 'local_rotations', source)),
        'stationary_logits': (None if prediction_file.stationary_logits is None
                              else vector_track(prediction_file.stationary_logits, 'stationary_logits',
                                                len(skeleton.stationary), source)),
    }


def load_ik_request(path):
    return parse(IKRequestSchema, read_json(path), str(path))
