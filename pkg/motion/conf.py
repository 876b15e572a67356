"""
Typed access to the GV_MOTION settings dict.

Library functions take explicit arguments; commands and API views read their
defaults from here.
"""
from django.conf import settings

from .exceptions import BadConfig
from .kinematics import PostprocessConfig
from .seqmodel import ModelConfig

DEFAULTS = {
    'CONTACT_THRESHOLD': 0.5,
    'IK_MAX_ITER': 50,
    'IK_TOL': 1e-3,
    'IK_MAX_STEP': 0.5,
    'SEGMENT_LEN': 100,
    'TRAIN_LEN': 16,
    'ROPE_BASE': 10000.0,
    'RENORM_EVERY': 256,
    'EVAL_WORKERS': 4,
}


def motion_settings():
    merged = dict(DEFAULTS)
    merged.update(getattr(settings, 'GV_MOTION', {}))
    unknown = set(merged) - set(DEFAULTS)
    if unknown:
        raise BadConfig(f"unknown GV_MOTION keys: {', '.join(sorted(unknown))}")
    return merged


def get(name):
    return motion_settings()[name]


def postprocess_config():
    values = motion_settings()
    threshold = float(values['CONTACT_THRESHOLD'])
    if not 0.0 < threshold < 1.0:
        raise BadConfig(f"CONTACT_THRESHOLD must lie strictly between 0 and 1, got {threshold}")
    return PostprocessConfig(
        contact_threshold=threshold,
        ik_max_iter=int(values['IK_MAX_ITER']),
        ik_tol=float(values['IK_TOL']),
        ik_max_step=float(values['IK_MAX_STEP']),
    )


def model_config(**overrides):
    values = motion_settings()
    overrides.setdefault('train_len', int(values['TRAIN_LEN']))
    overrides.setdefault('rope_base', float(values['ROPE_BASE']))
    return ModelConfig.from_dict(overrides)


def segment_len():
    value = int(get('SEGMENT_LEN'))
    if value < 2:
        raise BadConfig(f"SEGMENT_LEN must be at least 2, got {value}")
    return value


def renorm_every():
    return int(get('RENORM_EVERY'))


def eval_workers():
    return max(1, int(get('EVAL_WORKERS')))
