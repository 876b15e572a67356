"""
Camera-space and world-grounded motion metrics.

Positions are metres; reported errors are millimetres, accelerations m/s^2,
jitter m/s^3 and RTE percent of ground-truth path length.
"""
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import (
    DegenerateConfiguration,
    NoContactFrames,
    ShapeMismatch,
    TooShort,
    ZeroPathLength,
)

logger = logging.getLogger(__name__)

PROTOCOL = 'gvmotion-eval/1'
CONTACT_HEIGHT = 0.03
DEFINITIONS = {
    'mpjpe_mm': 'mean joint distance after subtracting joint 0 per frame',
    'pa_mpjpe_mm': 'mean joint distance after per-frame similarity alignment',
    'accel_m_s2': 'mean norm of second-difference error times fps^2',
    'wa_mpjpe_100_mm': 'rigid alignment on each whole segment; tails of >= 2 frames kept',
    'w_mpjpe_100_mm': 'rigid alignment on the first two frames of each segment',
    'rte_percent': 'mean rigidly aligned root error over ground-truth path length',
    'jitter_m_s3': 'mean norm of third difference of predicted joints times fps^3',
    'foot_sliding_mm': 'mean foot step orthogonal to gravity between consecutive contact frames; '
                       'contact from labels, else height under 30 mm',
}


def umeyama_align(p, q, with_scale=True, allow_degenerate=False):
    """
    Least-squares (R, t, s) minimising |s R p + t - q|^2 over point pairs.

    Raises DegenerateConfiguration when the cross-covariance does not fix the
    rotation, unless allow_degenerate is set (collinear tracks still have a
    well-defined residual).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ShapeMismatch(f"point sets must share shape (N, 3); got {p.shape} and {q.shape}")
    n = p.shape[0]
    if n < 3 and not allow_degenerate:
        raise DegenerateConfiguration(f"need at least 3 points, got {n}")

    mu_p = p.mean(axis=0)
    mu_q = q.mean(axis=0)
    dp = p - mu_p
    dq = q - mu_q

    sigma = dq.T @ dp / n
    u, d, vt = np.linalg.svd(sigma)
    if not allow_degenerate and d[1] <= 1e-12 * max(d[0], 1e-300):
        raise DegenerateConfiguration("cross-covariance has rank below 2")
    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    rot = u @ s_fix @ vt

    var_p = (dp ** 2).sum() / n
    if with_scale:
        if var_p <= 0.0:
            raise DegenerateConfiguration("source points have zero spread")
        scale = float((d * s_fix.diagonal()).sum() / var_p)
    else:
        scale = 1.0
    trans = mu_q - scale * rot @ mu_p
    return rot, trans, scale


def apply_similarity(points, rot, trans, scale=1.0):
    return scale * points @ rot.T + trans


def _check_pair(pred, gt, min_frames=1, name='joints'):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"predicted {name} {pred.shape} and reference {gt.shape} differ")
    if pred.shape[0] < min_frames:
        raise TooShort(f"need at least {min_frames} frames, got {pred.shape[0]}")
    return pred, gt


def mpjpe(pred, gt):
    pred, gt = _check_pair(pred, gt)
    pred = pred - pred[:, :1]
    gt = gt - gt[:, :1]
    return float(np.linalg.norm(pred - gt, axis=-1).mean() * 1000.0)


def pa_mpjpe(pred, gt):
    pred, gt = _check_pair(pred, gt)
    errors = []
    for frame_pred, frame_gt in zip(pred, gt):
        rot, trans, scale = umeyama_align(frame_pred, frame_gt, with_scale=True)
        aligned = apply_similarity(frame_pred, rot, trans, scale)
        errors.append(np.linalg.norm(aligned - frame_gt, axis=-1))
    return float(np.mean(errors) * 1000.0)


def accel_error(pred, gt, fps):
    pred, gt = _check_pair(pred, gt, min_frames=3)
    accel_pred = (pred[2:] - 2 * pred[1:-1] + pred[:-2]) * fps ** 2
    accel_gt = (gt[2:] - 2 * gt[1:-1] + gt[:-2]) * fps ** 2
    return float(np.linalg.norm(accel_pred - accel_gt, axis=-1).mean())


def segment_bounds(n_frames, segment_len):
    """Consecutive [start, stop) segments; a tail shorter than 2 frames is dropped"""
    bounds = []
    for start in range(0, n_frames, segment_len):
        stop = min(start + segment_len, n_frames)
        if stop - start >= 2:
            bounds.append((start, stop))
    return bounds


def segmented_world_mpjpe(pred, gt, segment_len=100, align_mode='whole'):
    """
    World joint error over fixed-length segments after rigid alignment.

    align_mode 'whole' fits each segment on all of its frames, 'first_two' on
    its first two frames only. Errors are pooled over every joint of every
    frame before averaging.
    """
    pred, gt = _check_pair(pred, gt, min_frames=2)
    if align_mode not in ('whole', 'first_two'):
        raise ShapeMismatch(f"align_mode must be 'whole' or 'first_two', got '{align_mode}'")
    if segment_len < 2:
        raise TooShort(f"segment length must be at least 2, got {segment_len}")

    errors = []
    for start, stop in segment_bounds(len(pred), segment_len):
        seg_pred = pred[start:stop]
        seg_gt = gt[start:stop]
        fit = slice(0, None) if align_mode == 'whole' else slice(0, 2)
        rot, trans, _ = umeyama_align(
            seg_pred[fit].reshape(-1, 3), seg_gt[fit].reshape(-1, 3), with_scale=False
        )
        aligned = apply_similarity(seg_pred, rot, trans)
        errors.append(np.linalg.norm(aligned - seg_gt, axis=-1).ravel())
    return float(np.concatenate(errors).mean() * 1000.0)


def rte(pred_root, gt_root):
    pred_root, gt_root = _check_pair(pred_root, gt_root, min_frames=2, name='root track')
    path_length = float(np.linalg.norm(np.diff(gt_root, axis=0), axis=-1).sum())
    if path_length <= 0.0:
        raise ZeroPathLength("ground-truth root never moves; RTE is undefined")
    rot, trans, _ = umeyama_align(pred_root, gt_root, with_scale=False, allow_degenerate=True)
    aligned = apply_similarity(pred_root, rot, trans)
    return float(np.linalg.norm(aligned - gt_root, axis=-1).mean() / path_length * 100.0)


def jitter(joints, fps):
    joints = np.asarray(joints, dtype=float)
    if joints.shape[0] < 4:
        raise TooShort(f"jitter needs at least 4 frames, got {joints.shape[0]}")
    jerk = (joints[3:] - 3 * joints[2:-1] + 3 * joints[1:-2] - joints[:-3]) * fps ** 3
    return float(np.linalg.norm(jerk, axis=-1).mean())


def contact_from_heights(heights, threshold=CONTACT_HEIGHT):
    """Contact wherever a foot is within threshold of its own lowest point"""
    heights = np.asarray(heights, dtype=float)
    return heights - heights.min(axis=0, keepdims=True) < threshold


def foot_sliding(pred_feet, contact=None, gt_heights=None, gravity=(0.0, -1.0, 0.0)):
    """
    Mean horizontal displacement (mm) of predicted feet between consecutive
    frames that are both in ground-truth contact.

    Horizontal means orthogonal to gravity, given in the frame of pred_feet.
    """
    pred_feet = np.asarray(pred_feet, dtype=float)
    down = np.asarray(gravity, dtype=float)
    norm = np.linalg.norm(down)
    if down.shape != (3,) or norm == 0.0:
        raise DegenerateConfiguration(f"gravity must be a non-zero 3-vector, got {gravity}")
    down = down / norm
    if contact is None:
        if gt_heights is None:
            raise NoContactFrames("foot sliding needs a contact mask or ground-truth heights")
        contact = contact_from_heights(gt_heights)
    contact = np.asarray(contact, dtype=bool)
    if contact.shape != pred_feet.shape[:2]:
        raise ShapeMismatch(f"contact mask {contact.shape} does not match feet {pred_feet.shape[:2]}")

    steps = np.diff(pred_feet, axis=0)
    horizontal = np.linalg.norm(steps - (steps @ down)[..., None] * down, axis=-1)
    both = contact[1:] & contact[:-1]
    if not both.any():
        raise NoContactFrames("no pair of consecutive contact frames")
    return float(horizontal[both].mean() * 1000.0)


@dataclass
class MetricsReport:
    pa_mpjpe_mm: float = math.nan
    mpjpe_mm: float = math.nan
    accel_m_s2: float = math.nan
    wa_mpjpe_100_mm: float = math.nan
    w_mpjpe_100_mm: float = math.nan
    rte_percent: float = math.nan
    jitter_m_s3: float = math.nan
    foot_sliding_mm: float = math.nan
    segment_len: int = 100
    unavailable: list = field(default_factory=list)

    METRIC_KEYS = (
        'pa_mpjpe_mm', 'mpjpe_mm', 'accel_m_s2', 'wa_mpjpe_100_mm',
        'w_mpjpe_100_mm', 'rte_percent', 'jitter_m_s3', 'foot_sliding_mm',
    )

    def to_dict(self):
        """Flat dict with NaN written as None and the pinned definitions attached"""
        out = {'protocol': PROTOCOL}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and math.isnan(value):
                value = None
            out[f.name] = value
        out['definitions'] = DEFINITIONS
        return out


def evaluate(pred_world, gt_world, fps, *, pred_camera=None, gt_camera=None,
             pred_root=None, gt_root=None, pred_feet=None, contact=None,
             gt_foot_heights=None, gravity=(0.0, -1.0, 0.0), segment_len=100):
    """
    Full metric suite for one sequence.

    World joints are required; camera-space joints, root tracks and feet are
    optional. Metrics whose inputs or preconditions are missing stay NaN and
    are listed in the report's unavailable field.
    """
    pred_world, gt_world = _check_pair(pred_world, gt_world, name='world joints')
    report = MetricsReport(segment_len=segment_len)

    def attempt(key, fn):
        try:
            setattr(report, key, fn())
        except (NoContactFrames, TooShort, ZeroPathLength, DegenerateConfiguration) as exc:
            logger.warning("Metric %s unavailable: %s", key, exc)
            report.unavailable.append(key)

    if pred_camera is not None and gt_camera is not None:
        attempt('mpjpe_mm', lambda: mpjpe(pred_camera, gt_camera))
        attempt('pa_mpjpe_mm', lambda: pa_mpjpe(pred_camera, gt_camera))
        attempt('accel_m_s2', lambda: accel_error(pred_camera, gt_camera, fps))
    else:
        report.unavailable.extend(['mpjpe_mm', 'pa_mpjpe_mm', 'accel_m_s2'])

    attempt('wa_mpjpe_100_mm', lambda: segmented_world_mpjpe(pred_world, gt_world, segment_len, 'whole'))
    attempt('w_mpjpe_100_mm', lambda: segmented_world_mpjpe(pred_world, gt_world, segment_len, 'first_two'))
    if pred_root is not None and gt_root is not None:
        attempt('rte_percent', lambda: rte(pred_root, gt_root))
    else:
        report.unavailable.append('rte_percent')
    attempt('jitter_m_s3', lambda: jitter(pred_world, fps))
    if pred_feet is not None and (contact is not None or gt_foot_heights is not None):
        attempt('foot_sliding_mm', lambda: foot_sliding(
            pred_feet, contact=contact, gt_heights=gt_foot_heights, gravity=gravity))
    else:
        report.unavailable.append('foot_sliding_mm')
    return report
