"""
Schemas for motion, camera and prediction files and for the HTTP API.

Rotations are stored as w-first unit quaternions, translations in metres.
"""
from datetime import datetime
from typing import Any, Dict, List, Optional, Union

from ninja import Schema

FORMAT_VERSION = 'gvmotion/1'

Quaternion = List[float]
Vector3 = List[float]


# File schemas
class MotionFileSchema(Schema):
    """World motion of one person"""
    version: str
    fps: float
    skeleton: Union[str, Dict[str, Any]] = 'smpl24'
    root_orientation: List[Quaternion]
    root_translation: List[Vector3]
    local_rotations: List[List[Quaternion]]
    joint_positions: Optional[List[List[Vector3]]] = None
    stationary_logits: Optional[List[List[float]]] = None
    stationary_probs: Optional[List[List[float]]] = None
    camera_orientation: Optional[List[Quaternion]] = None
    gravity: Optional[Vector3] = None


class IntrinsicsSchema(Schema):
    f: float
    px: float
    py: float
    width: int
    height: int


class CameraFileSchema(Schema):
    """Camera track; world_to_camera, relative or both"""
    version: str
    fps: float
    intrinsics: IntrinsicsSchema
    gravity_c0: Vector3
    world_to_camera: Optional[List[Quaternion]] = None
    relative: Optional[List[Quaternion]] = None


class PredictionFileSchema(Schema):
    """Per-frame network outputs consumed by trajectory recovery"""
    version: str
    fps: float
    skeleton: Union[str, Dict[str, Any]] = 'smpl24'
    gamma_gv: List[Quaternion]
    gamma_c: List[Quaternion]
    v_root: List[Vector3]
    local_rotations: Optional[List[List[Quaternion]]] = None
    stationary_logits: Optional[List[List[float]]] = None


# Request Schemas
class RecoverRequestSchema(Schema):
    """Schema for recovering a world motion"""
    prediction: PredictionFileSchema
    camera: CameraFileSchema
    refine: bool = False


class EvaluateRequestSchema(Schema):
    """Schema for evaluating a motion against a reference"""
    prediction: MotionFileSchema
    reference: MotionFileSchema
    label: Optional[str] = ""
    reference_label: Optional[str] = ""
    segment_len: Optional[int] = None
    save: bool = True


# Response Schemas
class MetricsReportSchema(Schema):
    """Metric values; metrics that could not be computed are null"""
    protocol: str
    pa_mpjpe_mm: Optional[float] = None
    mpjpe_mm: Optional[float] = None
    accel_m_s2: Optional[float] = None
    wa_mpjpe_100_mm: Optional[float] = None
    w_mpjpe_100_mm: Optional[float] = None
    rte_percent: Optional[float] = None
    jitter_m_s3: Optional[float] = None
    foot_sliding_mm: Optional[float] = None
    segment_len: int
    unavailable: List[str] = []
    definitions: Dict[str, str] = {}


class EvaluationRunSchema(Schema):
    """Schema for a stored evaluation"""
    id: int
    label: str
    reference_label: str
    n_frames: int
    protocol: str
    source: str
    report: MetricsReportSchema
    created_at: datetime


class MessageSchema(Schema):
    """Generic message response schema"""
    message: str


class ErrorSchema(Schema):
    """Error response schema"""
    error: str
    details: Optional[str] = None


class IKRequestSchema(Schema):
    """Single-frame inverse kinematics problem"""
    skeleton: Union[str, Dict[str, Any]] = 'smpl24'
    root_orientation: Quaternion = [1.0, 0.0, 0.0, 0.0]
    root_position: Vector3 = [0.0, 0.0, 0.0]
    local_rotations: Optional[List[Quaternion]] = None
    targets: Dict[str, Vector3]
    solve_root: bool = False
