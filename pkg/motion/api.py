"""
Django Ninja API endpoints for trajectory recovery and evaluation
"""
import logging
from typing import List

from django.shortcuts import get_object_or_404
from ninja import NinjaAPI

from . import conf
from .api_auth import APIKeyAuth
from .exceptions import BadConfig, MotionError
from .formats import check_file, motion_from_file, motion_to_file
from .models import EvaluationRun
from .pipeline import evaluate_motions, recover_motion, refine_motion
from .schemas import (
    RecoverRequestSchema,
    EvaluateRequestSchema,
    MotionFileSchema,
    MetricsReportSchema,
    EvaluationRunSchema,
    MessageSchema,
    ErrorSchema,
)

logger = logging.getLogger(__name__)


# Helper functions to convert models to dictionaries
def evaluation_run_to_dict(run):
    """Convert an EvaluationRun instance to a dictionary"""
    return {
        'id': run.id,
        'label': run.label,
        'reference_label': run.reference_label,
        'n_frames': run.n_frames,
        'protocol': run.protocol,
        'source': run.source,
        'report': run.report,
        'created_at': run.created_at,
    }


# Create API instance with authentication
api = NinjaAPI(
    title="World Motion API",
    version="1.0.0",
    description="Recover world-grounded human motion from per-frame predictions and evaluate it",
    auth=APIKeyAuth(),
)


@api.exception_handler(MotionError)
def motion_error(request, exc):
    return api.create_response(
        request,
        {"error": type(exc).__name__, "details": str(exc)},
        status=400,
    )


# Recovery Endpoints
@api.post(
    "/recover",
    response={200: MotionFileSchema, 400: ErrorSchema},
    summary="Recover world motion",
    description="Roll per-frame GV predictions and relative camera rotations out into a world motion. Requires valid API key.",
)
def recover(request, payload: RecoverRequestSchema):
    """
    Recover a world-frame motion.

    **Required fields:**
    - prediction: per-frame gamma_gv, gamma_c and v_root (optional local_rotations, stationary_logits)
    - camera: camera track with relative and/or world_to_camera rotations

    **Optional fields:**
    - refine: apply stationary-joint post-processing (needs stationary_logits)

    The result is expressed in the first frame's gravity-view system (gravity along +y).
    """
    prediction = check_file(payload.prediction, 'prediction')
    camera = check_file(payload.camera, 'camera')
    motion = recover_motion(prediction, camera, conf.renorm_every(), source='prediction').motion
    motion = refine_motion(motion, conf.postprocess_config(), postprocess=payload.refine)
    return motion_to_file(motion)


# Evaluation Endpoints
@api.post(
    "/evaluate",
    response={200: MetricsReportSchema, 201: EvaluationRunSchema, 400: ErrorSchema},
    summary="Evaluate a motion",
    description="Compute the metric suite of a predicted world motion against a reference. Stored unless save is false.",
)
def evaluate(request, payload: EvaluateRequestSchema):
    """
    Evaluate a predicted motion against a reference motion.

    **Required fields:**
    - prediction: world motion file
    - reference: ground-truth world motion file with the same frame count

    **Optional fields:**
    - label, reference_label: names stored with the run
    - segment_len: frames per segment for WA/W-MPJPE (default from settings)
    - save: store the report as an evaluation run (default: true)
    """
    pred = motion_from_file(check_file(payload.prediction, 'prediction'), 'prediction')
    gt = motion_from_file(check_file(payload.reference, 'reference'), 'reference')
    segment_len = payload.segment_len if payload.segment_len is not None else conf.segment_len()
    if segment_len < 2:
        raise BadConfig(f"segment_len must be at least 2, got {segment_len}")
    report = evaluate_motions(pred, gt, segment_len).to_dict()
    if not payload.save:
        return 200, report

    run = EvaluationRun.record(
        report,
        n_frames=gt.n_frames,
        label=payload.label or "",
        reference_label=payload.reference_label or "",
        source='api',
        api_key=request.auth,
    )
    logger.info("Stored evaluation run %d (%s)", run.id, run.label or 'unnamed')
    return 201, evaluation_run_to_dict(run)


@api.get(
    "/evaluations",
    response=List[EvaluationRunSchema],
    summary="List evaluation runs",
    description="Get stored evaluation runs, most recent first.",
)
def list_evaluations(request, limit: int = 50, protocol: str = None):
    """
    List evaluation runs with optional limit.

    **Query parameters:**
    - limit: Maximum number of results (default: 50, max: 200)
    - protocol: Only runs computed under this protocol tag
    """
    if limit > 200:
        limit = 200

    runs = EvaluationRun.objects.all()
    if protocol:
        runs = runs.filter(protocol=protocol)
    return [evaluation_run_to_dict(run) for run in runs[:limit]]


@api.get(
    "/evaluations/{run_id}",
    response={200: EvaluationRunSchema, 404: ErrorSchema},
    summary="Get an evaluation run",
    description="Retrieve one stored evaluation run by ID.",
)
def get_evaluation(request, run_id: int):
    """
    Get a specific evaluation run by ID.
    """
    run = get_object_or_404(EvaluationRun, id=run_id)
    return evaluation_run_to_dict(run)


# Health check endpoint (no authentication required)
@api.get(
    "/health",
    response=MessageSchema,
    auth=None,
    summary="API health check",
    description="Check if the API is running. No authentication required.",
)
def health_check(request):
    """
    Health check endpoint - no authentication required.
    """
    return {"message": "API is running"}
