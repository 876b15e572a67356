"""
Error hierarchy for the motion toolkit.

Library code raises these; management commands and the HTTP API translate them
into exit codes and 400 responses.
"""


class MotionError(Exception):
    """Base class for every domain error raised by the toolkit"""

    def __init__(self, message, *, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class GeometryError(MotionError):
    """A geometric construction has no well-defined answer"""


class DegenerateHorizontalProjection(GeometryError):
    """A direction is (nearly) parallel to the gravity axis"""


class GravityParallelToView(GeometryError):
    """The GV basis cannot be built from the given gravity direction"""


class NonUnitGravity(GravityParallelToView):
    """Gravity direction handed to the GV basis is not unit length"""


class NotARotation(GeometryError):
    """A matrix or quaternion is not a proper rotation"""


class NotAYaw(GeometryError):
    """A rotation between consecutive GV frames moves the gravity axis"""


class LengthMismatch(MotionError):
    pass


class ShapeMismatch(MotionError):
    pass


class UnknownJoint(MotionError):
    pass


class ProbabilityOutOfRange(MotionError):
    pass


class NonPositiveScale(MotionError):
    pass


class KeypointOutOfRange(MotionError):
    pass


class OddDimension(MotionError):
    pass


class DegenerateConfiguration(MotionError):
    """Point sets whose covariance does not pin down a rotation"""


class TooShort(MotionError):
    pass


class ZeroPathLength(MotionError):
    pass


class NoContactFrames(MotionError):
    pass


class BadConfig(MotionError):
    pass


class FormatError(MotionError):
    """Problems with on-disk or over-the-wire files"""


class ParseError(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class NormViolation(FormatError):
    pass
