"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (validation -> 2, transport -> 3) and
the HTTP service maps them onto status codes, so raising the right class
matters more than the message text.
"""


class Ego3DError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(Ego3DError, ValueError):
    """Invalid input values or malformed input files."""


class DomainError(ValidationError):
    """Numerically out-of-domain input (non-positive depth, scale, ...)."""


class BehindCameraError(DomainError):
    """Projection requested for a point with z <= 0 in the camera frame."""


class NoReferenceObjectsError(Ego3DError):
    """No usable reference-class observations for scale estimation."""


class DistractorError(Ego3DError):
    """Distractor generation could not satisfy the gap constraints."""


class TransportError(Ego3DError):
    """A backend was unreachable or timed out after retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class ProtocolError(TransportError):
    """A backend answered with a malformed or unexpected payload."""


class RateLimitError(TransportError):
    """A backend signalled rate limiting (HTTP 429)."""
