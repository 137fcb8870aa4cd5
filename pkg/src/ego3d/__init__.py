"""Ego-centric multi-view spatial grounding toolkit.

Builds metric cognitive maps from multi-camera rigs, generates rule-based
spatial QA over them, and scores vision-language model answers.
"""

__version__ = "0.1.0"

from ego3d.errors import (
    BehindCameraError,
    DistractorError,
    DomainError,
    Ego3DError,
    NoReferenceObjectsError,
    ProtocolError,
    RateLimitError,
    TransportError,
    ValidationError,
)

__all__ = [
    "__version__",
    "Ego3DError",
    "ValidationError",
    "DomainError",
    "BehindCameraError",
    "NoReferenceObjectsError",
    "DistractorError",
    "TransportError",
    "ProtocolError",
    "RateLimitError",
]
