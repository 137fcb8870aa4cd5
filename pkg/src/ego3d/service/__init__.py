"""HTTP service layer: FastAPI app factory and request/response models."""

from ego3d.service.app import create_app

__all__ = ["create_app"]
