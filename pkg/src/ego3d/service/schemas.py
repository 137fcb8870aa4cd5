"""Pydantic request/response models for the HTTP service.

These mirror the library's file formats (scene JSON, QA item dicts,
prediction dicts) so clients can move payloads between files and the
API without translation.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator

from ego3d.perception import BackendConfig


class ObjectModel(BaseModel):
    id: str
    caption: str
    center: tuple[float, float, float]
    views: list[str]
    yaw: float | None = None
    size: tuple[float, float, float] | None = None


class SceneModel(BaseModel):
    scene_id: str
    objects: list[ObjectModel]
    rig: list[str]


class GenerateRequest(BaseModel):
    scenes: list[SceneModel]
    seed: int = 0
    categories: list[str] | None = None
    perspectives: list[str] | None = None


class GenerateResponse(BaseModel):
    items: list[dict]
    problems: list[str]


class BackendModel(BaseModel):
    base_url: str
    timeout: float = 10.0
    max_in_flight: int = 4
    auth_token_env: str | None = None
    score_threshold: float = 0.35
    best_match_only: bool = False
    depth_median5: bool = False
    retries: int = 2
    retry_backoff: float = 0.2

    def to_config(self) -> BackendConfig:
        return BackendConfig(**self.model_dump())


class CalibrationEstimateModel(BaseModel):
    views: list[str]
    width: float = 1600.0
    height: float = 900.0
    fov_deg: float = 90.0


class CalibrationModel(BaseModel):
    path: str | None = None
    estimate: CalibrationEstimateModel | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "CalibrationModel":
        if (self.path is None) == (self.estimate is None):
            raise ValueError("provide exactly one of 'path' or 'estimate'")
        return self


class LocatedModel(BaseModel):
    expression: str
    view: str
    position: tuple[float, float, float]


class ScaleModel(BaseModel):
    factor: float
    h_est: float
    class_used: str
    n_observations: int


MapFormat = Literal["text", "json", "svg"]


class BuildMapRequest(BaseModel):
    located: list[LocatedModel]
    scale: ScaleModel | None = None
    formats: list[MapFormat] = Field(default_factory=lambda: ["text"])


class MapFromImagesRequest(BaseModel):
    images: dict[str, str]  # view label -> image path
    expressions: list[str]
    calibration: CalibrationModel
    rec: BackendModel
    depth: BackendModel
    estimate_scale: bool = False
    reference_classes_path: str | None = None
    formats: list[MapFormat] = Field(default_factory=lambda: ["text"])


class MapResponse(BaseModel):
    renders: dict[str, str]
    entry_count: int
    warnings: list[str] = Field(default_factory=list)


class DetectionDepthModel(BaseModel):
    view: str
    bbox: tuple[float, float, float, float]
    expression: str
    score: float = 1.0
    depth: float
    scene_id: str | None = None


class VlmModel(BaseModel):
    http: BackendModel | None = None
    model: str = "default"
    mock: Literal["oracle", "scripted"] | None = None
    replies: dict[str, str] | None = None
    replies_path: str | None = None

    @model_validator(mode="after")
    def _one_backend(self) -> "VlmModel":
        if (self.http is None) == (self.mock is None):
            raise ValueError("provide exactly one of 'http' or 'mock'")
        if self.mock == "scripted" and self.replies is None and self.replies_path is None:
            raise ValueError("scripted mock needs 'replies' or 'replies_path'")
        return self


class EvaluateRequest(BaseModel):
    items: list[dict]
    mode: str
    vlm: VlmModel
    scenes: list[SceneModel] | None = None
    images: dict[str, str] | None = None
    detections: list[DetectionDepthModel] | None = None
    map_json: str | None = None
    skip_qa_ids: list[str] = Field(default_factory=list)


class EvaluateResponse(BaseModel):
    predictions: list[dict]
    failures: list[dict]


class ScoreRequest(BaseModel):
    items: list[dict]
    predictions: list[dict]
    mode: str | None = None
    model: str | None = None


class ScoreResponse(BaseModel):
    report: dict
    csv: str


class ChanceRequest(BaseModel):
    items: list[dict]
    trials: int = 1000
    seed: int = 0


class ChanceResponse(BaseModel):
    chance: dict[str, float]


class HealthResponse(BaseModel):
    status: str
    version: str
