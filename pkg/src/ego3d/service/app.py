"""FastAPI application exposing the pipeline over HTTP.

The CLI talks to this app in-process through an ASGI transport by
default, so every command-line workflow is also available to remote
clients from the same code path.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ego3d import __version__
from ego3d.cogmap import CognitiveMap, build_map, parse_json_map, render_json, render_textual, render_visual
from ego3d.errors import (
    NoReferenceObjectsError,
    TransportError,
    ValidationError,
)
from ego3d.evaluation import (
    Prediction,
    chance_level,
    parse_answer,
    report_to_csv,
    report_to_dict,
    score,
)
from ego3d.geometry import (
    CameraCalibration,
    Point3,
    estimated_calibration,
    load_calibration,
    parse_view,
)
from ego3d.perception import Detection, BBox2D, DepthClient, LocatedObject, RecClient, locate_expressions
from ego3d.qagen import (
    Category,
    Perspective,
    QAItem,
    SceneSource,
    generate_qaset,
    item_from_dict,
    item_to_dict,
    scene_from_dict,
    validate_qaset,
)
from ego3d.scaling import (
    HeightObservation,
    apply_scale,
    estimate_scale,
    load_reference_classes,
    match_reference_class,
)
from ego3d.service.schemas import (
    BuildMapRequest,
    ChanceRequest,
    ChanceResponse,
    EvaluateRequest,
    EvaluateResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    MapFromImagesRequest,
    MapResponse,
    ScoreRequest,
    ScoreResponse,
)
from ego3d.vlm import (
    HttpChatClient,
    Mode,
    OracleMockClient,
    ScriptedMockClient,
    assemble_prompt,
    map_from_scene,
    parse_mode,
)

_RENDERERS = {"text": render_textual, "json": render_json, "svg": render_visual}


def _render_formats(cmap: CognitiveMap, formats: list[str]) -> dict[str, str]:
    return {fmt: _RENDERERS[fmt](cmap) for fmt in dict.fromkeys(formats)}


def create_app() -> FastAPI:
    app = FastAPI(title="ego3d", version=__version__)

    @app.exception_handler(ValidationError)
    async def _bad_input(request: Request, exc: ValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(TransportError)
    async def _bad_backend(request: Request, exc: TransportError) -> JSONResponse:
        return JSONResponse(
            status_code=502,
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/qa/generate", response_model=GenerateResponse)
    def qa_generate(req: GenerateRequest) -> GenerateResponse:
        scenes = [scene_from_dict(s.model_dump()) for s in req.scenes]
        try:
            # Category("bogus") raises plain ValueError; surface as bad input.
            categories = (
                [Category(c) for c in req.categories]
                if req.categories is not None
                else list(Category)
            )
            perspectives = (
                [Perspective(p) for p in req.perspectives]
                if req.perspectives is not None
                else list(Perspective)
            )
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        items = generate_qaset(
            scenes, req.seed, categories=categories, perspectives=perspectives
        )
        return GenerateResponse(
            items=[item_to_dict(i) for i in items],
            problems=validate_qaset(items),
        )

    @app.post("/cogmap/build", response_model=MapResponse)
    def cogmap_build(req: BuildMapRequest) -> MapResponse:
        warnings: list[str] = []
        positions = [Point3(*m.position) for m in req.located]
        if req.scale is not None:
            positions = apply_scale(positions, req.scale.factor)
        entries = [
            LocatedObject(m.expression, parse_view(m.view), pos)
            for m, pos in zip(req.located, positions)
        ]
        cmap = build_map(entries)
        return MapResponse(
            renders=_render_formats(cmap, list(req.formats)),
            entry_count=len(cmap.entries),
            warnings=warnings,
        )

    @app.post("/cogmap/from-images", response_model=MapResponse)
    def cogmap_from_images(req: MapFromImagesRequest) -> MapResponse:
        if req.calibration.path is not None:
            calibs = load_calibration(req.calibration.path)
        else:
            est = req.calibration.estimate
            calibs = estimated_calibration(
                [parse_view(v) for v in est.views],
                width=est.width,
                height=est.height,
                horizontal_fov_deg=est.fov_deg,
            )
        images = {parse_view(label): path for label, path in req.images.items()}
        with RecClient(req.rec.to_config()) as rec, DepthClient(
            req.depth.to_config()
        ) as depth:
            result = locate_expressions(
                images, req.expressions, calibs, rec=rec, depth=depth
            )
        warnings = list(result.warnings)

        entries = result.entries
        if req.estimate_scale:
            classes = load_reference_classes(req.reference_classes_path)
            fy_by_view = {c.view: c.intrinsics.fy for c in calibs}
            observations = []
            for det, depth_m in result.detections:
                ref = match_reference_class(det.expression, classes)
                if ref is not None:
                    observations.append(
                        HeightObservation(
                            class_name=ref.name,
                            bbox=det.bbox,
                            depth=depth_m,
                            fy=fy_by_view[det.view],
                        )
                    )
            try:
                estimate = estimate_scale(observations, classes)
                factor = estimate.factor
            except NoReferenceObjectsError as exc:
                factor = 1.0
                warnings.append(f"scale estimation failed ({exc}); using factor 1.0")
            if factor != 1.0:
                scaled = apply_scale([e.position for e in entries], factor)
                entries = [
                    LocatedObject(e.expression, e.view, pos)
                    for e, pos in zip(entries, scaled)
                ]

        cmap = build_map(entries)
        return MapResponse(
            renders=_render_formats(cmap, list(req.formats)),
            entry_count=len(cmap.entries),
            warnings=warnings,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest) -> EvaluateResponse:
        mode = parse_mode(req.mode)
        skip = set(req.skip_qa_ids)
        items = [item_from_dict(d) for d in req.items]
        items = [i for i in items if i.id not in skip]

        scenes: dict[str, SceneSource] = {}
        if req.scenes:
            for model in req.scenes:
                scene = scene_from_dict(model.model_dump())
                scenes[scene.scene_id] = scene

        maps: dict[str, CognitiveMap] = {}
        shared_map: CognitiveMap | None = None
        if req.map_json is not None:
            shared_map = parse_json_map(req.map_json)
        elif scenes:
            maps = {sid: map_from_scene(s) for sid, s in scenes.items()}

        images = (
            {parse_view(label): path for label, path in req.images.items()}
            if req.images
            else None
        )

        detections: dict[str | None, list[tuple[Detection, float]]] = {}
        for d in req.detections or []:
            pair = (
                Detection(
                    view=parse_view(d.view),
                    bbox=BBox2D(*d.bbox),
                    expression=d.expression,
                    score=d.score,
                ),
                d.depth,
            )
            detections.setdefault(d.scene_id, []).append(pair)

        client, workers = _make_chat_client(req, items, scenes)

        def ask(item: QAItem) -> tuple[str, Prediction | None, dict | None]:
            scene_id = item.meta.get("scene_id", "")
            cmap = shared_map if shared_map is not None else maps.get(scene_id)
            dets = None
            if req.detections is not None:
                dets = detections.get(None, []) + detections.get(scene_id, [])
            try:
                bundle = assemble_prompt(
                    item, mode, cmap=cmap, detections=dets, images=images
                )
                reply = client.chat(bundle)
            except (TransportError, ValidationError) as exc:
                failure = {
                    "qa_id": item.id,
                    "error": type(exc).__name__,
                    "detail": str(exc),
                }
                return item.id, None, failure
            return item.id, parse_answer(reply.raw_text, item), None

        rows: list[tuple[str, Prediction | None, dict | None]] = []
        if workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(ask, items))
        else:
            rows = [ask(item) for item in items]

        rows.sort(key=lambda r: r[0])
        predictions = [
            {"qa_id": p.qa_id, "parsed": p.parsed, "raw_text": p.raw_text}
            for _, p, _ in rows
            if p is not None
        ]
        failures = [f for _, _, f in rows if f is not None]
        return EvaluateResponse(predictions=predictions, failures=failures)

    @app.post("/report/score", response_model=ScoreResponse)
    def report_score(req: ScoreRequest) -> ScoreResponse:
        qaset = [item_from_dict(d) for d in req.items]
        predictions = [
            Prediction(qa_id=p["qa_id"], parsed=p["parsed"], raw_text=p["raw_text"])
            for p in req.predictions
        ]
        report = score(predictions, qaset, mode=req.mode, model=req.model)
        return ScoreResponse(report=report_to_dict(report), csv=report_to_csv(report))

    @app.post("/report/chance", response_model=ChanceResponse)
    def report_chance(req: ChanceRequest) -> ChanceResponse:
        qaset = [item_from_dict(d) for d in req.items]
        return ChanceResponse(
            chance=chance_level(qaset, trials=req.trials, rng_seed=req.seed)
        )

    return app


def _make_chat_client(
    req: EvaluateRequest,
    items: list[QAItem],
    scenes: dict[str, SceneSource],
):
    """Build the chat client named by the request; returns (client, workers)."""
    vlm = req.vlm
    if vlm.http is not None:
        cfg = vlm.http.to_config()
        return HttpChatClient(cfg, model=vlm.model), cfg.max_in_flight
    if vlm.mock == "oracle":
        if not scenes:
            raise ValidationError("the oracle mock needs the 'scenes' field")
        return OracleMockClient(items, scenes), 1
    replies = vlm.replies
    if replies is None:
        replies = _load_replies(vlm.replies_path)
    return ScriptedMockClient(replies), 1


def _load_replies(path: str) -> dict[str, str]:
    import json

    target = Path(path)
    if target.is_dir():
        target = target / "replies.json"
    if not target.is_file():
        raise ValidationError(f"replies file not found: {target}")
    replies = json.loads(target.read_text(encoding="utf-8"))
    if not isinstance(replies, dict):
        raise ValidationError(f"{target} must map qa ids to reply text")
    return replies
