"""Command-line interface.

Every subcommand is a thin client of the HTTP service. By default the
requests run in-process against the FastAPI app through an ASGI
transport, so no server needs to be running; pass --server to point the
same commands at a remote instance instead.

Exit codes: 0 success, 2 invalid input, 3 backend/transport failure,
4 completed with per-item failures or validation problems.
"""

from __future__ import annotations

import asyncio
import json
import re
import sys
from pathlib import Path

import click
import httpx

from ego3d import __version__
from ego3d.config import load_config, pick
from ego3d.errors import ValidationError
from ego3d.geometry import View
from ego3d.manifest import make_manifest, write_manifest

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_BACKEND = 3
EXIT_PARTIAL = 4

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".webp", ".bmp"}
_EXPRESSION_IN_QUESTION = re.compile(r"\bthe (.+?) in the [a-z-]+ view\b")


class ServiceClient:
    """httpx wrapper that maps HTTP errors onto the CLI's exit codes.

    With --server it speaks real HTTP; otherwise each request runs
    against the FastAPI app in-process (ASGITransport is async-only, so
    the in-process path drives an AsyncClient under asyncio.run).
    """

    def __init__(self, server: str | None):
        self._client: httpx.Client | None = None
        self._app = None
        if server:
            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            from ego3d.service import create_app

            self._app = create_app()

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def get(self, path: str) -> dict:
        return self._request("GET", path)

    def post(self, path: str, payload: dict) -> dict:
        return self._request("POST", path, json=payload)

    def _request(self, method: str, path: str, **kwargs) -> dict:
        try:
            if self._client is not None:
                response = self._client.request(method, path, **kwargs)
            else:
                response = asyncio.run(self._asgi_request(method, path, **kwargs))
        except httpx.HTTPError as exc:
            _fail(f"cannot reach server: {exc}", EXIT_BACKEND)
        if response.status_code in (400, 422):
            _fail(_detail(response), EXIT_INVALID_INPUT)
        if response.status_code >= 500:
            _fail(_detail(response), EXIT_BACKEND)
        return response.json()

    async def _asgi_request(self, method: str, path: str, **kwargs) -> httpx.Response:
        transport = httpx.ASGITransport(app=self._app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://ego3d.internal", timeout=300.0
        ) as client:
            return await client.request(method, path, **kwargs)


def _detail(response: httpx.Response) -> str:
    try:
        body = response.json()
        detail = body.get("detail", body)
    except ValueError:
        detail = response.text
    return f"HTTP {response.status_code}: {detail}"


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"cannot read {path}: {exc}", EXIT_INVALID_INPUT)


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(f"cannot read {path}: {exc}", EXIT_INVALID_INPUT)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            _fail(f"{path}:{lineno}: {exc}", EXIT_INVALID_INPUT)
    return rows


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        click.echo(text, nl=not text.endswith("\n"))
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_jsonl(path: str | None, rows: list[dict]) -> None:
    text = "\n".join(json.dumps(r, sort_keys=True) for r in rows)
    _write_text(path, text + "\n" if rows else "")


def _emit_manifest(
    out: str | None, command: str, arguments: dict, inputs: list[str], seed: int | None = None
) -> None:
    if out is None or out == "-":
        return
    manifest = make_manifest(command, arguments, seed=seed, inputs=list(inputs))
    write_manifest(manifest, out)


def _scan_image_dir(directory: str) -> dict[str, str]:
    """Map view labels to image paths for files named <View>.<ext>."""
    images: dict[str, str] = {}
    root = Path(directory)
    if not root.is_dir():
        _fail(f"image directory not found: {directory}", EXIT_INVALID_INPUT)
    for entry in sorted(root.iterdir()):
        if entry.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        try:
            view = next(
                v for v in View if v.value.lower() == entry.stem.replace("_", "").lower()
            )
        except StopIteration:
            continue
        images[view.value] = str(entry)
    if not images:
        _fail(f"no <View>.<ext> images in {directory}", EXIT_INVALID_INPUT)
    return images


def _backend_payload(config: dict, section: str, url_flag: str | None) -> dict:
    base = dict(config.get("backends", {}).get(section, {}))
    url = url_flag or base.pop("url", None)
    if url is None:
        _fail(
            f"no {section} backend configured; pass --{section}-url or set "
            f"[backends.{section}] url in the config file",
            EXIT_INVALID_INPUT,
        )
    base.pop("model", None)
    return {"base_url": url, **base}


@click.group()
@click.version_option(version=__version__, prog_name="ego3d")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="TOML config file; flags override its values.",
)
@click.option("--server", default=None, help="Base URL of a running service (default: in-process).")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, server: str | None) -> None:
    """Surround-view spatial QA: generation, cognitive maps, evaluation."""
    try:
        config = load_config(config_path)
    except ValidationError as exc:
        _fail(str(exc), EXIT_INVALID_INPUT)
    ctx.obj = {
        "config": config,
        "server": pick(server, config, "server.url"),
    }


def _client(ctx: click.Context) -> ServiceClient:
    client = ServiceClient(ctx.obj["server"])
    ctx.call_on_close(client.close)
    return client


@main.command("gen-qa")
@click.option("--scenes", "scene_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False), help="Scene JSON file (repeatable).")
@click.option("--out", default=None, help="Output QA JSONL path (default: stdout).")
@click.option("--seed", type=int, default=None, help="Generation seed (default 0).")
@click.option("--categories", default=None,
              help="Comma-separated category subset (AbsDist,RelDist,Localization,Motion,TravelTime).")
@click.option("--perspectives", default=None, help="Comma-separated subset of Ego,Object.")
@click.pass_context
def gen_qa(ctx, scene_paths, out, seed, categories, perspectives):
    """Generate the QA set for one or more scenes."""
    config = ctx.obj["config"]
    seed = pick(seed, config, "generation.seed", 0)
    payload = {
        "scenes": [_read_json(p) for p in scene_paths],
        "seed": seed,
    }
    if categories:
        payload["categories"] = [c.strip() for c in categories.split(",") if c.strip()]
    if perspectives:
        payload["perspectives"] = [p.strip() for p in perspectives.split(",") if p.strip()]
    body = _client(ctx).post("/qa/generate", payload)
    _write_jsonl(out, body["items"])
    _emit_manifest(out, "gen-qa", {"scenes": sorted(scene_paths), "out": out},
                   list(scene_paths), seed=seed)
    click.echo(f"generated {len(body['items'])} items from {len(scene_paths)} scene(s)", err=True)
    if body["problems"]:
        for problem in body["problems"]:
            click.echo(f"problem: {problem}", err=True)
        sys.exit(EXIT_PARTIAL)


def _expressions_from_qa(path: str) -> list[str]:
    seen: dict[str, None] = {}
    for row in _read_jsonl(path):
        for match in _EXPRESSION_IN_QUESTION.finditer(row.get("question", "")):
            seen.setdefault(match.group(1))
    if not seen:
        _fail(f"no referring expressions found in {path}", EXIT_INVALID_INPUT)
    return list(seen)


@main.command("cogmap")
@click.option("--located", "located_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON list of pre-located objects ({expression, view, position}).")
@click.option("--images", "images_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of per-view images named <View>.<ext>.")
@click.option("--expr", "expressions", multiple=True, help="Referring expression (repeatable).")
@click.option("--from-qa", "from_qa", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Pull referring expressions out of a QA JSONL file.")
@click.option("--calib", "calib_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Calibration JSON file.")
@click.option("--estimate-calib", "fov_deg", type=float, default=None,
              help="No calibration file: estimate intrinsics from this horizontal FOV (degrees).")
@click.option("--width", type=float, default=1600.0, show_default=True,
              help="Image width for --estimate-calib.")
@click.option("--height", type=float, default=900.0, show_default=True,
              help="Image height for --estimate-calib.")
@click.option("--rec-url", default=None, help="Referring-expression backend URL (or fixture://dir).")
@click.option("--depth-url", default=None, help="Depth backend URL (or fixture://dir).")
@click.option("--estimate-scale", is_flag=True, help="Rescale using reference-object heights.")
@click.option("--format", "fmt", type=click.Choice(["text", "json", "svg"]), default="text",
              show_default=True)
@click.option("--out", default=None, help="Output path (default: stdout).")
@click.pass_context
def cogmap(ctx, located_path, images_dir, expressions, from_qa, calib_path, fov_deg,
           width, height, rec_url, depth_url, estimate_scale, fmt, out):
    """Build a cognitive map, from pre-located objects or from images."""
    config = ctx.obj["config"]
    if (located_path is None) == (images_dir is None):
        _fail("pass exactly one of --located or --images", EXIT_INVALID_INPUT)

    inputs: list[str] = []
    if located_path is not None:
        located = _read_json(located_path)
        if not isinstance(located, list):
            _fail(f"{located_path} must hold a JSON list", EXIT_INVALID_INPUT)
        payload = {"located": located, "formats": [fmt]}
        body = _client(ctx).post("/cogmap/build", payload)
        inputs.append(located_path)
    else:
        exprs = list(expressions)
        if from_qa:
            exprs.extend(e for e in _expressions_from_qa(from_qa) if e not in exprs)
            inputs.append(from_qa)
        if not exprs:
            _fail("no expressions; pass --expr or --from-qa", EXIT_INVALID_INPUT)
        calib_path = pick(calib_path, config, "calibration.path")
        fov_deg = pick(fov_deg, config, "calibration.fov_deg")
        if calib_path is not None:
            calibration = {"path": calib_path}
            inputs.append(calib_path)
        elif fov_deg is not None:
            images = _scan_image_dir(images_dir)
            calibration = {
                "estimate": {
                    "views": sorted(images),
                    "width": pick(None, config, "calibration.width", width),
                    "height": pick(None, config, "calibration.height", height),
                    "fov_deg": fov_deg,
                }
            }
        else:
            _fail("pass --calib FILE or --estimate-calib FOV", EXIT_INVALID_INPUT)
        payload = {
            "images": _scan_image_dir(images_dir),
            "expressions": exprs,
            "calibration": calibration,
            "rec": _backend_payload(config, "rec", rec_url),
            "depth": _backend_payload(config, "depth", depth_url),
            "estimate_scale": estimate_scale,
            "formats": [fmt],
        }
        body = _client(ctx).post("/cogmap/from-images", payload)

    for warning in body["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    _write_text(out, body["renders"][fmt])
    _emit_manifest(out, "cogmap", {"format": fmt, "out": out}, inputs)
    click.echo(f"map has {body['entry_count']} entr{'y' if body['entry_count'] == 1 else 'ies'}",
               err=True)


@main.command("evaluate")
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="QA JSONL file to answer.")
@click.option("--mode", required=True,
              help="Prompting mode: baseline, ego3d, blind, blind-cogmap, or list.")
@click.option("--vlm-url", default=None, help="Chat-completions backend URL.")
@click.option("--model", default=None, help="Model name sent to the backend.")
@click.option("--mock", type=click.Choice(["oracle", "scripted"]), default=None,
              help="Use a mock client instead of an HTTP backend.")
@click.option("--replies", "replies_path", default=None, type=click.Path(exists=True),
              help="replies.json (or its directory) for --mock scripted.")
@click.option("--scenes", "scene_paths", multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Scene JSON file (repeatable); source of maps and oracle answers.")
@click.option("--map", "map_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Pre-built cognitive map (JSON render) used for every item.")
@click.option("--images", "images_dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Directory of per-view images named <View>.<ext>.")
@click.option("--detections", "detections_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON list of detection+depth rows for list mode.")
@click.option("--out", default=None, help="Predictions JSONL path (default: stdout).")
@click.option("--resume", is_flag=True,
              help="Skip items already answered in --out and merge results.")
@click.pass_context
def evaluate(ctx, qa_path, mode, vlm_url, model, mock, replies_path, scene_paths,
             map_path, images_dir, detections_path, out, resume):
    """Answer a QA file with a VLM (or a mock) and record predictions."""
    config = ctx.obj["config"]
    vlm_url = pick(vlm_url, config, "backends.vlm.url")
    model = pick(model, config, "backends.vlm.model", "default")
    if (vlm_url is None) == (mock is None):
        _fail("pass exactly one of --vlm-url or --mock", EXIT_INVALID_INPUT)

    vlm: dict = {"model": model}
    if vlm_url is not None:
        vlm["http"] = _backend_payload(config, "vlm", vlm_url)
    else:
        vlm["mock"] = mock
        if mock == "scripted":
            if replies_path is None:
                _fail("--mock scripted needs --replies", EXIT_INVALID_INPUT)
            vlm["replies_path"] = replies_path

    payload: dict = {
        "items": _read_jsonl(qa_path),
        "mode": mode,
        "vlm": vlm,
    }
    inputs = [qa_path, *scene_paths]
    if scene_paths:
        payload["scenes"] = [_read_json(p) for p in scene_paths]
    if map_path:
        payload["map_json"] = Path(map_path).read_text(encoding="utf-8")
        inputs.append(map_path)
    if images_dir:
        payload["images"] = _scan_image_dir(images_dir)
    if detections_path:
        payload["detections"] = _read_json(detections_path)
        inputs.append(detections_path)

    previous: list[dict] = []
    if resume and out and out != "-" and Path(out).exists():
        previous = _read_jsonl(out)
        payload["skip_qa_ids"] = sorted({p["qa_id"] for p in previous})

    body = _client(ctx).post("/evaluate", payload)
    merged = {p["qa_id"]: p for p in previous}
    merged.update({p["qa_id"]: p for p in body["predictions"]})
    rows = [merged[k] for k in sorted(merged)]
    _write_jsonl(out, rows)
    _emit_manifest(out, "evaluate", {"qa": qa_path, "mode": mode, "model": model,
                                     "resume": resume, "out": out}, inputs)
    click.echo(f"wrote {len(rows)} prediction(s) "
               f"({len(body['predictions'])} new, {len(previous)} kept)", err=True)
    if body["failures"]:
        for failure in body["failures"]:
            click.echo(f"failed {failure['qa_id']}: {failure['error']}: {failure['detail']}",
                       err=True)
        sys.exit(EXIT_PARTIAL)


@main.command("report")
@click.option("--preds", "preds_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Predictions JSONL from evaluate.")
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="QA JSONL the predictions answer.")
@click.option("--mode", default=None, help="Mode label recorded in the report.")
@click.option("--model", default=None, help="Model label recorded in the report.")
@click.option("--out", default=None, help="Report JSON path (default: stdout).")
@click.option("--csv", "csv_path", default=None, help="Also write the per-bucket CSV here.")
@click.pass_context
def report(ctx, preds_path, qa_path, mode, model, out, csv_path):
    """Score predictions and write the accuracy/RMSE report."""
    payload = {
        "items": _read_jsonl(qa_path),
        "predictions": _read_jsonl(preds_path),
        "mode": mode,
        "model": model,
    }
    body = _client(ctx).post("/report/score", payload)
    _write_text(out, json.dumps(body["report"], indent=2, sort_keys=True) + "\n")
    if csv_path:
        Path(csv_path).write_text(body["csv"], encoding="utf-8")
    _emit_manifest(out, "report", {"preds": preds_path, "qa": qa_path, "out": out},
                   [preds_path, qa_path])
    counts = body["report"]["counts"]
    avg = body["report"]["averages"]
    acc = avg["accuracy_pct"]
    rmse = avg["rmse_m"]
    acc_text = "n/a" if acc is None else f"{acc:.1f}%"
    rmse_text = "n/a" if rmse is None else f"{rmse:.2f} m"
    click.echo(
        f"scored {counts['total_predictions']}/{counts['total_items']} predictions: "
        f"avg accuracy {acc_text}, avg RMSE {rmse_text}",
        err=True,
    )


@main.command("chance")
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="QA JSONL file.")
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Output JSON path (default: stdout).")
@click.pass_context
def chance(ctx, qa_path, trials, seed, out):
    """Simulate random-guess accuracy per report bucket."""
    payload = {"items": _read_jsonl(qa_path), "trials": trials, "seed": seed}
    body = _client(ctx).post("/report/chance", payload)
    _write_text(out, json.dumps(body["chance"], indent=2, sort_keys=True) + "\n")
    _emit_manifest(out, "chance", {"qa": qa_path, "trials": trials}, [qa_path], seed=seed)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8021, show_default=True)
def serve(host, port):
    """Run the HTTP service with uvicorn."""
    import uvicorn

    from ego3d.service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
