"""Prompt assembly and chat-completion clients.

Five prompt modes control what context the model sees alongside the
question:

* ``Baseline``: the camera images only.
* ``Ego3D``: images plus the rendered cognitive map.
* ``Blind``: the question text alone, no images and no map (measures
  how much of the benchmark leaks through language priors).
* ``BlindCogmap``: the cognitive map but no images.
* ``DepthRecList``: images plus a flat per-view detection list with
  depths (an ablation of the structured map).

The system prompt demands step-by-step reasoning inside ``<think>`` tags
followed by the final answer inside ``<answer>`` tags; both prompt texts
are deterministic functions of their inputs and are frozen as golden
files in the test suite.

The HTTP client speaks the chat-completions protocol: POST
``{base_url}/v1/chat/completions`` with interleaved text and base64
image parts, answer read from ``choices[0].message.content``. Two mock
clients exist for offline work: a scripted mock that replays canned
replies keyed by question id, and a geometry-oracle mock that computes
the true answer from scene ground truth (used for end-to-end
perfect-score tests). Both mocks record every request payload so tests
can assert what a mode actually sent.
"""

from __future__ import annotations

import base64
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from ego3d.cogmap import CognitiveMap, build_map, render_textual
from ego3d.errors import ProtocolError, ValidationError
from ego3d.geometry import View
from ego3d.oracle import oracle_answer_text
from ego3d.perception import BackendConfig, Detection, LocatedObject, _BackendClient
from ego3d.qagen import Form, QAItem, SceneSource


class Mode(str, Enum):
    BASELINE = "Baseline"
    EGO3D = "Ego3D"
    BLIND = "Blind"
    BLIND_COGMAP = "BlindCogmap"
    DEPTH_REC_LIST = "DepthRecList"


_MODE_ALIASES = {
    "baseline": Mode.BASELINE,
    "ego3d": Mode.EGO3D,
    "blind": Mode.BLIND,
    "blind-cogmap": Mode.BLIND_COGMAP,
    "list": Mode.DEPTH_REC_LIST,
}


def parse_mode(name: str) -> Mode:
    """Accept either the enum value ('Ego3D') or the CLI spelling ('ego3d')."""
    try:
        return Mode(name)
    except ValueError:
        pass
    try:
        return _MODE_ALIASES[name.lower()]
    except KeyError:
        raise ValidationError(
            f"unknown mode {name!r}; expected one of {sorted(_MODE_ALIASES)}"
        ) from None


def map_from_scene(scene: SceneSource) -> CognitiveMap:
    """A ground-truth cognitive map built directly from scene annotations.

    Used by the evaluation harness when prompting map-aware modes over
    generated QA: captions stand in for referring expressions and object
    centers for perception output.
    """
    return build_map(
        LocatedObject(obj.caption, obj.view, obj.center) for obj in scene.objects
    )


MODES_WITH_IMAGES = (Mode.BASELINE, Mode.EGO3D, Mode.DEPTH_REC_LIST)
MODES_WITH_MAP = (Mode.EGO3D, Mode.BLIND_COGMAP)

SYSTEM_PROMPT = (
    "You are a driving assistant that reasons about the 3D space around the "
    "ego vehicle. Think through the problem step by step inside <think> and "
    "</think> tags. Then give only your final answer inside <answer> and "
    "</answer> tags: the letter of the chosen option for multiple choice, "
    "'yes' or 'no' for yes/no questions, or a single number for numeric "
    "questions."
)

MAP_BLOCK_HEADER = "Cognitive map of referenced objects:"
DETECTION_BLOCK_HEADER = "Per-view detections with metric depth:"

OPTION_LETTERS = "ABCD"


@dataclass(frozen=True)
class PromptBundle:
    mode: Mode
    system_text: str
    user_text: str
    image_refs: tuple[tuple[View, str], ...]
    qa_id: str

    def __post_init__(self) -> None:
        if self.mode in (Mode.BLIND, Mode.BLIND_COGMAP) and self.image_refs:
            raise ValidationError(f"{self.mode.value} prompts must not carry images")


@dataclass(frozen=True)
class ModelReply:
    raw_text: str
    latency: float
    token_counts: dict | None = None


def format_detection_line(detection: Detection, depth: float) -> str:
    b = detection.bbox
    coords = ",".join(f"{v:g}" for v in (b.x1, b.y1, b.x2, b.y2))
    return (
        f"{detection.view.value}-View: Detected {detection.expression} "
        f"at bbox [{coords}], depth: {depth:.1f}"
    )


def _question_block(qa: QAItem) -> str:
    lines = [f"Question: {qa.question}"]
    if qa.form is Form.MULTI_CHOICE:
        lines.append("Options:")
        for letter, option in zip(OPTION_LETTERS, qa.options):
            lines.append(f"{letter}. {option}")
        lines.append("Answer with the letter of the correct option.")
    elif qa.form is Form.YES_NO:
        lines.append("Answer 'yes' or 'no'.")
    return "\n".join(lines)


def assemble_prompt(
    qa: QAItem,
    mode: Mode,
    cmap: CognitiveMap | None = None,
    detections: Sequence[tuple[Detection, float]] | None = None,
    images: dict[View, str | Path] | None = None,
) -> PromptBundle:
    """Compose the full prompt for one question under one mode.

    The user text is laid out map first, then the detection list, then
    the question, so spatial context precedes the query it supports.
    """
    if mode in MODES_WITH_MAP and cmap is None:
        raise ValidationError(f"{mode.value} mode needs a cognitive map")
    if mode is Mode.DEPTH_REC_LIST and detections is None:
        raise ValidationError("DepthRecList mode needs the detection list")
    if mode in MODES_WITH_IMAGES and not images:
        raise ValidationError(f"{mode.value} mode needs per-view images")

    blocks: list[str] = []
    if mode in MODES_WITH_MAP:
        blocks.append(f"{MAP_BLOCK_HEADER}\n{render_textual(cmap).rstrip()}")
    if mode is Mode.DEPTH_REC_LIST:
        ordered = sorted(detections, key=lambda pair: pair[0].view.ring_index)
        lines = [format_detection_line(det, depth) for det, depth in ordered]
        blocks.append(
            f"{DETECTION_BLOCK_HEADER}\n" + ("\n".join(lines) if lines else "(none)")
        )
    blocks.append(_question_block(qa))

    if mode in MODES_WITH_IMAGES:
        refs = tuple(
            (view, str(images[view]))
            for view in sorted(images, key=lambda v: v.ring_index)
        )
    else:
        refs = ()
    return PromptBundle(
        mode=mode,
        system_text=SYSTEM_PROMPT,
        user_text="\n\n".join(blocks),
        image_refs=refs,
        qa_id=qa.id,
    )


def _image_data_url(path: str) -> str:
    suffix = Path(path).suffix.lower().lstrip(".") or "png"
    mime = {"jpg": "jpeg"}.get(suffix, suffix)
    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    return f"data:image/{mime};base64,{data}"


def build_chat_payload(bundle: PromptBundle, model: str) -> dict:
    """The chat-completions request body for a bundle.

    Mocks and the HTTP client share this so a mock's request log is an
    exact record of what the real backend would have received.
    """
    content: list[dict] = []
    for k, (view, path) in enumerate(bundle.image_refs, start=1):
        content.append({"type": "text", "text": f"Image {k}: {view.value} camera"})
        content.append(
            {"type": "image_url", "image_url": {"url": _image_data_url(path)}}
        )
    content.append({"type": "text", "text": bundle.user_text})
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": content},
        ],
        "metadata": {"qa_id": bundle.qa_id},
    }


class ChatClient(Protocol):
    def chat(self, bundle: PromptBundle) -> ModelReply: ...


class HttpChatClient(_BackendClient):
    """Chat-completions client with the shared retry/auth plumbing."""

    def __init__(
        self,
        cfg: BackendConfig,
        model: str = "default",
        transport: httpx.BaseTransport | None = None,
    ):
        if cfg.fixture_dir is not None:
            raise ValidationError(
                "fixture:// URLs are served by the mock clients, not HTTP"
            )
        super().__init__(cfg, transport=transport)
        self.model = model

    def chat(self, bundle: PromptBundle) -> ModelReply:
        payload = build_chat_payload(bundle, self.model)
        start = time.perf_counter()
        body = self._post("/v1/chat/completions", payload)
        latency = time.perf_counter() - start
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"chat response malformed: {body!r}") from exc
        if not isinstance(text, str):
            raise ProtocolError("chat response content is not text")
        usage = body.get("usage")
        return ModelReply(
            raw_text=text,
            latency=latency,
            token_counts=usage if isinstance(usage, dict) else None,
        )


class ScriptedMockClient:
    """Replays canned replies keyed by question id; logs every request."""

    def __init__(self, replies: dict[str, str], model: str = "scripted-mock"):
        self.replies = dict(replies)
        self.model = model
        self.request_log: list[dict] = []

    @classmethod
    def from_dir(cls, directory: str | Path) -> "ScriptedMockClient":
        """Load replies from <dir>/replies.json ({qa_id: raw reply text})."""
        import json

        path = Path(directory) / "replies.json"
        if not path.is_file():
            raise ValidationError(f"scripted mock needs {path}")
        replies = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(replies, dict):
            raise ValidationError(f"{path} must map qa ids to reply text")
        return cls(replies)

    def chat(self, bundle: PromptBundle) -> ModelReply:
        self.request_log.append(build_chat_payload(bundle, self.model))
        if bundle.qa_id not in self.replies:
            raise ValidationError(f"no scripted reply for {bundle.qa_id}")
        return ModelReply(raw_text=self.replies[bundle.qa_id], latency=0.0)


class OracleMockClient:
    """Answers every question correctly from scene ground truth.

    Useful as the top of an end-to-end soundness test: if generation,
    prompting, parsing, and scoring are all consistent, this client must
    score 100% accuracy and zero numeric error.
    """

    def __init__(self, qaset: Sequence[QAItem], scenes: dict[str, SceneSource]):
        self._items = {item.id: item for item in qaset}
        self._scenes = scenes
        self.model = "oracle-mock"
        self.request_log: list[dict] = []

    def chat(self, bundle: PromptBundle) -> ModelReply:
        self.request_log.append(build_chat_payload(bundle, self.model))
        item = self._items.get(bundle.qa_id)
        if item is None:
            raise ValidationError(f"oracle mock does not know item {bundle.qa_id}")
        scene = self._scenes.get(item.meta.get("scene_id", ""))
        if scene is None:
            raise ValidationError(f"oracle mock has no scene for {bundle.qa_id}")
        answer = oracle_answer_text(item, scene)
        text = (
            "<think>Recomputed the answer from the scene's ground-truth "
            f"geometry.</think><answer>{answer}</answer>"
        )
        return ModelReply(raw_text=text, latency=0.0)
