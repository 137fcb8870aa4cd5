"""Ego-centered object map: build, then render as text, JSON, or SVG.

The map is the bridge between perception and language: every referred
object is listed with its 3D position in the ego frame so a downstream
model can reason about geometry it cannot see. All three renderers are
deterministic (equal maps give byte-equal output) because rendered maps
are embedded in prompts and frozen as golden test fixtures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from ego3d.errors import ValidationError
from ego3d.geometry import Point3, View, parse_view
from ego3d.perception import LocatedObject
from ego3d.scaling import ScaleEstimate, apply_scale

FRAME_NOTE = "ego at origin; x: right, y: down, z: forward; units meters"
EMPTY_MAP_LINE = "no referenced objects detected."


@dataclass(frozen=True)
class MapEntry:
    expression: str
    view: View
    position: Point3
    range: float

    def __post_init__(self) -> None:
        norm = math.sqrt(self.position.x**2 + self.position.y**2 + self.position.z**2)
        if abs(self.range - norm) > 1e-9:
            raise ValidationError(
                f"range {self.range} disagrees with |position| {norm}"
            )


@dataclass(frozen=True)
class CognitiveMap:
    entries: tuple[MapEntry, ...]
    frame_note: str = FRAME_NOTE
    scale: ScaleEstimate | None = None


def build_map(
    located: Iterable[LocatedObject], scale: ScaleEstimate | None = None
) -> CognitiveMap:
    """Assemble a map from located objects, applying the scale correction if any.

    Entries are sorted by (view ring order, expression, range) so the map,
    and everything rendered from it, is deterministic regardless of the
    order detections arrived in.
    """
    located = list(located)
    positions = [obj.position for obj in located]
    if scale is not None:
        positions = apply_scale(positions, scale.factor)
    entries = [
        MapEntry(
            expression=obj.expression,
            view=obj.view,
            position=pos,
            range=math.sqrt(pos.x**2 + pos.y**2 + pos.z**2),
        )
        for obj, pos in zip(located, positions)
    ]
    entries.sort(key=lambda e: (e.view.ring_index, e.expression, e.range))
    return CognitiveMap(entries=tuple(entries), scale=scale)


def _round(value: float, digits: int) -> float:
    # + 0.0 folds -0.0 into 0.0 so renders never show "-0.0"
    return round(value, digits) + 0.0


def _match_counts(entries: Sequence[MapEntry]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in entries:
        counts[e.expression] = counts.get(e.expression, 0) + 1
    return counts


def _labels(entries: Sequence[MapEntry]) -> list[str]:
    """Expression labels with a '(match k of n)' suffix on duplicates.

    All matches of one expression are kept (a reader can discount false
    positives); the suffix makes clear the repeats are not typos.
    """
    totals = _match_counts(entries)
    seen: dict[str, int] = {}
    labels = []
    for e in entries:
        n = totals[e.expression]
        if n == 1:
            labels.append(f"'{e.expression}'")
        else:
            seen[e.expression] = k = seen.get(e.expression, 0) + 1
            labels.append(f"'{e.expression}' (match {k} of {n})")
    return labels


def render_textual(cmap: CognitiveMap) -> str:
    """One header line plus one line per entry, coordinates to 0.1 m."""
    lines = [cmap.frame_note]
    if not cmap.entries:
        lines.append(EMPTY_MAP_LINE)
    else:
        for entry, label in zip(cmap.entries, _labels(cmap.entries)):
            p = entry.position
            coords = ", ".join(f"{_round(v, 1):.1f}" for v in (p.x, p.y, p.z))
            lines.append(
                f"{entry.view.value}: {label} at ({coords}), "
                f"distance {_round(entry.range, 1):.1f} m"
            )
    return "\n".join(lines) + "\n"


def render_json(cmap: CognitiveMap) -> str:
    """Canonical JSON with sorted keys and 0.01 m precision."""
    scale = None
    if cmap.scale is not None:
        scale = {
            "class_used": cmap.scale.class_used,
            "factor": cmap.scale.factor,
            "h_est": cmap.scale.h_est,
            "n_observations": cmap.scale.n_observations,
        }
    entries = []
    for e in cmap.entries:
        pos = [_round(v, 2) for v in (e.position.x, e.position.y, e.position.z)]
        entries.append(
            {
                "expression": e.expression,
                "view": e.view.value,
                "position": pos,
                # derived from the serialized position so render/parse is idempotent
                "range": _round(math.sqrt(sum(v * v for v in pos)), 2),
            }
        )
    doc = {"frame": cmap.frame_note, "entries": entries, "scale": scale}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_json_map(text: str) -> CognitiveMap:
    """Inverse of render_json up to the declared precision.

    Ranges are recomputed from the rounded positions so the norm
    invariant holds exactly on the parsed map.
    """
    try:
        doc = json.loads(text)
        raw_scale = doc.get("scale")
        scale = None
        if raw_scale is not None:
            scale = ScaleEstimate(
                factor=raw_scale["factor"],
                h_est=raw_scale["h_est"],
                class_used=raw_scale["class_used"],
                n_observations=raw_scale["n_observations"],
            )
        entries = []
        for item in doc["entries"]:
            pos = Point3(*item["position"])
            stored = float(item["range"])
            norm = math.sqrt(pos.x**2 + pos.y**2 + pos.z**2)
            if abs(stored - norm) > 0.05:
                raise ValidationError(
                    f"stored range {stored} inconsistent with position {item['position']}"
                )
            entries.append(
                MapEntry(
                    expression=item["expression"],
                    view=parse_view(item["view"]),
                    position=pos,
                    range=norm,
                )
            )
        return CognitiveMap(
            entries=tuple(entries), frame_note=doc["frame"], scale=scale
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed map JSON: {exc}") from exc


SVG_SIZE = 640
_CENTER = SVG_SIZE / 2
_PLOT_RADIUS = 300.0  # px reserved for the largest range ring


def render_visual(cmap: CognitiveMap) -> str:
    """Top-down SVG: ego at center, 10 m range rings, +z drawn upward."""
    max_range = max((e.range for e in cmap.entries), default=0.0)
    extent_m = max(20.0, math.ceil(max_range / 10.0) * 10.0)
    ppm = _PLOT_RADIUS / extent_m

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<rect width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
        f"<!-- {cmap.frame_note}; plot is the x-z ground plane, z up the page -->",
    ]
    ring = 10.0
    while ring <= extent_m:
        r = ring * ppm
        parts.append(
            f'<circle cx="{_CENTER:.1f}" cy="{_CENTER:.1f}" r="{r:.1f}" '
            f'fill="none" stroke="#cccccc" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_CENTER + 4:.1f}" y="{_CENTER - r - 3:.1f}" '
            f'font-size="10" fill="#888888">{ring:.0f} m</text>'
        )
        ring += 10.0
    parts.append(
        f'<circle cx="{_CENTER:.1f}" cy="{_CENTER:.1f}" r="6" fill="#1f77b4"/>'
    )
    parts.append(
        f'<text x="{_CENTER + 8:.1f}" y="{_CENTER + 4:.1f}" font-size="12">ego</text>'
    )
    for entry, label in zip(cmap.entries, _labels(cmap.entries)):
        cx = _CENTER + entry.position.x * ppm
        cy = _CENTER - entry.position.z * ppm
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="4" fill="#d62728"/>')
        parts.append(
            f'<text x="{cx + 6:.1f}" y="{cy + 4:.1f}" font-size="11">'
            f"{_svg_escape(label)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
