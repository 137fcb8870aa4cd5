"""Reply parsing, scoring, and report generation.

Scores are bucketed the way benchmark tables usually lay them out:
eight accuracy columns (ego/object absolute distance, localization,
ego/object motion, travel time, ego/object relative distance) plus two
RMSE columns for the open numeric distance answers. The accuracy
average is the arithmetic mean of the accuracy buckets that have data,
and likewise for RMSE.

Parse failures are data, not errors: a multiple-choice or yes/no reply
that cannot be parsed counts as incorrect, while an unparseable numeric
reply is excluded from RMSE and surfaces in the reported failure rate.
Numbers are never imputed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ego3d.errors import ValidationError
from ego3d.qagen import Category, Form, Perspective, QAItem

REPORT_VERSION = 1

ACCURACY_BUCKETS = (
    "ego_abs_dist",
    "obj_abs_dist",
    "localization",
    "ego_motion",
    "obj_motion",
    "travel_time",
    "ego_rel_dist",
    "obj_rel_dist",
)
RMSE_BUCKETS = ("ego_abs_dist", "obj_abs_dist")

_PERSPECTIVE_PREFIX = {Perspective.EGO: "ego", Perspective.OBJECT: "obj"}


def bucket_of(item: QAItem) -> str:
    """Report column an item belongs to (shared by accuracy and RMSE)."""
    if item.category is Category.ABS_DIST:
        return f"{_PERSPECTIVE_PREFIX[item.perspective]}_abs_dist"
    if item.category is Category.REL_DIST:
        return f"{_PERSPECTIVE_PREFIX[item.perspective]}_rel_dist"
    if item.category is Category.MOTION:
        return f"{_PERSPECTIVE_PREFIX[item.perspective]}_motion"
    if item.category is Category.LOCALIZATION:
        return "localization"
    return "travel_time"


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    parsed: int | str | float | None
    raw_text: str


_ANSWER_BLOCK = re.compile(r"<answer>(.*?)</answer>", re.IGNORECASE | re.DOTALL)
_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def _candidates(raw_text: str) -> list[str]:
    """Texts to scan, most authoritative first: the last answer block, then
    the full reply as a fallback for replies that forgot the tags."""
    blocks = _ANSWER_BLOCK.findall(raw_text)
    out = [blocks[-1]] if blocks else []
    out.append(raw_text)
    return out


def parse_answer(raw_text: str, qa: QAItem) -> Prediction:
    """Extract the model's answer appropriate to the item's form.

    Multiple choice wants a standalone option letter, yes/no wants the
    literal word, numeric wants the first real number (unit words are
    simply ignored). Returns parsed=None when nothing matches.
    """
    parsed: int | str | float | None = None
    for text in _candidates(raw_text):
        if qa.form is Form.MULTI_CHOICE:
            upper_bound = chr(ord("A") + len(qa.options) - 1)
            match = re.search(rf"\b([A-{upper_bound}])\b", text, re.IGNORECASE)
            if match:
                parsed = ord(match.group(1).upper()) - ord("A")
        elif qa.form is Form.YES_NO:
            match = _YES_NO.search(text)
            if match:
                parsed = match.group(1).lower()
        else:
            match = _NUMBER.search(text)
            if match:
                parsed = float(match.group(0))
        if parsed is not None:
            break
    return Prediction(qa_id=qa.id, parsed=parsed, raw_text=raw_text)


@dataclass(frozen=True)
class EvalReport:
    accuracy: dict  # bucket -> {"pct", "correct", "n"}
    rmse: dict  # bucket -> {"rmse", "n", "excluded"}
    avg_accuracy_pct: float | None
    avg_rmse_m: float | None
    total_items: int
    total_predictions: int
    parse_failures: int
    mode: str | None = None
    model: str | None = None

    @property
    def parse_failure_rate(self) -> float:
        if self.total_predictions == 0:
            return 0.0
        return self.parse_failures / self.total_predictions


def score(
    predictions: Sequence[Prediction],
    qaset: Sequence[QAItem],
    mode: str | None = None,
    model: str | None = None,
) -> EvalReport:
    """Score predictions against their items.

    Every prediction must name a known item. Items without predictions
    simply do not enter any denominator (total_items still reports the
    full set size so missing coverage is visible).
    """
    items = {item.id: item for item in qaset}
    acc: dict[str, list[int]] = {b: [] for b in ACCURACY_BUCKETS}
    sq_err: dict[str, list[float]] = {b: [] for b in RMSE_BUCKETS}
    rmse_excluded: dict[str, int] = {b: 0 for b in RMSE_BUCKETS}
    failures = 0

    for pred in predictions:
        item = items.get(pred.qa_id)
        if item is None:
            raise ValidationError(f"prediction for unknown item {pred.qa_id!r}")
        bucket = bucket_of(item)
        if pred.parsed is None:
            failures += 1
        if item.form is Form.ABSOLUTE_METERS:
            if pred.parsed is None:
                rmse_excluded[bucket] += 1
            else:
                sq_err[bucket].append((float(pred.parsed) - float(item.answer)) ** 2)
        else:
            acc[bucket].append(1 if pred.parsed == item.answer else 0)

    accuracy = {}
    for bucket in ACCURACY_BUCKETS:
        hits = acc[bucket]
        if hits:
            accuracy[bucket] = {
                "pct": 100.0 * sum(hits) / len(hits),
                "correct": sum(hits),
                "n": len(hits),
            }
    rmse = {}
    for bucket in RMSE_BUCKETS:
        errs = sq_err[bucket]
        if errs or rmse_excluded[bucket]:
            rmse[bucket] = {
                "rmse": math.sqrt(sum(errs) / len(errs)) if errs else None,
                "n": len(errs),
                "excluded": rmse_excluded[bucket],
            }

    acc_values = [v["pct"] for v in accuracy.values()]
    rmse_values = [v["rmse"] for v in rmse.values() if v["rmse"] is not None]
    return EvalReport(
        accuracy=accuracy,
        rmse=rmse,
        avg_accuracy_pct=sum(acc_values) / len(acc_values) if acc_values else None,
        avg_rmse_m=sum(rmse_values) / len(rmse_values) if rmse_values else None,
        total_items=len(qaset),
        total_predictions=len(predictions),
        parse_failures=failures,
        mode=mode,
        model=model,
    )


def chance_level(
    qaset: Sequence[QAItem], trials: int = 1000, rng_seed: int = 0
) -> dict[str, float]:
    """Accuracy (%) of uniform random option selection, simulated per bucket."""
    if trials < 1:
        raise ValidationError("trials must be positive")
    rng = np.random.default_rng(rng_seed)
    hits: dict[str, int] = {}
    counts: dict[str, int] = {}
    for item in qaset:
        if item.form is Form.ABSOLUTE_METERS:
            continue
        bucket = bucket_of(item)
        answer_idx = (
            item.answer
            if item.form is Form.MULTI_CHOICE
            else item.options.index(item.answer)
        )
        draws = rng.integers(0, len(item.options), size=trials)
        hits[bucket] = hits.get(bucket, 0) + int((draws == answer_idx).sum())
        counts[bucket] = counts.get(bucket, 0) + trials
    return {b: 100.0 * hits[b] / counts[b] for b in sorted(hits)}


# ---------------------------------------------------------------------------
# serialization


def report_to_dict(report: EvalReport) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "mode": report.mode,
        "model": report.model,
        "counts": {
            "total_items": report.total_items,
            "total_predictions": report.total_predictions,
            "parse_failures": report.parse_failures,
            "parse_failure_rate": report.parse_failure_rate,
        },
        "accuracy": report.accuracy,
        "rmse": report.rmse,
        "averages": {
            "accuracy_pct": report.avg_accuracy_pct,
            "rmse_m": report.avg_rmse_m,
        },
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def report_to_csv(report: EvalReport) -> str:
    """One-row summary mirroring the usual table layout: eight accuracy
    columns, the accuracy average, two RMSE columns, the RMSE average."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (
        ["mode", "model"]
        + [f"acc_{b}" for b in ACCURACY_BUCKETS]
        + ["acc_avg"]
        + [f"rmse_{b}" for b in RMSE_BUCKETS]
        + ["rmse_avg", "parse_failure_rate"]
    )
    writer.writerow(header)

    def fmt(value: float | None) -> str:
        return "" if value is None else f"{value:.4f}"

    row = [report.mode or "", report.model or ""]
    for bucket in ACCURACY_BUCKETS:
        row.append(fmt(report.accuracy.get(bucket, {}).get("pct")))
    row.append(fmt(report.avg_accuracy_pct))
    for bucket in RMSE_BUCKETS:
        row.append(fmt(report.rmse.get(bucket, {}).get("rmse")))
    row.append(fmt(report.avg_rmse_m))
    row.append(f"{report.parse_failure_rate:.4f}")
    writer.writerow(row)
    return buf.getvalue()


def write_predictions(predictions: Iterable[Prediction], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"qa_id": p.qa_id, "parsed": p.parsed, "raw_text": p.raw_text},
            sort_keys=True,
        )
        for p in predictions
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_predictions(path: str | Path) -> list[Prediction]:
    preds = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            preds.append(
                Prediction(
                    qa_id=raw["qa_id"], parsed=raw["parsed"], raw_text=raw["raw_text"]
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: malformed prediction: {exc}") from exc
    return preds
