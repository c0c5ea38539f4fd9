"""Evaluation toolkit: prediction ingestion, per-tier reports, plot data.

Per-tier predictions arrive as CSV (header ``video_id,label``); quality
aggregates arrive from the transform stage as a summary document. The
emitted report and plot tables are byte-deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .corpus import DEFAULT_CLASSES, ClipRecord, ParseError, SplitAssignment
from .metrics import (
    CONFIG_LABELS,
    MetricsReport,
    QualitySummary,
    accuracy_drop,
    percentage,
    pu_score,
    top1_accuracy,
)
from .metrics import face_fail_rate as _face_fail_rate
from .validation import ValidationError

logger = logging.getLogger(__name__)

PREDICTION_HEADER = ("video_id", "label")
CONFIG_NOTE = (
    "Config labels are declarative metadata supplied by the submitter; "
    "this toolkit cannot verify what data a model was trained on."
)
NOBG_NOTE = "combines two independent manipulations"
REPORT_SCHEMA = "privtier-report-v1"
QUALITY_SCHEMA = "privtier-quality-v1"


@dataclass(frozen=True)
class PredictionSet:
    """One submitted prediction file: a tier's video_id -> class map."""

    tier_name: str
    config_label: str
    rows: Mapping[str, str]

    def __post_init__(self):
        if not self.tier_name:
            raise ValidationError("tier_name must be non-empty")
        if self.config_label not in CONFIG_LABELS:
            raise ValidationError(f"config_label must be one of {CONFIG_LABELS}")


def load_predictions(
    data: bytes,
    tier_name: str,
    config_label: str,
    class_set: Sequence[str] = DEFAULT_CLASSES,
) -> PredictionSet:
    """Parse a prediction CSV; errors carry 1-based line numbers."""
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{tier_name}: empty prediction file (missing header)") from None
    if tuple(header) != PREDICTION_HEADER:
        raise ParseError(
            f"{tier_name} line 1: expected header {','.join(PREDICTION_HEADER)!r}, "
            f"got {','.join(header)!r}"
        )
    rows: dict[str, str] = {}
    classes = set(class_set)
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 2 or not row[0] or not row[1]:
            raise ParseError(f"{tier_name} line {lineno}: malformed row {row!r}")
        video_id, label = row
        if video_id in rows:
            raise ParseError(f"{tier_name} line {lineno}: duplicate video_id {video_id!r}")
        if label not in classes:
            raise ParseError(f"{tier_name} line {lineno}: unknown class {label!r}")
        rows[video_id] = label
    if not rows:
        logger.warning("%s: prediction file has a header but no rows", tier_name)
    return PredictionSet(tier_name=tier_name, config_label=config_label, rows=rows)


@dataclass(frozen=True)
class FaceFlags:
    """Externally produced face-detection booleans, aligned by index."""

    orig_detected: tuple[bool, ...]
    post_detected: Mapping[str, tuple[bool, ...]]  # tier name -> flags

    def __post_init__(self):
        for tier, flags in self.post_detected.items():
            if len(flags) != len(self.orig_detected):
                raise ValidationError(
                    f"face flags for {tier}: {len(flags)} entries vs "
                    f"{len(self.orig_detected)} originals"
                )


def load_face_flags(data: bytes) -> FaceFlags:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"face flags: invalid JSON at offset {exc.pos}") from exc
    if not isinstance(doc, dict) or "orig_detected" not in doc or "post_detected" not in doc:
        raise ParseError("face flags must contain orig_detected and post_detected")
    orig = tuple(bool(v) for v in doc["orig_detected"])
    post = {t: tuple(bool(v) for v in flags) for t, flags in doc["post_detected"].items()}
    return FaceFlags(orig_detected=orig, post_detected=post)


def serialize_quality_summary(summaries: Sequence[QualitySummary]) -> bytes:
    """Deterministic document holding per-tier SSIM/PSNR aggregates."""
    tiers = {}
    for s in sorted(summaries, key=lambda s: s.tier_name):
        tiers[s.tier_name] = {
            "mean_ssim": None if s.mean_ssim is None else round(s.mean_ssim, 6),
            "mean_psnr_db": None if s.mean_psnr_db is None else round(s.mean_psnr_db, 6),
            "frame_count": s.frame_count,
            "skipped_null_roi": s.skipped_null_roi,
            "psnr_inf_count": s.psnr_inf_count,
            "skipped_small_roi": s.skipped_small_roi,
        }
    doc = {"schema": QUALITY_SCHEMA, "tiers": tiers}
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def load_quality_summary(data: bytes) -> dict[str, QualitySummary]:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"quality summary: invalid JSON at offset {exc.pos}") from exc
    if doc.get("schema") != QUALITY_SCHEMA:
        raise ParseError(f"quality summary: unexpected schema {doc.get('schema')!r}")
    out = {}
    for tier, entry in doc.get("tiers", {}).items():
        try:
            out[tier] = QualitySummary(
                tier_name=tier,
                mean_ssim=entry["mean_ssim"],
                mean_psnr_db=entry["mean_psnr_db"],
                frame_count=int(entry["frame_count"]),
                skipped_null_roi=int(entry["skipped_null_roi"]),
                psnr_inf_count=int(entry["psnr_inf_count"]),
                skipped_small_roi=int(entry.get("skipped_small_roi", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"quality summary: tier {tier!r} malformed ({exc})") from exc
    return out


def evaluate(
    predictions: PredictionSet,
    corpus: Sequence[ClipRecord],
    split: SplitAssignment,
    quality: Optional[QualitySummary] = None,
    face_flags: Optional[FaceFlags] = None,
    *,
    acc_original_pct: Optional[float] = None,
    class_set: Sequence[str] = DEFAULT_CLASSES,
    allow_train_eval: bool = False,
) -> MetricsReport:
    """Score one tier's predictions against the ground-truth split.

    Accuracy drop and the privacy-utility score compare against the rounded
    Original-tier percentage, which must be supplied for every tier except
    Original itself; non-Original tiers additionally need a quality summary
    (the 1 - SSIM factor). Evaluating the train split is refused unless
    explicitly allowed.
    """
    if split.split_name == "train" and not allow_train_eval:
        raise ValidationError(
            "refusing to evaluate against the train split (pass allow_train_eval to override)"
        )
    by_id = {r.video_id: r for r in corpus}
    unknown_split = sorted(set(split.video_ids) - set(by_id))
    if unknown_split:
        raise ValidationError(f"split ids missing from the corpus: {unknown_split[:5]}")
    labels = {vid: by_id[vid].class_label for vid in split.video_ids}
    outside = sorted(set(predictions.rows) - set(labels))
    if outside:
        raise ValidationError(
            f"{predictions.tier_name}: predictions outside the evaluation split: {outside[:5]}"
        )

    top1, per_class = top1_accuracy(predictions.rows, labels, class_set)
    top1_pct = percentage(top1)
    is_original = predictions.tier_name == "Original"

    if is_original:
        drop = accuracy_drop(acc_original_pct if acc_original_pct is not None else top1_pct, top1_pct)
        pu = None
    else:
        if acc_original_pct is None:
            raise ValidationError(
                f"{predictions.tier_name}: Original-tier accuracy required for acc_drop and PU"
            )
        drop = accuracy_drop(acc_original_pct, top1_pct)
        if quality is None or quality.mean_ssim is None:
            raise ValidationError(
                f"{predictions.tier_name}: SSIM summary required to compute the PU score"
            )
        pu = pu_score(top1_pct, acc_original_pct, quality.mean_ssim)

    fail_rate = None
    if face_flags is not None and predictions.tier_name in face_flags.post_detected:
        fail_rate = _face_fail_rate(
            face_flags.orig_detected, face_flags.post_detected[predictions.tier_name]
        )

    return MetricsReport(
        tier_name=predictions.tier_name,
        top1=top1,
        per_class=per_class,
        acc_drop_pp=drop,
        roi_ssim=None if quality is None else quality.mean_ssim,
        roi_psnr_db=None if quality is None else quality.mean_psnr_db,
        face_fail_rate=fail_rate,
        pu_score=pu,
        frame_count=0 if quality is None else quality.frame_count,
        config_label=predictions.config_label,
        missing_predictions=len(labels) - sum(1 for v in labels if v in predictions.rows),
    )


@dataclass(frozen=True)
class ReportBundle:
    """Rendered evaluation artifacts, all byte-deterministic."""

    report_json: bytes
    accuracy_plot_csv: bytes  # tier, config, accuracy_pct
    pu_plot_csv: bytes  # one_minus_ssim, accuracy_pct, tier, note


def _round_or_none(value: Optional[float], digits: int):
    return None if value is None else round(value, digits)


def _psnr_field(value: Optional[float]):
    if value is None:
        return None
    if math.isinf(value):
        return "Infinity"
    return round(value, 2)


def _tier_doc(r: MetricsReport) -> dict:
    return {
        "tier": r.tier_name,
        "config": r.config_label,
        "top1_pct": r.top1_pct,
        "top1_exact": f"{r.top1.numerator}/{r.top1.denominator}",
        "per_class_pct": {
            cls: (None if acc is None else percentage(acc))
            for cls, acc in sorted(r.per_class.items())
        },
        "acc_drop_pp": round(r.acc_drop_pp, 1),
        "roi_ssim": _round_or_none(r.roi_ssim, 3),
        "roi_psnr_db": _psnr_field(r.roi_psnr_db),
        "face_fail_rate_pct": None if r.face_fail_rate is None else percentage(r.face_fail_rate),
        "pu_score": _round_or_none(r.pu_score, 3),
        "frame_count": r.frame_count,
        "missing_predictions": r.missing_predictions,
    }


def _render_plot_tables(tier_docs: Sequence[dict]) -> tuple[bytes, bytes]:
    acc_lines = ["tier,config,accuracy_pct"]
    for d in tier_docs:
        acc_lines.append(f"{d['tier']},{d['config']},{d['top1_pct']:.1f}")
    accuracy_csv = ("\n".join(acc_lines) + "\n").encode("utf-8")

    pu_lines = ["one_minus_ssim,accuracy_pct,tier,note"]
    for d in tier_docs:
        if d["roi_ssim"] is None:
            continue
        note = NOBG_NOTE if d["tier"].endswith("_NoBG") else ""
        pu_lines.append(f"{1.0 - d['roi_ssim']:.3f},{d['top1_pct']:.1f},{d['tier']},{note}")
    pu_csv = ("\n".join(pu_lines) + "\n").encode("utf-8")
    return accuracy_csv, pu_csv


def emit_report(reports: Sequence[MetricsReport]) -> ReportBundle:
    """Render the run report plus the two plot-data tables.

    The accuracy table has one row per report; the privacy-utility table has
    one point per report with a known SSIM, with NoBG tiers annotated as
    combining two manipulations.
    """
    if not reports:
        raise ValidationError("emit_report needs at least one report")
    tier_docs = [_tier_doc(r) for r in reports]
    doc = {
        "schema": REPORT_SCHEMA,
        "config_note": CONFIG_NOTE,
        "tiers": tier_docs,
    }
    report_json = (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")
    accuracy_csv, pu_csv = _render_plot_tables(tier_docs)
    return ReportBundle(
        report_json=report_json,
        accuracy_plot_csv=accuracy_csv,
        pu_plot_csv=pu_csv,
    )


def plot_tables_from_report(report_json: bytes) -> tuple[bytes, bytes]:
    """Rebuild the two plot-data tables from an existing report document."""
    try:
        doc = json.loads(report_json)
    except json.JSONDecodeError as exc:
        raise ParseError(f"report: invalid JSON at offset {exc.pos}") from exc
    if doc.get("schema") != REPORT_SCHEMA:
        raise ParseError(f"report: unexpected schema {doc.get('schema')!r}")
    return _render_plot_tables(doc["tiers"])
