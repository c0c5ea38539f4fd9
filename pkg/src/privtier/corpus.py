"""Clip records, per-frame ROI annotations, and train/test split handling.

The on-disk metadata formats (annotations.json, split files) are parsed and
serialized here. All numeric invariants are enforced at parse time so that
downstream stages can assume well-formed records.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .validation import ValidationError, check_bbox, check_fraction

logger = logging.getLogger(__name__)

OUTPUT_SIZE = 224
CLIP_FRAMES = 32
KEYPOINT_COUNT = 17
MIN_CONFIDENCE = 0.5

TRAIN_GROUPS = range(1, 20)
TEST_GROUPS = range(20, 26)

# Benchmark class list (UCF101 subset), alphabetical.
DEFAULT_CLASSES = (
    "ApplyEyeMakeup",
    "BabyCrawling",
    "BodyWeightSquats",
    "BrushingTeeth",
    "CleanAndJerk",
    "Haircut",
    "JumpRope",
    "JumpingJack",
    "Lunges",
    "MoppingFloor",
    "ShavingBeard",
    "TaiChi",
    "WalkingWithDog",
    "WallPushups",
    "WritingOnBoard",
)

_GROUP_RE = re.compile(r"_g(\d+)_")


class ParseError(ValueError):
    """Malformed metadata document (syntax level, not schema level)."""


def assign_split(group_id: int) -> str:
    """Map a source group id to its fixed split: groups 1-19 train, 20-25 test."""
    if int(group_id) != group_id or not 1 <= group_id <= 25:
        raise ValidationError(f"group_id {group_id!r} outside [1, 25]")
    return "train" if group_id <= 19 else "test"


def group_from_source_file(source_file: str) -> int:
    """Extract the group id from a UCF-style file name (v_Class_gNN_cMM.avi)."""
    m = _GROUP_RE.search(source_file)
    if m is None:
        raise ValidationError(f"source_file {source_file!r} carries no group token (_gNN_)")
    return int(m.group(1))


def detection_rate(annotations: Sequence[Optional["RoiAnnotation"]]) -> Fraction:
    """Exact fraction of non-null entries. Rounding happens only at serialization."""
    if len(annotations) == 0:
        raise ValidationError("detection_rate undefined for an empty annotation list")
    return Fraction(sum(1 for a in annotations if a is not None), len(annotations))


@dataclass(frozen=True)
class RoiAnnotation:
    """One frame's ROI: bounding box, detector confidence, and 17 keypoints.

    Coordinates are in output-pixel space (224x224). The binary ROI mask is
    a rectangular fill of the box and is materialized on demand; only the
    ``mask_kind`` hook is stored, to leave room for raster masks later.
    """

    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max (half-open)
    confidence: float
    keypoints: tuple[tuple[float, float, float], ...]
    mask_kind: str = "bbox"

    def __post_init__(self):
        check_bbox(self.bbox, OUTPUT_SIZE, OUTPUT_SIZE)
        conf = check_fraction(self.confidence, "confidence")
        if conf < MIN_CONFIDENCE:
            raise ValidationError(
                f"confidence {conf} below {MIN_CONFIDENCE}; sub-threshold detections "
                "must be dropped upstream (use null instead)"
            )
        if len(self.keypoints) != KEYPOINT_COUNT:
            raise ValidationError(
                f"expected {KEYPOINT_COUNT} keypoints, got {len(self.keypoints)}"
            )
        for i, (x, y, c) in enumerate(self.keypoints):
            check_fraction(c, f"keypoints[{i}].c")
        if self.mask_kind != "bbox":
            raise ValidationError(f"unsupported mask_kind {self.mask_kind!r}")

    def mask(self, height: int = OUTPUT_SIZE, width: int = OUTPUT_SIZE) -> np.ndarray:
        """Binary mask, 1 inside the bbox rectangle and 0 elsewhere."""
        m = np.zeros((height, width), dtype=np.uint8)
        x0, y0, x1, y1 = self.bbox
        m[y0:y1, x0:x1] = 1
        return m


@dataclass(frozen=True)
class ClipRecord:
    """One source clip: identity, label, group, split, and per-frame ROIs."""

    video_id: str
    source_file: str
    class_label: str
    group_id: int
    split: str
    source_fps: float
    total_frames: int
    clip_frames: int
    detection_rate: Fraction
    roi_bbox_mean: tuple[int, int, int, int]
    annotations: tuple[Optional[RoiAnnotation], ...]
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vid = self.video_id
        if self.clip_frames != CLIP_FRAMES:
            raise ValidationError(f"{vid}: clip_frames must be {CLIP_FRAMES}, got {self.clip_frames}")
        if len(self.annotations) != self.clip_frames:
            raise ValidationError(
                f"{vid}: annotations length {len(self.annotations)} != clip_frames {self.clip_frames}"
            )
        if self.detection_rate != detection_rate(self.annotations):
            raise ValidationError(f"{vid}: detection_rate does not equal the non-null ratio")
        if self.split != assign_split(self.group_id):
            raise ValidationError(
                f"{vid}: split {self.split!r} inconsistent with group {self.group_id}"
            )
        if self.source_fps <= 0:
            raise ValidationError(f"{vid}: source_fps must be positive")
        if self.total_frames < 1:
            raise ValidationError(f"{vid}: total_frames must be positive")
        check_bbox(self.roi_bbox_mean, OUTPUT_SIZE, OUTPUT_SIZE, name=f"{vid}: roi_bbox_mean")


@dataclass(frozen=True)
class SplitAssignment:
    """Ordered video ids belonging to one split."""

    video_ids: tuple[str, ...]
    split_name: str

    def __post_init__(self):
        if self.split_name not in ("train", "test"):
            raise ValidationError(f"split_name must be train or test, got {self.split_name!r}")
        if len(set(self.video_ids)) != len(self.video_ids):
            raise ValidationError(f"duplicate video ids in {self.split_name} split")


def derive_splits(records: Sequence[ClipRecord]) -> tuple[SplitAssignment, SplitAssignment]:
    """Build the two split assignments from validated records (sorted ids)."""
    train = tuple(sorted(r.video_id for r in records if r.split == "train"))
    test = tuple(sorted(r.video_id for r in records if r.split == "test"))
    overlap = set(train) & set(test)
    if overlap:
        raise ValidationError(f"video ids in both splits: {sorted(overlap)[:5]}")
    return SplitAssignment(train, "train"), SplitAssignment(test, "test")


def _parse_annotation_entry(entry, vid: str, idx: int) -> Optional[RoiAnnotation]:
    if entry is None:
        return None
    if not isinstance(entry, dict):
        raise ValidationError(f"{vid}: annotations[{idx}] must be an object or null")
    try:
        bbox = tuple(entry["bbox"])
        confidence = entry["confidence"]
        keypoints = tuple(tuple(kp) for kp in entry["keypoints"])
    except KeyError as exc:
        raise ValidationError(f"{vid}: annotations[{idx}] missing field {exc.args[0]!r}") from None
    try:
        return RoiAnnotation(
            bbox=bbox,
            confidence=confidence,
            keypoints=keypoints,
            mask_kind=entry.get("mask_kind", "bbox"),
        )
    except ValidationError as exc:
        raise ValidationError(f"{vid}: annotations[{idx}]: {exc}") from None


_RECORD_FIELDS = (
    "video_id",
    "source_file",
    "class",
    "split",
    "source_fps",
    "total_frames",
    "clip_frames",
    "detection_rate",
    "roi_bbox_mean",
    "annotations",
)


def parse_annotations(
    document: bytes, class_set: Optional[Iterable[str]] = DEFAULT_CLASSES
) -> list[ClipRecord]:
    """Parse an annotations.json document into validated ClipRecords.

    Unknown extra fields are preserved on the record but otherwise ignored.
    The stored detection_rate is recomputed exactly from the per-frame list;
    a declared value that disagrees beyond 4-decimal rounding is tolerated
    with a warning (published metadata rounds for display). class_set=None
    accepts whatever class names the document declares.
    """
    class_set = None if class_set is None else set(class_set)
    try:
        data = json.loads(document.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"annotations document is not UTF-8 at byte {exc.start}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at offset {exc.pos}: {exc.msg}") from None
    if not isinstance(data, list):
        raise ValidationError("annotations document must be a JSON array")

    records = []
    seen = set()
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise ValidationError(f"entry {i} is not an object")
        vid = obj.get("video_id")
        if not isinstance(vid, str) or not vid:
            raise ValidationError(f"entry {i}: missing or empty video_id")
        if vid in seen:
            raise ValidationError(f"duplicate video_id {vid!r}")
        seen.add(vid)
        for name in _RECORD_FIELDS:
            if name not in obj:
                raise ValidationError(f"{vid}: missing field {name!r}")
        if class_set is not None and obj["class"] not in class_set:
            raise ValidationError(f"{vid}: unknown class {obj['class']!r}")
        if obj["split"] not in ("train", "test"):
            raise ValidationError(f"{vid}: split must be train or test, got {obj['split']!r}")

        annotations = tuple(
            _parse_annotation_entry(e, vid, j) for j, e in enumerate(obj["annotations"])
        )
        declared_rate = check_fraction(obj["detection_rate"], f"{vid}: detection_rate")
        exact_rate = detection_rate(annotations) if annotations else Fraction(0)
        if abs(declared_rate - float(exact_rate)) > 5e-5:
            logger.warning(
                "%s: declared detection_rate %s differs from exact %s; using exact value",
                vid, declared_rate, float(exact_rate),
            )
        group_id = group_from_source_file(obj["source_file"])
        extras = {k: v for k, v in obj.items() if k not in _RECORD_FIELDS}
        records.append(
            ClipRecord(
                video_id=vid,
                source_file=obj["source_file"],
                class_label=obj["class"],
                group_id=group_id,
                split=obj["split"],
                source_fps=obj["source_fps"],
                total_frames=obj["total_frames"],
                clip_frames=obj["clip_frames"],
                detection_rate=exact_rate,
                roi_bbox_mean=tuple(obj["roi_bbox_mean"]),
                annotations=annotations,
                extras=extras,
            )
        )
    return records


def _serialize_annotation(ann: Optional[RoiAnnotation]):
    if ann is None:
        return None
    return {
        "bbox": list(ann.bbox),
        "confidence": ann.confidence,
        "keypoints": [list(kp) for kp in ann.keypoints],
    }


def serialize_annotations(records: Sequence[ClipRecord]) -> bytes:
    """Canonical annotations.json bytes: records sorted by video_id, fixed field order."""
    out = []
    for r in sorted(records, key=lambda r: r.video_id):
        obj = {
            "video_id": r.video_id,
            "source_file": r.source_file,
            "class": r.class_label,
            "split": r.split,
            "source_fps": r.source_fps,
            "total_frames": r.total_frames,
            "clip_frames": r.clip_frames,
            "detection_rate": round(float(r.detection_rate), 4),
            "roi_bbox_mean": list(r.roi_bbox_mean),
            "annotations": [_serialize_annotation(a) for a in r.annotations],
        }
        obj.update(sorted(r.extras.items()))
        out.append(obj)
    return (json.dumps(out, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def serialize_split(split: SplitAssignment) -> bytes:
    """Split file: one video_id per line, LF-terminated, sorted."""
    return "".join(f"{vid}\n" for vid in sorted(split.video_ids)).encode("utf-8")


def parse_split(document: bytes, split_name: str) -> SplitAssignment:
    ids = tuple(line for line in document.decode("utf-8").splitlines() if line)
    return SplitAssignment(ids, split_name)
