"""Corpus discovery, clip annotation, and annotation-document assembly.

The adapter walks a tree of per-clip frame directories, runs a pose backend
over each clip's centered 32-frame window, and emits two artifacts: a
single annotations.json document (one record per clip, coordinates in the
224x224 output space) and one keypoint JSON per clip under
Estimated_Poses/. Raw-resolution boxes are kept in an auxiliary record
field so the rounding into output space stays auditable.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .backends import PoseBackend
from .errors import AnnotatorError, BackendError
from .selection import KEYPOINT_COUNT, select_primary

logger = logging.getLogger(__name__)

OUTPUT_SIZE = 224
CLIP_FRAMES = 32
DEFAULT_FPS = 25.0
POSES_DIR_NAME = "Estimated_Poses"

# Benchmark class list (UCF101 subset), alphabetical. Pinned here as well as
# on the consumer side; the conformance tests catch any drift.
CLASS_LABELS = (
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

_VIDEO_ID_RE = re.compile(r"^v_(?P<label>[A-Za-z0-9]+)_g(?P<group>\d+)_c\d+$")


@dataclass(frozen=True)
class ClipSource:
    """One clip directory: identity parsed from its name plus frame paths."""

    video_id: str
    class_label: str
    group_id: int
    split: str
    source_file: str
    frame_paths: tuple[Path, ...]


@dataclass(frozen=True)
class FrameAnnotation:
    """Primary-subject annotation for one frame, in output pixel space."""

    bbox: tuple[int, int, int, int]
    confidence: float
    keypoints: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class ClipAnnotation:
    """Per-frame annotations for one clip window plus audit data."""

    video_id: str
    entries: tuple[Optional[FrameAnnotation], ...]
    raw_bboxes: tuple[Optional[tuple[float, float, float, float]], ...]
    detection_rate: Fraction
    source_width: int
    source_height: int
    failed_frames: int


def discover_clips(
    input_root: Path, class_set: Optional[Iterable[str]] = CLASS_LABELS
) -> list[ClipSource]:
    """Find clip directories under a corpus root, sorted by video id.

    Clips live either directly under the root or under a frames/
    subdirectory (the layout the transform pipeline consumes). Directory
    names must be v_<Class>_gNN_cNN ids; the class must be known unless
    class_set is None, and the group must fall in [1, 25]. Groups 1-19 are
    the train split, 20-25 the test split.
    """
    root = Path(input_root)
    clip_root = root / "frames" if (root / "frames").is_dir() else root
    if not clip_root.is_dir():
        raise AnnotatorError(f"no corpus directory at {root}")
    class_set = None if class_set is None else set(class_set)

    sources = []
    for entry in sorted(clip_root.iterdir()):
        if not entry.is_dir():
            continue
        m = _VIDEO_ID_RE.match(entry.name)
        if m is None:
            raise AnnotatorError(
                f"clip directory {entry.name!r} is not a v_<Class>_gNN_cNN id"
            )
        label = m.group("label")
        group = int(m.group("group"))
        if class_set is not None and label not in class_set:
            raise AnnotatorError(f"{entry.name}: unknown class {label!r}")
        if not 1 <= group <= 25:
            raise AnnotatorError(f"{entry.name}: group {group} outside [1, 25]")
        frame_paths = tuple(sorted(p for p in entry.iterdir() if p.suffix.lower() == ".png"))
        if not frame_paths:
            raise AnnotatorError(f"{entry.name}: no PNG frames in {entry}")
        sources.append(
            ClipSource(
                video_id=entry.name,
                class_label=label,
                group_id=group,
                split="train" if group <= 19 else "test",
                source_file=f"{entry.name}.avi",
                frame_paths=frame_paths,
            )
        )
    if not sources:
        raise AnnotatorError(f"no clip directories under {clip_root}")
    return sources


def center_window(items: Sequence, target: int = CLIP_FRAMES) -> tuple[list, bool]:
    """Centered window of `target` items; short inputs repeat the last item.

    Matches the transform pipeline's temporal policy, so annotation index i
    always describes the frame the pipeline will process at index i. For
    length L >= target the window starts at floor((L - target) / 2).
    """
    n = len(items)
    if n == 0:
        raise AnnotatorError("cannot window an empty frame list")
    if n >= target:
        start = (n - target) // 2
        return list(items[start : start + target]), False
    return list(items) + [items[-1]] * (target - n), True


def load_frames(paths: Sequence[Path]) -> np.ndarray:
    """Decode PNG frames into one (T, H, W, 3) uint8 stack; shapes must agree."""
    frames = []
    for path in paths:
        with Image.open(path) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise AnnotatorError(f"frames disagree on shape: {sorted(shapes)}")
    return np.stack(frames)


def map_bbox(
    bbox: Sequence[float], width: int, height: int
) -> tuple[int, int, int, int]:
    """Scale a raw-resolution box into integer output-space coordinates.

    Box edges scale linearly by OUTPUT_SIZE / source size and round half to
    even. A box whose extent collapses to zero after rounding is widened by
    one pixel so the result always has positive area.
    """
    sx = OUTPUT_SIZE / width
    sy = OUTPUT_SIZE / height
    x0 = min(OUTPUT_SIZE, max(0, round(bbox[0] * sx)))
    y0 = min(OUTPUT_SIZE, max(0, round(bbox[1] * sy)))
    x1 = min(OUTPUT_SIZE, max(0, round(bbox[2] * sx)))
    y1 = min(OUTPUT_SIZE, max(0, round(bbox[3] * sy)))
    return _widen_if_flat(x0, y0, x1, y1)


def _widen_if_flat(x0: int, y0: int, x1: int, y1: int) -> tuple[int, int, int, int]:
    if x1 == x0:
        if x1 < OUTPUT_SIZE:
            x1 += 1
        else:
            x0 -= 1
    if y1 == y0:
        if y1 < OUTPUT_SIZE:
            y1 += 1
        else:
            y0 -= 1
    return (x0, y0, x1, y1)


def map_keypoints(
    keypoints: Sequence[tuple[float, float, float]], width: int, height: int
) -> tuple[tuple[float, float, float], ...]:
    """Scale keypoint positions into output space; scores pass through raw."""
    sx = OUTPUT_SIZE / width
    sy = OUTPUT_SIZE / height
    return tuple((float(x) * sx, float(y) * sy, float(c)) for x, y, c in keypoints)


def annotate_clip(
    frames: Sequence[np.ndarray], backend: PoseBackend, video_id: str = "clip"
) -> ClipAnnotation:
    """Run one clip through a backend and keep the primary subject per frame.

    Each frame yields the selected candidate mapped into output space, or
    null when nobody clears the confidence bar. A frame whose inference
    failed (backend reports None) is also null and logged as a warning.
    The detection rate is the exact non-null fraction.
    """
    stack = np.asarray(frames)
    if stack.ndim != 4 or stack.shape[-1] != 3 or stack.dtype != np.uint8:
        raise AnnotatorError(
            f"{video_id}: expected (T, H, W, 3) uint8 frames, got "
            f"{stack.shape} {stack.dtype}"
        )
    if stack.shape[0] == 0:
        raise AnnotatorError(f"{video_id}: empty clip")
    per_frame = backend.detect(stack)
    if len(per_frame) != stack.shape[0]:
        raise BackendError(
            f"{video_id}: backend returned {len(per_frame)} frame results "
            f"for {stack.shape[0]} frames"
        )

    height, width = stack.shape[1:3]
    entries: list[Optional[FrameAnnotation]] = []
    raw_bboxes: list[Optional[tuple[float, float, float, float]]] = []
    failed = 0
    for idx, candidates in enumerate(per_frame):
        if candidates is None:
            failed += 1
            logger.warning("%s: frame %d: inference failed, annotation is null", video_id, idx)
            entries.append(None)
            raw_bboxes.append(None)
            continue
        primary = select_primary(candidates)
        if primary is None:
            entries.append(None)
            raw_bboxes.append(None)
            continue
        entries.append(
            FrameAnnotation(
                bbox=map_bbox(primary.bbox, width, height),
                confidence=float(primary.confidence),
                keypoints=map_keypoints(primary.keypoints, width, height),
            )
        )
        raw_bboxes.append(tuple(float(v) for v in primary.bbox))

    detected = sum(1 for e in entries if e is not None)
    return ClipAnnotation(
        video_id=video_id,
        entries=tuple(entries),
        raw_bboxes=tuple(raw_bboxes),
        detection_rate=Fraction(detected, len(entries)),
        source_width=int(width),
        source_height=int(height),
        failed_frames=failed,
    )


def roi_bbox_mean(
    entries: Sequence[Optional[FrameAnnotation]],
) -> tuple[int, int, int, int]:
    """Mean annotated box (rounded), or the full output frame when all-null."""
    boxes = [e.bbox for e in entries if e is not None]
    if not boxes:
        return (0, 0, OUTPUT_SIZE, OUTPUT_SIZE)
    means = [sum(b[i] for b in boxes) / len(boxes) for i in range(4)]
    x0, y0, x1, y1 = (round(v) for v in means)
    return _widen_if_flat(x0, y0, x1, y1)


def _entry_json(entry: Optional[FrameAnnotation]):
    if entry is None:
        return None
    return {
        "bbox": list(entry.bbox),
        "confidence": entry.confidence,
        "keypoints": [list(kp) for kp in entry.keypoints],
    }


def build_record(source: ClipSource, annotation: ClipAnnotation, fps: float) -> dict:
    """Assemble one clip's annotation record in canonical field order."""
    return {
        "video_id": source.video_id,
        "source_file": source.source_file,
        "class": source.class_label,
        "split": source.split,
        "source_fps": float(fps),
        "total_frames": len(source.frame_paths),
        "clip_frames": len(annotation.entries),
        "detection_rate": round(float(annotation.detection_rate), 4),
        "roi_bbox_mean": list(roi_bbox_mean(annotation.entries)),
        "annotations": [_entry_json(e) for e in annotation.entries],
        "raw_detections": {
            "width": annotation.source_width,
            "height": annotation.source_height,
            "bboxes": [
                None if b is None else list(b) for b in annotation.raw_bboxes
            ],
        },
    }


def pose_document(annotation: ClipAnnotation) -> dict:
    """Per-clip keypoint document for the Estimated_Poses directory."""
    return {
        "video_id": annotation.video_id,
        "keypoint_count": KEYPOINT_COUNT,
        "coordinate_space": f"{OUTPUT_SIZE}x{OUTPUT_SIZE}",
        "frames": [
            None if e is None else {"keypoints": [list(kp) for kp in e.keypoints]}
            for e in annotation.entries
        ],
    }


def to_json_bytes(obj) -> bytes:
    """Canonical document bytes: 2-space indent, UTF-8, trailing newline."""
    return (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a same-directory temp file and rename, so readers never see
    a partial document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = None
    try:
        with tempfile.NamedTemporaryFile(
            dir=path.parent, prefix=f".{path.name}.", delete=False
        ) as fh:
            tmp = Path(fh.name)
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if tmp is not None:
            tmp.unlink(missing_ok=True)
        raise


@dataclass(frozen=True)
class CorpusSummary:
    """Counts from one annotation run."""

    clips: int
    frames: int
    detected_frames: int
    failed_frames: int
    padded_clips: int
    out_path: Path
    poses_dir: Path


def annotate_corpus(
    input_root: Path,
    out_path: Path,
    backend: PoseBackend,
    poses_dir: Optional[Path] = None,
    fps: float = DEFAULT_FPS,
    class_set: Optional[Iterable[str]] = CLASS_LABELS,
) -> CorpusSummary:
    """Annotate every clip under a corpus root.

    Per clip: take the centered 32-frame window (short clips repeat their
    last frame), run the backend once over the whole window, and write the
    clip's keypoint document atomically. The combined annotations.json is
    written last, also atomically, so its presence marks a complete run.
    Clips are independent; records land sorted by video id.
    """
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    out_path = Path(out_path)
    poses_root = Path(poses_dir) if poses_dir is not None else out_path.parent / POSES_DIR_NAME

    sources = discover_clips(input_root, class_set=class_set)
    records = []
    detected = failed = padded_clips = frames_total = 0
    for source in sources:
        window, padded = center_window(source.frame_paths)
        annotation = annotate_clip(load_frames(window), backend, video_id=source.video_id)
        records.append(build_record(source, annotation, fps))
        atomic_write_bytes(
            poses_root / f"{source.video_id}.json",
            to_json_bytes(pose_document(annotation)),
        )
        frames_total += len(annotation.entries)
        detected += sum(1 for e in annotation.entries if e is not None)
        failed += annotation.failed_frames
        padded_clips += int(padded)
        logger.info(
            "%s: %d/%d frames annotated (rate %.4f)",
            source.video_id,
            sum(1 for e in annotation.entries if e is not None),
            len(annotation.entries),
            float(annotation.detection_rate),
        )

    records.sort(key=lambda r: r["video_id"])
    atomic_write_bytes(out_path, to_json_bytes(records))
    return CorpusSummary(
        clips=len(sources),
        frames=frames_total,
        detected_frames=detected,
        failed_frames=failed,
        padded_clips=padded_clips,
        out_path=out_path,
        poses_dir=poses_root,
    )
