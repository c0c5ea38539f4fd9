"""annotator: pose-estimation adapter for frame corpora.

Runs a person/pose detection backend over per-clip frame directories,
keeps the primary subject per frame (largest confident box), and emits the
annotation document and per-clip keypoint files that the transform
pipeline consumes.
"""

__version__ = "0.1.0"

from .adapter import (
    CLASS_LABELS,
    CLIP_FRAMES,
    DEFAULT_FPS,
    OUTPUT_SIZE,
    POSES_DIR_NAME,
    ClipAnnotation,
    ClipSource,
    CorpusSummary,
    FrameAnnotation,
    annotate_clip,
    annotate_corpus,
    atomic_write_bytes,
    build_record,
    center_window,
    discover_clips,
    load_frames,
    map_bbox,
    map_keypoints,
    pose_document,
    roi_bbox_mean,
    to_json_bytes,
)
from .backends import (
    BACKEND_NAMES,
    PoseBackend,
    SyntheticBackend,
    UltralyticsPoseBackend,
    create_backend,
)
from .errors import AnnotatorError, BackendError, WeightHashError
from .selection import (
    KEYPOINT_COUNT,
    MIN_CONFIDENCE,
    DetectionCandidate,
    select_primary,
)
from .weights import sha256_file, verify_weights

__all__ = [
    "AnnotatorError",
    "BACKEND_NAMES",
    "BackendError",
    "CLASS_LABELS",
    "CLIP_FRAMES",
    "ClipAnnotation",
    "ClipSource",
    "CorpusSummary",
    "DEFAULT_FPS",
    "DetectionCandidate",
    "FrameAnnotation",
    "KEYPOINT_COUNT",
    "MIN_CONFIDENCE",
    "OUTPUT_SIZE",
    "POSES_DIR_NAME",
    "PoseBackend",
    "SyntheticBackend",
    "UltralyticsPoseBackend",
    "WeightHashError",
    "annotate_clip",
    "annotate_corpus",
    "atomic_write_bytes",
    "build_record",
    "center_window",
    "create_backend",
    "discover_clips",
    "load_frames",
    "map_bbox",
    "map_keypoints",
    "pose_document",
    "roi_bbox_mean",
    "select_primary",
    "sha256_file",
    "to_json_bytes",
    "verify_weights",
]
