"""privtier: deterministic privacy-tier video pipeline and evaluation toolkit.

Converts annotated frame sequences into graduated privacy variants (Gaussian
blur, Canny edges, keyed AES-CTR block scrambling, background removal) and
scores them with ROI quality and recognition-accuracy metrics.
"""

__version__ = "0.1.0"

from .corpus import (
    CLIP_FRAMES,
    DEFAULT_CLASSES,
    KEYPOINT_COUNT,
    MIN_CONFIDENCE,
    OUTPUT_SIZE,
    ClipRecord,
    ParseError,
    RoiAnnotation,
    SplitAssignment,
    assign_split,
    derive_splits,
    detection_rate,
    group_from_source_file,
    parse_annotations,
    parse_split,
    serialize_annotations,
    serialize_split,
)
from .evalkit import (
    FaceFlags,
    PredictionSet,
    ReportBundle,
    emit_report,
    evaluate,
    load_face_flags,
    load_predictions,
    load_quality_summary,
    plot_tables_from_report,
    serialize_quality_summary,
)
from .manifest import Manifest, VerificationReport, build_manifest, sha256_file, verify_manifest
from .metrics import (
    MetricsReport,
    MetricUndefinedError,
    QualitySummary,
    accuracy_drop,
    face_fail_rate,
    pu_score,
    percentage,
    roi_psnr,
    roi_ssim,
    top1_accuracy,
)
from .permute import (
    BlockPermutation,
    KeyMaterial,
    PermutationFault,
    PermutationSeed,
    aes_ctr_source,
    csprng_fallback_permutation,
    derive_nonce,
    derive_permutation,
    fallback_source,
    keystream,
    permutation_from_stream,
)
from .pipeline import (
    PipelineConfig,
    RunSummary,
    RunVerification,
    recompute_quality,
    run_pipeline,
    verify_run,
)
from .tiers import ClipPreprocessor, TierTransformer
from .transforms import (
    BlockGrid,
    TierSpec,
    apply_nobg,
    block_grid,
    canny_mask,
    center_window,
    default_tier_set,
    generate_tier_set,
    resize_frame,
    scramble_blocks,
    tier1_blur,
    tier2_edge,
    tier3_scramble,
    tier_from_name,
    unscramble_blocks,
)
from .validation import ValidationError

__all__ = [
    "__version__",
    "CLIP_FRAMES",
    "DEFAULT_CLASSES",
    "KEYPOINT_COUNT",
    "MIN_CONFIDENCE",
    "OUTPUT_SIZE",
    "BlockGrid",
    "BlockPermutation",
    "ClipPreprocessor",
    "ClipRecord",
    "FaceFlags",
    "KeyMaterial",
    "Manifest",
    "MetricsReport",
    "MetricUndefinedError",
    "ParseError",
    "PermutationFault",
    "PermutationSeed",
    "PipelineConfig",
    "PredictionSet",
    "QualitySummary",
    "ReportBundle",
    "RoiAnnotation",
    "RunSummary",
    "RunVerification",
    "SplitAssignment",
    "TierSpec",
    "TierTransformer",
    "ValidationError",
    "VerificationReport",
    "accuracy_drop",
    "aes_ctr_source",
    "apply_nobg",
    "assign_split",
    "block_grid",
    "build_manifest",
    "canny_mask",
    "center_window",
    "csprng_fallback_permutation",
    "default_tier_set",
    "derive_nonce",
    "derive_permutation",
    "derive_splits",
    "detection_rate",
    "emit_report",
    "evaluate",
    "face_fail_rate",
    "fallback_source",
    "generate_tier_set",
    "group_from_source_file",
    "keystream",
    "load_face_flags",
    "load_predictions",
    "load_quality_summary",
    "parse_annotations",
    "parse_split",
    "percentage",
    "permutation_from_stream",
    "plot_tables_from_report",
    "pu_score",
    "recompute_quality",
    "resize_frame",
    "roi_psnr",
    "roi_ssim",
    "run_pipeline",
    "scramble_blocks",
    "serialize_annotations",
    "serialize_quality_summary",
    "serialize_split",
    "sha256_file",
    "tier1_blur",
    "tier2_edge",
    "tier3_scramble",
    "tier_from_name",
    "top1_accuracy",
    "unscramble_blocks",
    "verify_manifest",
    "verify_run",
]
