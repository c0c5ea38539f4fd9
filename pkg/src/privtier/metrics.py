"""Privacy and utility metrics for tiered exports.

ROI quality metrics (SSIM, PSNR) operate on the bbox crop of a frame pair.
Accuracy metrics run on exact rational arithmetic and convert to 1-decimal
percentages only at the reporting boundary, with half-to-even rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .validation import ValidationError, check_bbox, check_frame, check_same_shape

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2
CONFIG_LABELS = ("A", "B", "C")


class MetricUndefinedError(ValueError):
    """The metric has no value for this input (e.g. ROI below window size)."""


def percentage(value: Fraction, decimals: int = 1) -> float:
    """Exact rational to percentage, rounded half to even at `decimals`."""
    return float(round(Fraction(value) * 100, decimals))


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    half = SSIM_WINDOW // 2
    # One batched filter call over the five moment planes; sigma 0 on the
    # stacking axis leaves it untouched, so each plane is blurred exactly as
    # if filtered on its own.
    planes = np.stack([x, y, x * x, y * y, x * y])
    blurred = ndimage.gaussian_filter(
        planes, (0.0, SSIM_SIGMA, SSIM_SIGMA), mode="reflect", radius=(0, half, half)
    )
    mu_x, mu_y, exx, eyy, exy = blurred
    xx = exx - mu_x * mu_x
    yy = eyy - mu_y * mu_y
    xy = exy - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (xx + yy + SSIM_C2)
    ssim_map = (num / den)[half:-half, half:-half]
    return float(ssim_map.mean())


def roi_ssim(original: np.ndarray, transformed: np.ndarray, bbox: Sequence[int]) -> float:
    """Mean SSIM over the bbox crop, per channel then channel-averaged.

    11x11 Gaussian window (sigma 1.5), C1 = (0.01*255)^2, C2 = (0.03*255)^2,
    only windows fully inside the crop. The crop must be at least the window
    size on both axes, else the metric is undefined.
    """
    original = check_frame(original, name="original")
    transformed = check_frame(transformed, name="transformed")
    check_same_shape(original, transformed)
    x0, y0, x1, y1 = check_bbox(bbox, original.shape[1], original.shape[0])
    if x1 - x0 < SSIM_WINDOW or y1 - y0 < SSIM_WINDOW:
        raise MetricUndefinedError(
            f"bbox {bbox} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    a = original[y0:y1, x0:x1].astype(np.float64)
    b = transformed[y0:y1, x0:x1].astype(np.float64)
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c]) for c in range(3)]))


def roi_psnr(original: np.ndarray, transformed: np.ndarray, bbox: Sequence[int]) -> float:
    """PSNR in dB over all channels of the bbox crop; identical crops give +inf."""
    original = check_frame(original, name="original")
    transformed = check_frame(transformed, name="transformed")
    check_same_shape(original, transformed)
    x0, y0, x1, y1 = check_bbox(bbox, original.shape[1], original.shape[0])
    a = original[y0:y1, x0:x1].astype(np.float64)
    b = transformed[y0:y1, x0:x1].astype(np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def top1_accuracy(
    predictions: Mapping[str, str],
    labels: Mapping[str, str],
    class_set: Sequence[str],
) -> tuple[Fraction, dict[str, Optional[Fraction]]]:
    """Exact overall and per-class Top-1 accuracy.

    Accuracy is measured over `labels`; videos without a prediction count as
    incorrect (and are logged). Classes with no ground-truth members map to
    None. Unknown video ids or classes in `predictions` are rejected.
    """
    classes = list(class_set)
    unknown_ids = sorted(set(predictions) - set(labels))
    if unknown_ids:
        raise ValidationError(f"predictions for unknown video ids: {unknown_ids}")
    bad_classes = sorted({c for c in predictions.values() if c not in classes})
    if bad_classes:
        raise ValidationError(f"predicted classes outside the class set: {bad_classes}")
    bad_labels = sorted({c for c in labels.values() if c not in classes})
    if bad_labels:
        raise ValidationError(f"ground-truth classes outside the class set: {bad_labels}")
    if not labels:
        raise ValidationError("labels must not be empty")

    missing = sorted(set(labels) - set(predictions))
    if missing:
        logger.warning("%d videos missing predictions (counted incorrect)", len(missing))

    totals = {c: 0 for c in classes}
    correct = {c: 0 for c in classes}
    for video_id, truth in labels.items():
        totals[truth] += 1
        if predictions.get(video_id) == truth:
            correct[truth] += 1
    per_class = {
        c: (Fraction(correct[c], totals[c]) if totals[c] else None) for c in classes
    }
    overall = Fraction(sum(correct.values()), len(labels))
    return overall, per_class


def accuracy_drop(acc_original: float, acc_tier: float) -> float:
    """Drop in percentage points relative to the untransformed tier."""
    for name, value in (("acc_original", acc_original), ("acc_tier", acc_tier)):
        if not 0 <= value <= 100:
            raise ValidationError(f"{name} must be a percentage in [0, 100], got {value}")
    return acc_original - acc_tier


def pu_score(acc_tier: float, acc_original: float, ssim_tier: float) -> float:
    """Privacy-utility scalar: (acc_tier / acc_original) * (1 - ssim_tier)."""
    for name, value in (("acc_original", acc_original), ("acc_tier", acc_tier)):
        if not 0 <= value <= 100:
            raise ValidationError(f"{name} must be a percentage in [0, 100], got {value}")
    if acc_original == 0:
        raise ValidationError("acc_original must be positive")
    if not -1 <= ssim_tier <= 1:
        raise ValidationError(f"ssim_tier must lie in [-1, 1], got {ssim_tier}")
    return (acc_tier / acc_original) * (1.0 - ssim_tier)


def face_fail_rate(
    orig_detected: Sequence[bool], post_detected: Sequence[bool]
) -> Optional[Fraction]:
    """Fraction of originally detected faces no longer detected afterwards.

    Defined over the entries where orig_detected is true; None when nothing
    was originally detected.
    """
    if len(orig_detected) != len(post_detected):
        raise ValidationError(
            f"detection lists differ in length: {len(orig_detected)} vs {len(post_detected)}"
        )
    denom = sum(1 for o in orig_detected if o)
    if denom == 0:
        return None
    lost = sum(1 for o, p in zip(orig_detected, post_detected) if o and not p)
    return Fraction(lost, denom)


@dataclass(frozen=True)
class QualitySummary:
    """Corpus-level aggregate of per-frame ROI quality metrics for one tier."""

    tier_name: str
    mean_ssim: Optional[float]
    mean_psnr_db: Optional[float]  # mean of finite values only
    frame_count: int  # frames actually measured
    skipped_null_roi: int
    psnr_inf_count: int
    skipped_small_roi: int = 0  # bbox below the SSIM window size

    @classmethod
    def from_frames(
        cls,
        tier_name: str,
        ssim_values: Sequence[float],
        psnr_values: Sequence[float],
        skipped_null_roi: int = 0,
        skipped_small_roi: int = 0,
    ) -> "QualitySummary":
        if len(ssim_values) != len(psnr_values):
            raise ValidationError("ssim and psnr value lists must align")
        finite = [p for p in psnr_values if math.isfinite(p)]
        return cls(
            tier_name=tier_name,
            mean_ssim=float(np.mean(ssim_values)) if ssim_values else None,
            mean_psnr_db=float(np.mean(finite)) if finite else None,
            frame_count=len(ssim_values),
            skipped_null_roi=skipped_null_roi,
            psnr_inf_count=len(psnr_values) - len(finite),
            skipped_small_roi=skipped_small_roi,
        )


@dataclass(frozen=True)
class MetricsReport:
    """Everything reported for one tier of one evaluation run."""

    tier_name: str
    top1: Fraction
    per_class: dict[str, Optional[Fraction]]
    acc_drop_pp: float
    roi_ssim: Optional[float]
    roi_psnr_db: Optional[float]
    face_fail_rate: Optional[Fraction]
    pu_score: Optional[float]
    frame_count: int
    config_label: str
    missing_predictions: int = 0

    def __post_init__(self):
        if not 0 <= self.top1 <= 1:
            raise ValidationError(f"top1 must lie in [0, 1], got {self.top1}")
        for cls_name, acc in self.per_class.items():
            if acc is not None and not 0 <= acc <= 1:
                raise ValidationError(f"per_class[{cls_name!r}] out of [0, 1]: {acc}")
        if self.roi_ssim is not None and not -1 <= self.roi_ssim <= 1:
            raise ValidationError(f"roi_ssim out of [-1, 1]: {self.roi_ssim}")
        if (self.pu_score is None) != (self.tier_name == "Original"):
            raise ValidationError("pu_score must be null exactly for the Original tier")
        if self.config_label not in CONFIG_LABELS:
            raise ValidationError(f"config_label must be one of {CONFIG_LABELS}")
        if self.frame_count < 0:
            raise ValidationError("frame_count must be non-negative")
        if self.missing_predictions < 0:
            raise ValidationError("missing_predictions must be non-negative")

    @property
    def top1_pct(self) -> float:
        return percentage(self.top1)
