"""Detection candidates and the primary-subject selection rule.

A frame may contain several detected persons; downstream consumers want at
most one. The rule: drop candidates below the confidence threshold first,
then keep the largest bounding box. Filtering precedes the area comparison
so a low-confidence giant box cannot shadow a confident person.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

KEYPOINT_COUNT = 17
MIN_CONFIDENCE = 0.5


@dataclass(frozen=True)
class DetectionCandidate:
    """One detected person: bounding box, score, and 17 (x, y, c) keypoints.

    Coordinates are in the detector's native pixel space. ``bbox`` is
    (x_min, y_min, x_max, y_max) with positive extent on both axes.
    """

    bbox: tuple[float, float, float, float]
    confidence: float
    keypoints: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.bbox) != 4 or not all(math.isfinite(v) for v in self.bbox):
            raise ValueError(f"bbox must be 4 finite numbers, got {self.bbox!r}")
        x0, y0, x1, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"bbox {self.bbox!r} has non-positive extent")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")
        if len(self.keypoints) != KEYPOINT_COUNT:
            raise ValueError(
                f"expected {KEYPOINT_COUNT} keypoints, got {len(self.keypoints)}"
            )
        for i, kp in enumerate(self.keypoints):
            if len(kp) != 3:
                raise ValueError(f"keypoints[{i}] must be (x, y, c), got {kp!r}")
            if not 0.0 <= kp[2] <= 1.0:
                raise ValueError(f"keypoints[{i}].c {kp[2]!r} outside [0, 1]")

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)


def select_primary(
    candidates: Sequence[DetectionCandidate],
) -> Optional[DetectionCandidate]:
    """Pick the primary subject from one frame's candidates, or None.

    Candidates with confidence below 0.5 are discarded first. Among the
    survivors the largest bbox area wins; ties fall to the higher
    confidence, then to the earlier list position. The rule is a total
    order, so the result is deterministic for any input list.
    """
    best = None
    for cand in candidates:
        if cand.confidence < MIN_CONFIDENCE:
            continue
        if best is None or (cand.area, cand.confidence) > (best.area, best.confidence):
            best = cand
    return best
