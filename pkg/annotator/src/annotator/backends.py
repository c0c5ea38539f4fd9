"""Pose-estimation backends behind a single batch-inference protocol.

A backend receives one clip's frames at a time and returns per-frame
candidate lists. ``None`` in place of a list marks a frame whose inference
failed; an empty list means inference ran and found nobody. Both end up as
null annotations, but only failures are warned about.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Protocol

import numpy as np
from scipy import ndimage

from .errors import BackendError
from .selection import KEYPOINT_COUNT, DetectionCandidate

logger = logging.getLogger(__name__)

FrameCandidates = Optional[list[DetectionCandidate]]

# Rough humanoid layout as bbox-relative (fx, fy) positions, nose to ankles.
_KEYPOINT_GRID = (
    (0.50, 0.08), (0.42, 0.06), (0.58, 0.06), (0.35, 0.08), (0.65, 0.08),
    (0.30, 0.22), (0.70, 0.22), (0.22, 0.38), (0.78, 0.38), (0.18, 0.52),
    (0.82, 0.52), (0.38, 0.55), (0.62, 0.55), (0.36, 0.75), (0.64, 0.75),
    (0.35, 0.95), (0.65, 0.95),
)
assert len(_KEYPOINT_GRID) == KEYPOINT_COUNT


class PoseBackend(Protocol):
    def detect(self, frames: np.ndarray) -> list[FrameCandidates]:
        """Candidates per frame for a (T, H, W, 3) uint8 clip batch."""
        ...


class SyntheticBackend:
    """Deterministic pixel-statistics detector; no model weights involved.

    Each connected region brighter than the frame's own luminance
    distribution (mean + threshold_sigma * std) becomes a candidate. The
    confidence is the region's fill ratio inside its bounding box, so a
    solid subject scores high and sparse speckle scores low. Keypoints sit
    on a fixed humanoid grid inside the box with the local luminance as
    their score. This is not a person detector; it exists so the full
    annotation path can run, and be tested, without a model file.
    """

    def __init__(self, threshold_sigma: float = 0.75, min_area: int = 64):
        self.threshold_sigma = threshold_sigma
        self.min_area = min_area

    def detect(self, frames: np.ndarray) -> list[FrameCandidates]:
        frames = np.asarray(frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise BackendError(f"expected (T, H, W, 3) frames, got {frames.shape}")
        luminance = frames.astype(np.float64).mean(axis=3)
        return [self._detect_frame(lum) for lum in luminance]

    def _detect_frame(self, lum: np.ndarray) -> list[DetectionCandidate]:
        mean, std = lum.mean(), lum.std()
        if std == 0.0:
            return []
        mask = lum > mean + self.threshold_sigma * std
        labels, count = ndimage.label(mask)
        candidates = []
        for idx, slices in enumerate(ndimage.find_objects(labels, count)):
            if slices is None:
                continue
            ys, xs = slices
            pixels = int(np.count_nonzero(labels[ys, xs] == idx + 1))
            if pixels < self.min_area:
                continue
            bbox = (float(xs.start), float(ys.start), float(xs.stop), float(ys.stop))
            fill = pixels / ((bbox[2] - bbox[0]) * (bbox[3] - bbox[1]))
            candidates.append(
                DetectionCandidate(
                    bbox=bbox,
                    confidence=min(1.0, float(fill)),
                    keypoints=self._keypoints(lum, bbox),
                )
            )
        return candidates

    @staticmethod
    def _keypoints(lum: np.ndarray, bbox: tuple[float, float, float, float]):
        h, w = lum.shape
        x0, y0, x1, y1 = bbox
        points = []
        for fx, fy in _KEYPOINT_GRID:
            x = x0 + fx * (x1 - x0)
            y = y0 + fy * (y1 - y0)
            xi = min(w - 1, max(0, round(x)))
            yi = min(h - 1, max(0, round(y)))
            points.append((float(x), float(y), float(lum[yi, xi] / 255.0)))
        return tuple(points)


class UltralyticsPoseBackend:
    """YOLO pose model wrapper (CPU inference, batch per clip).

    Construction requires the optional ``ultralytics`` dependency and a
    local weight file; callers are expected to have verified the file's
    digest first. Frames arrive as RGB and are handed to the model as BGR.
    """

    def __init__(self, weights_path: Path):
        try:
            from ultralytics import YOLO
        except ImportError as exc:
            raise BackendError(
                "ultralytics is not installed; install the 'yolo' extra "
                "or choose the synthetic backend"
            ) from exc
        self._model = YOLO(str(weights_path))

    def detect(self, frames: np.ndarray) -> list[FrameCandidates]:
        batch = [np.ascontiguousarray(frame[:, :, ::-1]) for frame in np.asarray(frames)]
        results = self._model.predict(batch, verbose=False, device="cpu")
        out: list[FrameCandidates] = []
        for idx, result in enumerate(results):
            try:
                out.append(self._parse_result(result))
            except BackendError:
                raise
            except Exception:
                logger.warning("frame %d: could not parse model output", idx)
                out.append(None)
        return out

    @staticmethod
    def _parse_result(result) -> list[DetectionCandidate]:
        if result.boxes is None or result.keypoints is None or len(result.boxes) == 0:
            return []
        boxes = np.asarray(result.boxes.xyxy.cpu())
        scores = np.asarray(result.boxes.conf.cpu())
        keypoints = np.asarray(result.keypoints.data.cpu())
        if keypoints.shape[1] != KEYPOINT_COUNT:
            raise BackendError(
                f"model emits {keypoints.shape[1]} keypoints per person, "
                f"need {KEYPOINT_COUNT}"
            )
        candidates = []
        for box, score, kps in zip(boxes, scores, keypoints):
            x0, y0, x1, y1 = (float(v) for v in box)
            if x1 <= x0 or y1 <= y0:
                continue
            candidates.append(
                DetectionCandidate(
                    bbox=(x0, y0, x1, y1),
                    confidence=min(1.0, max(0.0, float(score))),
                    keypoints=tuple(
                        (float(x), float(y), min(1.0, max(0.0, float(c))))
                        for x, y, c in kps
                    ),
                )
            )
        return candidates


def create_backend(name: str, weights_path: Path) -> PoseBackend:
    """Instantiate a backend by name; the synthetic one ignores the weights."""
    if name == "synthetic":
        return SyntheticBackend()
    if name == "ultralytics":
        return UltralyticsPoseBackend(weights_path)
    raise ValueError(f"unknown backend {name!r}")


BACKEND_NAMES = ("synthetic", "ultralytics")
