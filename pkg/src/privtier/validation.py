"""Input validation helpers shared across the pipeline and metric modules."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input document, record, or array violates the schema."""


def check_frame(frame: np.ndarray, name: str = "frame") -> np.ndarray:
    """Validate an 8-bit RGB frame array of shape (H, W, 3)."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValidationError(f"{name}: expected shape (H, W, 3), got {frame.shape}")
    if frame.dtype != np.uint8:
        raise ValidationError(f"{name}: expected dtype uint8, got {frame.dtype}")
    if frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ValidationError(f"{name}: zero-sized frame {frame.shape}")
    return frame


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"frames differ in shape: {a.shape} vs {b.shape}")


def check_bbox(bbox, width: int, height: int, name: str = "bbox") -> tuple[int, int, int, int]:
    """Validate a [x_min, y_min, x_max, y_max] box against frame bounds.

    Bounds are half-open: pixels with x in [x_min, x_max) and y in
    [y_min, y_max) are inside the box.
    """
    if len(bbox) != 4:
        raise ValidationError(f"{name}: expected 4 values, got {len(bbox)}")
    x0, y0, x1, y1 = bbox
    if not (type(x0) is int and type(y0) is int and type(x1) is int and type(y1) is int):
        x0, y0, x1, y1 = (int(v) for v in bbox)
        if (x0, y0, x1, y1) != tuple(float(v) for v in bbox):
            raise ValidationError(f"{name}: coordinates must be integers, got {list(bbox)}")
    if not (0 <= x0 < x1 <= width):
        raise ValidationError(f"{name}: x range [{x0}, {x1}) outside frame width {width}")
    if not (0 <= y0 < y1 <= height):
        raise ValidationError(f"{name}: y range [{y0}, {y1}) outside frame height {height}")
    return x0, y0, x1, y1


def check_fraction(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name}: expected a fraction in [0, 1], got {value}")
    return value


def check_positive_int(value, name: str) -> int:
    if int(value) != value or int(value) < 1:
        raise ValidationError(f"{name}: expected a positive integer, got {value!r}")
    return int(value)
