"""Input validation helpers."""

import numpy as np
import pytest

from privtier import ValidationError
from privtier.validation import (
    check_bbox,
    check_fraction,
    check_frame,
    check_positive_int,
    check_same_shape,
)


class TestCheckFrame:
    def test_accepts_uint8_hwc(self):
        frame = np.zeros((4, 6, 3), dtype=np.uint8)
        check_frame(frame)

    @pytest.mark.parametrize(
        "bad",
        [
            np.zeros((4, 6, 3), dtype=np.float32),
            np.zeros((4, 6), dtype=np.uint8),
            np.zeros((4, 6, 4), dtype=np.uint8),
            np.zeros((0, 6, 3), dtype=np.uint8),
            [[0, 0, 0]],
        ],
    )
    def test_rejects_wrong_shape_or_dtype(self, bad):
        with pytest.raises(ValidationError):
            check_frame(bad)

    def test_error_names_argument(self):
        with pytest.raises(ValidationError, match="reference"):
            check_frame(np.zeros((2, 2), dtype=np.uint8), name="reference")


class TestCheckBbox:
    def test_accepts_half_open_box(self):
        assert check_bbox((1, 2, 5, 9), 10, 10) == (1, 2, 5, 9)

    @pytest.mark.parametrize(
        "bad",
        [
            (5, 2, 5, 9),  # zero width
            (1, 9, 5, 9),  # zero height
            (6, 2, 5, 9),  # inverted
            (-1, 2, 5, 9),  # negative
            (1, 2, 11, 9),  # past right edge
            (1, 2, 5, 11),  # past bottom edge
            (1, 2, 5),  # wrong arity
        ],
    )
    def test_rejects_degenerate_boxes(self, bad):
        with pytest.raises(ValidationError):
            check_bbox(bad, 10, 10)

    def test_full_frame_box_allowed(self):
        assert check_bbox((0, 0, 10, 10), 10, 10) == (0, 0, 10, 10)


class TestCheckSameShape:
    def test_accepts_matching(self):
        a = np.zeros((3, 3, 3), dtype=np.uint8)
        check_same_shape(a, a.copy())

    def test_rejects_mismatch(self):
        a = np.zeros((3, 3, 3), dtype=np.uint8)
        b = np.zeros((3, 4, 3), dtype=np.uint8)
        with pytest.raises(ValidationError):
            check_same_shape(a, b)


class TestScalars:
    def test_fraction_bounds(self):
        assert check_fraction(0.0, "rate") == 0.0
        assert check_fraction(1.0, "rate") == 1.0
        with pytest.raises(ValidationError):
            check_fraction(1.0001, "rate")
        with pytest.raises(ValidationError):
            check_fraction(-0.0001, "rate")

    def test_positive_int(self):
        assert check_positive_int(3, "count") == 3
        with pytest.raises(ValidationError):
            check_positive_int(0, "count")
        with pytest.raises(ValidationError):
            check_positive_int(2.5, "count")
