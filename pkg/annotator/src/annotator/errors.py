"""Exception hierarchy for the annotation adapter."""

from __future__ import annotations


class AnnotatorError(Exception):
    """Base class for adapter failures (corpus layout, document assembly)."""


class WeightHashError(AnnotatorError):
    """Model weight file digest does not match the pinned SHA-256."""


class BackendError(AnnotatorError):
    """Pose backend unavailable or structurally broken (not a per-frame miss)."""
