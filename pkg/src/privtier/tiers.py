"""Estimator-style wrappers over the frame transforms.

These follow the scikit-learn transformer protocol (``fit`` validates
parameters and returns self, ``transform`` is stateless, ``get_params`` and
``set_params`` round-trip) so tier generation can sit inside an
``sklearn.pipeline.Pipeline`` next to downstream feature steps.

Samples are ``(ClipRecord, frames)`` pairs where ``frames`` is a sequence of
uint8 RGB arrays. Preprocessing keeps that shape; tier generation maps each
pair to a dict of tier name -> (frames, H, W, 3) array.
"""

from __future__ import annotations

from typing import Optional, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import CLIP_FRAMES, OUTPUT_SIZE, ClipRecord
from .permute import KeyMaterial
from .transforms import (
    TierSpec,
    center_window,
    default_tier_set,
    generate_tier_set,
    resize_frame,
    tier_from_name,
)
from .validation import ValidationError


def _check_pairs(X) -> list:
    pairs = list(X)
    for i, pair in enumerate(pairs):
        if not (isinstance(pair, tuple) and len(pair) == 2 and isinstance(pair[0], ClipRecord)):
            raise ValidationError(
                f"sample {i}: expected a (ClipRecord, frames) pair, got {type(pair).__name__}"
            )
    return pairs


class ClipPreprocessor(TransformerMixin, BaseEstimator):
    """Center-window each clip to a fixed frame count and resize every frame."""

    def __init__(self, target: int = CLIP_FRAMES, size: int = OUTPUT_SIZE):
        self.target = target
        self.size = size

    def fit(self, X, y=None):
        if not (isinstance(self.target, int) and self.target >= 1):
            raise ValidationError(f"target must be a positive int, got {self.target!r}")
        if not (isinstance(self.size, int) and self.size >= 1):
            raise ValidationError(f"size must be a positive int, got {self.size!r}")
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> list[tuple[ClipRecord, list]]:
        check_is_fitted(self)
        out = []
        for clip, frames in _check_pairs(X):
            windowed, _ = center_window(frames, self.target)
            out.append((clip, [resize_frame(f, self.size) for f in windowed]))
        return out


class TierTransformer(TransformerMixin, BaseEstimator):
    """Generate the configured privacy tiers for each preprocessed clip.

    Parameters
    ----------
    tiers : "all" or sequence of canonical tier names
        Which variants to produce, e.g. ["Original", "Tier3_AES_B8"].
    key_hex : str or None
        32-hex-char AES key; required whenever a scramble tier is selected.
    generator : "aes_ctr" or "csprng_fallback"
        Keystream generator feeding the block permutations.
    """

    def __init__(
        self,
        tiers: "str | Sequence[str]" = "all",
        key_hex: Optional[str] = None,
        generator: str = "aes_ctr",
    ):
        self.tiers = tiers
        self.key_hex = key_hex
        self.generator = generator

    def _resolve_specs(self) -> list[TierSpec]:
        if self.tiers == "all":
            return default_tier_set()
        return [tier_from_name(name) for name in self.tiers]

    def fit(self, X, y=None):
        specs = self._resolve_specs()
        needs_key = any(s.kind == "scramble" for s in specs)
        if needs_key and self.key_hex is None:
            raise ValidationError("scramble tiers selected but key_hex is not set")
        self.tier_specs_ = specs
        self.key_ = KeyMaterial.from_hex(self.key_hex) if self.key_hex is not None else None
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> list[dict]:
        check_is_fitted(self)
        out = []
        for clip, frames in _check_pairs(X):
            out.append(
                generate_tier_set(
                    clip, frames, self.key_, tiers=self.tier_specs_, generator=self.generator
                )
            )
        return out
