"""Per-frame privacy transforms, temporal windowing, and resizing.

Every function here is pure and byte-deterministic. Conventions that affect
output bytes are fixed in the docstrings (border modes, rounding, grid
alignment) because the exported frame trees are content-addressed.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .corpus import CLIP_FRAMES, OUTPUT_SIZE, ClipRecord, RoiAnnotation
from .permute import BlockPermutation, KeyMaterial, derive_permutation
from .validation import ValidationError, check_frame

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 15.0
DEFAULT_CANNY_LOW = 50.0
DEFAULT_CANNY_HIGH = 150.0
CANONICAL_BLOCK_SIZES = (4, 8, 16)

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


@dataclass(frozen=True)
class TierSpec:
    """Which transform to apply and its parameters.

    Exactly the parameters belonging to ``kind`` may be set; the rest stay
    at their neutral defaults.
    """

    kind: str  # original | blur | edge | scramble
    sigma: Optional[float] = None
    canny_low: Optional[float] = None
    canny_high: Optional[float] = None
    block_size: Optional[int] = None
    nobg: bool = False

    def __post_init__(self):
        allowed = {
            "original": set(),
            "blur": {"sigma"},
            "edge": {"canny_low", "canny_high"},
            "scramble": {"block_size", "nobg"},
        }
        if self.kind not in allowed:
            raise ValidationError(f"unknown tier kind {self.kind!r}")
        for name in ("sigma", "canny_low", "canny_high", "block_size"):
            value = getattr(self, name)
            if value is not None and name not in allowed[self.kind]:
                raise ValidationError(f"{self.kind} tier does not take {name}")
            if value is None and name in allowed[self.kind]:
                raise ValidationError(f"{self.kind} tier requires {name}")
        if self.nobg and self.kind != "scramble":
            raise ValidationError(f"{self.kind} tier does not take nobg")
        if self.kind == "blur" and self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.kind == "edge" and not self.canny_low < self.canny_high:
            raise ValidationError("canny_low must be below canny_high")
        if self.kind == "scramble" and self.block_size < 2:
            raise ValidationError("block_size must be >= 2")

    @classmethod
    def original(cls) -> "TierSpec":
        return cls(kind="original")

    @classmethod
    def blur(cls, sigma: float = DEFAULT_SIGMA) -> "TierSpec":
        return cls(kind="blur", sigma=sigma)

    @classmethod
    def edge(cls, low: float = DEFAULT_CANNY_LOW, high: float = DEFAULT_CANNY_HIGH) -> "TierSpec":
        return cls(kind="edge", canny_low=low, canny_high=high)

    @classmethod
    def scramble(cls, block_size: int, nobg: bool = False) -> "TierSpec":
        return cls(kind="scramble", block_size=block_size, nobg=nobg)

    @property
    def name(self) -> str:
        """Canonical directory name for this tier."""
        if self.kind == "original":
            return "Original"
        if self.kind == "blur":
            return "Tier1_Blur"
        if self.kind == "edge":
            return "Tier2_Edge"
        base = f"Tier3_AES_B{self.block_size}"
        return base + "_NoBG" if self.nobg else base


def default_tier_set(block_sizes: Sequence[int] = CANONICAL_BLOCK_SIZES) -> list[TierSpec]:
    """The nine shipped tiers: Original, Blur, Edge, scrambles, NoBG scrambles."""
    tiers = [TierSpec.original(), TierSpec.blur(), TierSpec.edge()]
    tiers += [TierSpec.scramble(b) for b in block_sizes]
    tiers += [TierSpec.scramble(b, nobg=True) for b in block_sizes]
    return tiers


_SCRAMBLE_NAME_RE = re.compile(r"^Tier3_AES_B(\d+)(_NoBG)?$")


def tier_from_name(name: str) -> TierSpec:
    """Parse a canonical tier directory name back into its spec."""
    if name == "Original":
        return TierSpec.original()
    if name == "Tier1_Blur":
        return TierSpec.blur()
    if name == "Tier2_Edge":
        return TierSpec.edge()
    m = _SCRAMBLE_NAME_RE.match(name)
    if m:
        return TierSpec.scramble(int(m.group(1)), nobg=bool(m.group(2)))
    raise ValidationError(f"unknown tier name {name!r}")


@dataclass(frozen=True)
class BlockGrid:
    """Largest block-aligned grid anchored at the bbox origin."""

    origin: tuple[int, int]  # x, y of the grid's top-left corner
    cols: int
    rows: int
    block_size: int

    @property
    def n(self) -> int:
        return self.cols * self.rows


def block_grid(bbox: Sequence[int], block_size: int) -> Optional[BlockGrid]:
    """Grid of full BxB blocks inside the bbox; None if no block fits.

    Residual right/bottom strips narrower than one block are left out of the
    grid and therefore untransformed.
    """
    x0, y0, x1, y1 = bbox
    cols = (x1 - x0) // block_size
    rows = (y1 - y0) // block_size
    if cols < 1 or rows < 1:
        return None
    return BlockGrid(origin=(x0, y0), cols=cols, rows=rows, block_size=block_size)


def center_window(frames: Sequence[np.ndarray], target: int = CLIP_FRAMES) -> tuple[list[np.ndarray], bool]:
    """Centered window of `target` frames; short clips repeat the last frame.

    Returns (frames, padded). For length L >= target the window starts at
    floor((L - target) / 2).
    """
    n = len(frames)
    if n == 0:
        raise ValidationError("cannot window an empty frame list")
    if n >= target:
        start = (n - target) // 2
        return list(frames[start : start + target]), False
    padded = list(frames) + [frames[-1]] * (target - n)
    return padded, True


@lru_cache(maxsize=32)
def _resize_plan(h: int, w: int, size: int):
    """Gather indices and interpolation weights for one (input, output) shape."""
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    yi0 = np.clip(y0.astype(np.int64), 0, h - 1)
    yi1 = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    xi0 = np.clip(x0.astype(np.int64), 0, w - 1)
    xi1 = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    return yi0, yi1, xi0, xi1, fy, fx


def resize_frame(frame: np.ndarray, size: int = OUTPUT_SIZE) -> np.ndarray:
    """Bilinear resize with half-pixel-center alignment, exact float arithmetic.

    Source coordinate for output index d is (d + 0.5) * (in / out) - 0.5;
    neighbor indices clamp at the borders and results round half to even.
    A size x size input reproduces itself bit-exactly.
    """
    frame = check_frame(frame)
    h, w = frame.shape[:2]
    yi0, yi1, xi0, xi1, fy, fx = _resize_plan(h, w, size)
    src = frame.astype(np.float64)
    row0 = src[yi0]
    row1 = src[yi1]
    top = row0[:, xi0] * (1 - fx) + row0[:, xi1] * fx
    bottom = row1[:, xi0] * (1 - fx) + row1[:, xi1] * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def bt601_luma(frame: np.ndarray) -> np.ndarray:
    """Full-range BT.601 luma as float64: 0.299 R + 0.587 G + 0.114 B."""
    f = frame.astype(np.float64)
    return 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]


def canny_mask(gray: np.ndarray, low: float, high: float) -> np.ndarray:
    """Boolean Canny edge map over a float grayscale image.

    Fixed convention: 3x3 Sobel by correlation with symmetric-reflect
    borders, L1 gradient magnitude, 4-sector non-maximum suppression
    (strictly > the forward neighbor, >= the backward neighbor, so plateau
    ties keep exactly one pixel; outermost ring suppressed), strong >= high,
    candidate >= low, hysteresis by 8-connected components.
    """
    if not low < high:
        raise ValidationError(f"canny thresholds must satisfy low < high, got {low}, {high}")
    gx = ndimage.correlate(gray, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(gray, _SOBEL_Y, mode="reflect")
    mag = np.abs(gx) + np.abs(gy)

    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    mp = np.pad(mag, 1, mode="constant")
    east, west = mp[1:-1, 2:], mp[1:-1, :-2]
    north, south = mp[:-2, 1:-1], mp[2:, 1:-1]
    ne, sw = mp[:-2, 2:], mp[2:, :-2]
    nw, se = mp[:-2, :-2], mp[2:, 2:]
    sector = np.select(
        [
            (angle < 22.5) | (angle >= 157.5),
            angle < 67.5,
            angle < 112.5,
        ],
        [0, 1, 2],
        default=3,
    )
    # forward neighbor per sector: E, SW, S, SE; backward: W, NE, N, NW
    q = np.choose(sector, [east, sw, south, se])
    r = np.choose(sector, [west, ne, north, nw])
    nms = np.where((mag > q) & (mag >= r), mag, 0.0)
    nms[0, :] = nms[-1, :] = 0.0
    nms[:, 0] = nms[:, -1] = 0.0

    strong = nms >= high
    candidate = nms >= low
    if not strong.any():
        return np.zeros_like(candidate)
    labels, _ = ndimage.label(candidate, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0])


def tier1_blur(frame: np.ndarray, roi: Optional[RoiAnnotation], sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Gaussian-blur the ROI; pixels outside the bbox stay byte-identical.

    The convolution reads source pixels from the whole frame (kernel radius
    ceil(3 sigma), symmetric-reflect at frame edges) but writes only inside
    the bbox. A null ROI passes the frame through unchanged.
    """
    frame = check_frame(frame)
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if roi is None:
        return frame.copy()
    x0, y0, x1, y1 = roi.bbox
    if x1 <= x0 or y1 <= y0:
        logger.warning("degenerate blur bbox %s; frame unchanged", roi.bbox)
        return frame.copy()
    radius = int(np.ceil(3.0 * sigma))
    blurred = ndimage.gaussian_filter(
        frame.astype(np.float64),
        sigma=(sigma, sigma, 0.0),
        mode="reflect",
        radius=(radius, radius, 0),
    )
    out = frame.copy()
    out[y0:y1, x0:x1] = np.clip(np.rint(blurred[y0:y1, x0:x1]), 0, 255).astype(np.uint8)
    return out


def tier2_edge(
    frame: np.ndarray,
    roi: Optional[RoiAnnotation],
    low: float = DEFAULT_CANNY_LOW,
    high: float = DEFAULT_CANNY_HIGH,
) -> np.ndarray:
    """White Canny edges inside the bbox on an all-black frame.

    The edge map is computed over the full frame, then windowed by the bbox.
    A null ROI yields an entirely black frame.
    """
    frame = check_frame(frame)
    out = np.zeros_like(frame)
    if roi is None:
        return out
    edges = canny_mask(bt601_luma(frame), low, high)
    x0, y0, x1, y1 = roi.bbox
    window = np.zeros_like(edges)
    window[y0:y1, x0:x1] = edges[y0:y1, x0:x1]
    out[window] = 255
    return out


def _blocks_view(region: np.ndarray, grid: BlockGrid) -> np.ndarray:
    b = grid.block_size
    return (
        region.reshape(grid.rows, b, grid.cols, b, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.n, b, b, 3)
    )


def _blocks_to_region(blocks: np.ndarray, grid: BlockGrid) -> np.ndarray:
    b = grid.block_size
    return (
        blocks.reshape(grid.rows, grid.cols, b, b, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.rows * b, grid.cols * b, 3)
    )


def scramble_blocks(frame: np.ndarray, grid: BlockGrid, perm: BlockPermutation) -> np.ndarray:
    """Move block i into grid slot mapping[i]; values inside blocks unchanged."""
    if perm.n != grid.n:
        raise ValidationError(f"permutation size {perm.n} != grid size {grid.n}")
    x, y = grid.origin
    b = grid.block_size
    region = frame[y : y + grid.rows * b, x : x + grid.cols * b]
    blocks = _blocks_view(region, grid)
    moved = np.empty_like(blocks)
    moved[perm.mapping] = blocks
    out = frame.copy()
    out[y : y + grid.rows * b, x : x + grid.cols * b] = _blocks_to_region(moved, grid)
    return out


def unscramble_blocks(frame: np.ndarray, grid: BlockGrid, perm: BlockPermutation) -> np.ndarray:
    """Inverse of scramble_blocks for the same grid and permutation."""
    x, y = grid.origin
    b = grid.block_size
    region = frame[y : y + grid.rows * b, x : x + grid.cols * b]
    blocks = _blocks_view(region, grid)
    restored = blocks[perm.mapping]
    out = frame.copy()
    out[y : y + grid.rows * b, x : x + grid.cols * b] = _blocks_to_region(restored, grid)
    return out


def tier3_scramble(
    frame: np.ndarray,
    roi: Optional[RoiAnnotation],
    block_size: int,
    key: KeyMaterial,
    video_id: str,
    frame_index: int,
    generator: str = "aes_ctr",
    perm: Optional[BlockPermutation] = None,
) -> np.ndarray:
    """Keyed block scramble of the ROI grid; everything else byte-identical.

    The permutation is derived per (key, video, frame, block size) unless an
    already-derived one is supplied. A null ROI or a grid without a full
    block passes the frame through.
    """
    frame = check_frame(frame)
    if block_size < 2:
        raise ValidationError(f"block_size must be >= 2, got {block_size}")
    if roi is None:
        return frame.copy()
    grid = block_grid(roi.bbox, block_size)
    if grid is None:
        logger.info("%s frame %d: bbox %s holds no %dx%d block; identity",
                    video_id, frame_index, roi.bbox, block_size, block_size)
        return frame.copy()
    if perm is None:
        perm = derive_permutation(key, video_id, frame_index, block_size, grid.n, generator)
    return scramble_blocks(frame, grid, perm)


def apply_nobg(frame: np.ndarray, roi: Optional[RoiAnnotation]) -> np.ndarray:
    """Zero every pixel outside the ROI mask; null ROI blanks the frame."""
    frame = check_frame(frame)
    if roi is None:
        return np.zeros_like(frame)
    mask = roi.mask(frame.shape[0], frame.shape[1])
    return frame * mask[:, :, None]


def generate_tier_set(
    clip: ClipRecord,
    frames: Sequence[np.ndarray],
    key: KeyMaterial,
    tiers: Optional[Sequence[TierSpec]] = None,
    generator: str = "aes_ctr",
) -> dict[str, np.ndarray]:
    """All tier variants of one windowed, resized clip.

    Frames must align 1:1 with clip.annotations; every tier reuses the same
    per-frame annotation. NoBG tiers are the mask applied on top of the
    matching scramble output, sharing its per-frame permutations.
    """
    if tiers is None:
        tiers = default_tier_set()
    if len(frames) != len(clip.annotations):
        raise ValidationError(
            f"{clip.video_id}: {len(frames)} frames vs {len(clip.annotations)} annotations"
        )
    frames = [check_frame(f, name=f"{clip.video_id}[{i}]") for i, f in enumerate(frames)]

    out: dict[str, np.ndarray] = {}
    scrambled: dict[tuple[int, str], np.ndarray] = {}

    def scramble_stack(block_size: int) -> np.ndarray:
        cache_key = (block_size, generator)
        if cache_key not in scrambled:
            scrambled[cache_key] = np.stack(
                [
                    tier3_scramble(
                        f, a, block_size, key, clip.video_id, i, generator=generator
                    )
                    for i, (f, a) in enumerate(zip(frames, clip.annotations))
                ]
            )
        return scrambled[cache_key]

    for spec in tiers:
        if spec.kind == "original":
            out[spec.name] = np.stack([f.copy() for f in frames])
        elif spec.kind == "blur":
            out[spec.name] = np.stack(
                [tier1_blur(f, a, spec.sigma) for f, a in zip(frames, clip.annotations)]
            )
        elif spec.kind == "edge":
            out[spec.name] = np.stack(
                [
                    tier2_edge(f, a, spec.canny_low, spec.canny_high)
                    for f, a in zip(frames, clip.annotations)
                ]
            )
        elif spec.kind == "scramble":
            stack = scramble_stack(spec.block_size)
            if spec.nobg:
                stack = np.stack(
                    [apply_nobg(f, a) for f, a in zip(stack, clip.annotations)]
                )
            out[spec.name] = stack
        else:  # pragma: no cover - TierSpec validation forbids this
            raise ValidationError(f"unknown tier kind {spec.kind!r}")
    return out
