"""End-to-end transform runs: window, resize, tier generation, export.

A run is a pure function of (input tree, key, config): the output tree is
byte-identical across reruns and across worker counts. Run metadata records
the key fingerprint and generator, never the key, and carries no timestamps.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import __version__
from .corpus import (
    CLIP_FRAMES,
    DEFAULT_CLASSES,
    OUTPUT_SIZE,
    ClipRecord,
    derive_splits,
    parse_annotations,
    serialize_annotations,
    serialize_split,
)
from .manifest import Manifest, VerificationReport, build_manifest, verify_manifest
from .metrics import SSIM_WINDOW, MetricUndefinedError, QualitySummary, roi_psnr, roi_ssim
from .permute import KeyMaterial
from .transforms import (
    TierSpec,
    center_window,
    default_tier_set,
    generate_tier_set,
    resize_frame,
)
from .validation import ValidationError

logger = logging.getLogger(__name__)

FRAME_NAME = "frame_{:05d}.png"
RUN_METADATA_NAME = "run_metadata.json"
QUALITY_SUMMARY_NAME = "metrics_summary.json"
MANIFEST_NAME = "manifest.json"
RUN_SCHEMA = "privtier-run-v1"
PASSTHROUGH_FILES = ("CHANGELOG.md",)
PASSTHROUGH_DIRS = ("Estimated_Poses",)
DETERMINISM_NOTE = (
    "Outputs are pure functions of the input tree, the key, and this tool "
    "version; no RNG state, wall clock, or host identity is involved."
)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a transform run depends on."""

    input_root: Path
    output_root: Path
    key: Optional[KeyMaterial] = None
    tier_set: tuple[TierSpec, ...] = tuple(default_tier_set())
    class_list: tuple[str, ...] = DEFAULT_CLASSES
    workers: int = 1
    permutation_generator: str = "aes_ctr"
    resume: bool = False
    compute_quality: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_root", Path(self.input_root))
        object.__setattr__(self, "output_root", Path(self.output_root))
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.permutation_generator not in ("aes_ctr", "csprng_fallback"):
            raise ValidationError(f"unknown generator {self.permutation_generator!r}")
        if any(t.kind == "scramble" for t in self.tier_set) and self.key is None:
            raise ValidationError("scramble tiers configured but no key supplied")

    @property
    def non_canonical(self) -> bool:
        """Fallback-generator trees must not be passed off as the dataset."""
        return self.permutation_generator == "csprng_fallback"


@dataclass
class ClipResult:
    """What one clip contributed to the run."""

    video_id: str
    padded: bool = False
    frames_written: int = 0
    frames_skipped: int = 0  # resume hits: digest already matched
    null_annotation_frames: int = 0
    quality: dict = field(default_factory=dict)  # tier -> (ssim[], psnr[], n_null, n_small)
    error: Optional[str] = None


@dataclass
class RunSummary:
    clips: int
    failed: list[str]
    padded_clips: int
    frames_written: int
    frames_skipped: int
    null_annotation_frames: int
    tier_names: list[str]

    @property
    def ok(self) -> bool:
        return not self.failed


def write_bytes(path: Path, data: bytes, resume: bool = False) -> bool:
    """Write, unless resuming and the on-disk digest already matches.

    Returns True when the file was (re)written.
    """
    if resume and path.is_file():
        if hashlib.sha256(path.read_bytes()).digest() == hashlib.sha256(data).digest():
            return False
    try:
        path.write_bytes(data)
    except FileNotFoundError:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    return True


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    return (
        struct.pack(">I", len(body))
        + tag
        + body
        + struct.pack(">I", zlib.crc32(tag + body))
    )


def encode_png(frame: np.ndarray) -> bytes:
    """Lossless 8-bit RGB PNG bytes for one frame.

    Direct fixed-format emitter: Sub row filtering in numpy plus a zlib RLE
    stream. Output is deterministic for a given zlib version and several
    times faster to produce than the general-purpose encoder path, at
    comparable size.
    """
    frame = np.ascontiguousarray(frame)
    h, w = frame.shape[:2]
    rows = frame.reshape(h, w * 3)
    raw = np.empty((h, 1 + w * 3), np.uint8)
    raw[:, 0] = 1  # Sub filter: horizontal deltas, modulo 256
    raw[:, 1:4] = rows[:, :3]
    raw[:, 4:] = rows[:, 3:] - rows[:, :-3]
    comp = zlib.compressobj(1, zlib.DEFLATED, 15, 8, zlib.Z_RLE)
    idat = comp.compress(raw.tobytes()) + comp.flush()
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


def load_frame(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def load_clip_frames(input_root: Path, video_id: str) -> list[np.ndarray]:
    frame_dir = input_root / "frames" / video_id
    if not frame_dir.is_dir():
        raise ValidationError(f"{video_id}: no frame directory at {frame_dir}")
    paths = sorted(p for p in frame_dir.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ValidationError(f"{video_id}: no PNG frames in {frame_dir}")
    return [load_frame(p) for p in paths]


def _measure_quality(
    reference: Sequence[np.ndarray],
    stacks: dict[str, np.ndarray],
    clip: ClipRecord,
) -> dict[str, tuple[list[float], list[float], int, int]]:
    out = {}
    for tier_name, stack in stacks.items():
        ssims: list[float] = []
        psnrs: list[float] = []
        n_null = 0
        n_small = 0
        # The Original tier is a copy of the reference frames, so its scores
        # are 1.0 / infinity by definition; skip the redundant compute.
        identical = tier_name == "Original"
        for ref, frame, ann in zip(reference, stack, clip.annotations):
            if ann is None:
                n_null += 1
                continue
            x0, y0, x1, y1 = ann.bbox
            if x1 - x0 < SSIM_WINDOW or y1 - y0 < SSIM_WINDOW:
                n_small += 1
                continue
            if identical:
                ssims.append(1.0)
                psnrs.append(math.inf)
                continue
            ssims.append(roi_ssim(ref, frame, ann.bbox))
            psnrs.append(roi_psnr(ref, frame, ann.bbox))
        out[tier_name] = (ssims, psnrs, n_null, n_small)
    return out


def process_clip(
    clip: ClipRecord,
    input_root: Path,
    output_root: Path,
    key: Optional[KeyMaterial],
    tier_set: tuple[TierSpec, ...],
    generator: str,
    resume: bool,
    compute_quality: bool,
) -> ClipResult:
    """Window, resize, transform, and export one clip. Never raises."""
    result = ClipResult(video_id=clip.video_id)
    try:
        raw = load_clip_frames(input_root, clip.video_id)
        windowed, result.padded = center_window(raw, CLIP_FRAMES)
        resized = [resize_frame(f, OUTPUT_SIZE) for f in windowed]
        stacks = generate_tier_set(clip, resized, key, tiers=tier_set, generator=generator)
        result.null_annotation_frames = sum(1 for a in clip.annotations if a is None)
        for tier_name, stack in stacks.items():
            clip_dir = output_root / tier_name / clip.video_id
            for i, frame in enumerate(stack):
                path = clip_dir / FRAME_NAME.format(i)
                if write_bytes(path, encode_png(frame), resume=resume):
                    result.frames_written += 1
                else:
                    result.frames_skipped += 1
        if compute_quality:
            result.quality = _measure_quality(resized, stacks, clip)
    except Exception as exc:  # per-clip isolation; run continues
        logger.error("%s failed: %s", clip.video_id, exc)
        result.error = str(exc)
    return result


def _process_clip_args(args) -> ClipResult:
    return process_clip(*args)


def _aggregate_quality(results: Sequence[ClipResult], tier_names: Sequence[str]) -> list[QualitySummary]:
    summaries = []
    for tier in tier_names:
        ssims: list[float] = []
        psnrs: list[float] = []
        n_null = 0
        n_small = 0
        for res in sorted(results, key=lambda r: r.video_id):
            if tier in res.quality:
                s, p, nn, ns = res.quality[tier]
                ssims.extend(s)
                psnrs.extend(p)
                n_null += nn
                n_small += ns
        summaries.append(
            QualitySummary.from_frames(
                tier, ssims, psnrs, skipped_null_roi=n_null, skipped_small_roi=n_small
            )
        )
    return summaries


def run_metadata_document(config: PipelineConfig, summary: RunSummary) -> bytes:
    # Only facts derivable from (input, config, tool version) belong here;
    # run-history counters like frames_written would break resume idempotence.
    complete = summary.clips - len(summary.failed)
    doc = {
        "schema": RUN_SCHEMA,
        "tool": "privtier",
        "tool_version": __version__,
        "key_fingerprint": None if config.key is None else config.key.fingerprint(),
        "permutation_generator": config.permutation_generator,
        "non_canonical": config.non_canonical,
        "tiers": summary.tier_names,
        "clips": summary.clips,
        "frames_per_clip": CLIP_FRAMES,
        "frame_files": complete * len(summary.tier_names) * CLIP_FRAMES,
        "padded_clips": summary.padded_clips,
        "null_annotation_frames": summary.null_annotation_frames,
        "failed_clips": sorted(summary.failed),
        "determinism_note": DETERMINISM_NOTE,
    }
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def run_pipeline(config: PipelineConfig) -> RunSummary:
    """Execute a full transform run into the canonical output layout.

    Per-clip failures are logged and leave the run with ok=False; everything
    else is still exported so the tree stays inspectable.
    """
    annotations_path = config.input_root / "annotations.json"
    if not annotations_path.is_file():
        raise ValidationError(f"no annotations document at {annotations_path}")
    records = parse_annotations(annotations_path.read_bytes(), class_set=config.class_list)
    records = sorted(records, key=lambda r: r.video_id)

    out = config.output_root
    if out.exists() and any(out.iterdir()) and not config.resume:
        raise ValidationError(f"output root {out} is not empty (use resume to continue)")
    out.mkdir(parents=True, exist_ok=True)

    jobs = [
        (
            clip,
            config.input_root,
            out,
            config.key,
            config.tier_set,
            config.permutation_generator,
            config.resume,
            config.compute_quality,
        )
        for clip in records
    ]
    if config.workers == 1:
        results = [process_clip(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_process_clip_args, jobs))
    results.sort(key=lambda r: r.video_id)

    tier_names = [t.name for t in config.tier_set]
    summary = RunSummary(
        clips=len(records),
        failed=[r.video_id for r in results if r.error],
        padded_clips=sum(1 for r in results if r.padded),
        frames_written=sum(r.frames_written for r in results),
        frames_skipped=sum(r.frames_skipped for r in results),
        null_annotation_frames=sum(r.null_annotation_frames for r in results),
        tier_names=tier_names,
    )

    write_bytes(out / "annotations.json", serialize_annotations(records), config.resume)
    train, test = derive_splits(records)
    write_bytes(out / "train_split.txt", serialize_split(train), config.resume)
    write_bytes(out / "test_split.txt", serialize_split(test), config.resume)

    for name in PASSTHROUGH_FILES:
        src = config.input_root / name
        if src.is_file():
            write_bytes(out / name, src.read_bytes(), config.resume)
    for dirname in PASSTHROUGH_DIRS:
        src_dir = config.input_root / dirname
        if src_dir.is_dir():
            for src in sorted(p for p in src_dir.rglob("*") if p.is_file()):
                rel = src.relative_to(src_dir)
                write_bytes(out / dirname / rel, src.read_bytes(), config.resume)

    if config.compute_quality:
        from .evalkit import serialize_quality_summary

        ok_results = [r for r in results if r.error is None]
        write_bytes(
            out / QUALITY_SUMMARY_NAME,
            serialize_quality_summary(_aggregate_quality(ok_results, tier_names)),
            config.resume,
        )
    write_bytes(out / RUN_METADATA_NAME, run_metadata_document(config, summary), config.resume)

    manifest = build_manifest(out, exclude=(MANIFEST_NAME,))
    write_bytes(out / MANIFEST_NAME, manifest.to_json(), config.resume)
    return summary


def recompute_quality(tree_root: Path, tier_names: Sequence[str]) -> list[QualitySummary]:
    """Recompute per-tier quality aggregates from an exported tree.

    Reference frames come from the tree's own Original tier; per-frame
    bboxes come from its annotations document.
    """
    tree_root = Path(tree_root)
    records = parse_annotations((tree_root / "annotations.json").read_bytes(), class_set=None)
    records = sorted(records, key=lambda r: r.video_id)
    if not (tree_root / "Original").is_dir():
        raise ValidationError(f"no Original tier under {tree_root}; nothing to compare against")

    summaries = []
    for tier in tier_names:
        ssims: list[float] = []
        psnrs: list[float] = []
        n_null = 0
        n_small = 0
        for record in records:
            for i, ann in enumerate(record.annotations):
                if ann is None:
                    n_null += 1
                    continue
                name = FRAME_NAME.format(i)
                ref = load_frame(tree_root / "Original" / record.video_id / name)
                frame = load_frame(tree_root / tier / record.video_id / name)
                try:
                    ssims.append(roi_ssim(ref, frame, ann.bbox))
                except MetricUndefinedError:
                    n_small += 1
                    continue
                psnrs.append(roi_psnr(ref, frame, ann.bbox))
        summaries.append(
            QualitySummary.from_frames(
                tier, ssims, psnrs, skipped_null_roi=n_null, skipped_small_roi=n_small
            )
        )
    return summaries


@dataclass
class RunVerification:
    """Manifest verification plus structural findings for one output tree."""

    manifest_report: Optional[VerificationReport]
    findings: list[str]

    @property
    def ok(self) -> bool:
        manifest_ok = self.manifest_report is not None and self.manifest_report.ok
        return manifest_ok and not self.findings


def verify_run(output_root: Path, expected_size: int = OUTPUT_SIZE) -> RunVerification:
    """Check an exported tree: manifest digests plus per-clip structure.

    Structure means: every configured tier holds every clip, each clip holds
    exactly the expected frame files, and each decodes to the expected RGB
    geometry.
    """
    output_root = Path(output_root)
    findings: list[str] = []

    manifest_path = output_root / MANIFEST_NAME
    manifest_report = None
    if not manifest_path.is_file():
        findings.append(f"missing {MANIFEST_NAME}")
    else:
        try:
            manifest = Manifest.from_json(manifest_path.read_bytes())
            manifest_report = verify_manifest(output_root, manifest, exclude=(MANIFEST_NAME,))
        except (ValidationError, ValueError) as exc:
            findings.append(f"unreadable manifest: {exc}")

    annotations_path = output_root / "annotations.json"
    if not annotations_path.is_file():
        findings.append("missing annotations.json")
        return RunVerification(manifest_report, findings)
    records = parse_annotations(annotations_path.read_bytes(), class_set=None)

    metadata_path = output_root / RUN_METADATA_NAME
    if metadata_path.is_file():
        tier_names = json.loads(metadata_path.read_bytes())["tiers"]
    else:
        findings.append(f"missing {RUN_METADATA_NAME}; assuming the default tier set")
        tier_names = [t.name for t in default_tier_set()]

    expected_frames = [FRAME_NAME.format(i) for i in range(CLIP_FRAMES)]
    for tier in tier_names:
        tier_dir = output_root / tier
        if not tier_dir.is_dir():
            findings.append(f"missing tier directory {tier}")
            continue
        for record in records:
            clip_dir = tier_dir / record.video_id
            if not clip_dir.is_dir():
                findings.append(f"{tier}/{record.video_id}: missing clip directory")
                continue
            names = sorted(p.name for p in clip_dir.iterdir())
            if names != expected_frames:
                findings.append(
                    f"{tier}/{record.video_id}: expected {CLIP_FRAMES} frame files, "
                    f"found {len(names)}"
                )
            for name in names:
                if name not in expected_frames:
                    continue
                try:
                    frame = load_frame(clip_dir / name)
                except Exception as exc:
                    findings.append(f"{tier}/{record.video_id}/{name}: decode failed ({exc})")
                    continue
                if frame.shape != (expected_size, expected_size, 3):
                    findings.append(
                        f"{tier}/{record.video_id}/{name}: unexpected geometry {frame.shape}"
                    )
    return RunVerification(manifest_report, findings)
