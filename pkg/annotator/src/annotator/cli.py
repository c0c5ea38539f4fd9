"""Command-line entry point: annotate a frame corpus.

The weight file's SHA-256 is checked against the pinned digest before any
backend is constructed; a mismatch aborts the run with nothing written.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .adapter import CLASS_LABELS, DEFAULT_FPS, annotate_corpus
from .backends import BACKEND_NAMES, create_backend
from .errors import AnnotatorError
from .weights import verify_weights

logger = logging.getLogger(__name__)


def _parse_classes(value: Optional[str]) -> tuple[str, ...]:
    if value is None:
        return CLASS_LABELS
    classes = tuple(c.strip() for c in value.split(",") if c.strip())
    if not classes:
        raise ValueError("class list is empty")
    return classes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annotate",
        description=(
            "Run a pose-estimation backend over per-clip frame directories "
            "and emit the annotation document plus per-clip keypoint files."
        ),
    )
    parser.add_argument("--version", action="version", version=f"annotate {__version__}")
    parser.add_argument(
        "--input", required=True,
        help="corpus root: clip directories of PNG frames (or a frames/ subdirectory)",
    )
    parser.add_argument("--out", required=True, help="annotations.json output path")
    parser.add_argument("--weights", required=True, help="pose model weight file")
    parser.add_argument(
        "--weights-sha256", required=True,
        help="pinned SHA-256 of the weight file; a mismatch is fatal",
    )
    parser.add_argument(
        "--backend", default="ultralytics", choices=BACKEND_NAMES,
        help="inference backend (synthetic needs no model dependency)",
    )
    parser.add_argument(
        "--poses-dir",
        help="per-clip keypoint JSON directory (default: Estimated_Poses beside --out)",
    )
    parser.add_argument(
        "--fps", type=float, default=DEFAULT_FPS,
        help="source frame rate recorded in each clip record",
    )
    parser.add_argument("--classes", help="comma-separated class list override")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        digest = verify_weights(Path(args.weights), args.weights_sha256)
        logger.info("weight file verified: sha256 %s", digest)
        backend = create_backend(args.backend, Path(args.weights))
        summary = annotate_corpus(
            input_root=Path(args.input),
            out_path=Path(args.out),
            backend=backend,
            poses_dir=Path(args.poses_dir) if args.poses_dir else None,
            fps=args.fps,
            class_set=_parse_classes(args.classes),
        )
    except (AnnotatorError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    print(
        f"annotated {summary.clips} clips: {summary.detected_frames}/{summary.frames} "
        f"frames detected, {summary.failed_frames} inference failures, "
        f"{summary.padded_clips} padded clips"
    )
    print(f"annotations -> {summary.out_path}")
    print(f"poses -> {summary.poses_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
