"""Command-line interface: transform runs, splits, manifests, evaluation.

Key material resolution order: --key-hex, then --key-file, then the
PRIVTIER_KEY_HEX environment variable. The key itself never appears in any
output; run metadata records only its SHA-256 fingerprint.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .corpus import (
    DEFAULT_CLASSES,
    derive_splits,
    parse_annotations,
    parse_split,
    serialize_split,
)
from .evalkit import (
    evaluate,
    emit_report,
    load_face_flags,
    load_predictions,
    load_quality_summary,
    plot_tables_from_report,
)
from .manifest import build_manifest
from .permute import KeyMaterial
from .pipeline import (
    MANIFEST_NAME,
    PipelineConfig,
    recompute_quality,
    run_pipeline,
    verify_run,
)
from .transforms import default_tier_set, tier_from_name
from .validation import ValidationError

logger = logging.getLogger(__name__)

KEY_ENV_VAR = "PRIVTIER_KEY_HEX"
ACCURACY_PLOT_NAME = "accuracy_vs_tier.csv"
PU_PLOT_NAME = "pu_space.csv"


def resolve_key(args: argparse.Namespace) -> Optional[KeyMaterial]:
    if getattr(args, "key_hex", None):
        return KeyMaterial.from_hex(args.key_hex, origin="cli_flag")
    if getattr(args, "key_file", None):
        text = Path(args.key_file).read_text(encoding="utf-8")
        return KeyMaterial.from_hex(text, origin="keyfile")
    env = os.environ.get(KEY_ENV_VAR)
    if env:
        return KeyMaterial.from_hex(env, origin="env_var")
    return None


def _parse_classes(value: Optional[str]) -> tuple[str, ...]:
    if value is None:
        return DEFAULT_CLASSES
    classes = tuple(c.strip() for c in value.split(",") if c.strip())
    if not classes:
        raise ValidationError("class list is empty")
    return classes


def _tier_order_key(name: str) -> tuple[int, str]:
    canonical = [t.name for t in default_tier_set()]
    if name in canonical:
        return (canonical.index(name), name)
    return (len(canonical), name)


def cmd_transform(args: argparse.Namespace) -> int:
    if args.tiers:
        tier_set = tuple(tier_from_name(t.strip()) for t in args.tiers.split(","))
    else:
        block_sizes = tuple(int(b) for b in args.block_sizes.split(","))
        tier_set = tuple(default_tier_set(block_sizes))
    config = PipelineConfig(
        input_root=Path(args.input),
        output_root=Path(args.output),
        key=resolve_key(args),
        tier_set=tier_set,
        class_list=_parse_classes(args.classes),
        workers=args.workers,
        permutation_generator="csprng_fallback" if args.fallback_csprng else "aes_ctr",
        resume=args.resume,
        compute_quality=not args.no_quality,
    )
    summary = run_pipeline(config)
    print(
        f"transformed {summary.clips} clips into {len(summary.tier_names)} tiers: "
        f"{summary.frames_written} frames written, {summary.frames_skipped} up to date, "
        f"{summary.padded_clips} padded clips, "
        f"{summary.null_annotation_frames} null-annotation frames"
    )
    if summary.failed:
        print(f"FAILED clips: {', '.join(summary.failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    records = parse_annotations(Path(args.annotations).read_bytes(), class_set=None)
    train, test = derive_splits(records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "train_split.txt").write_bytes(serialize_split(train))
    (out_dir / "test_split.txt").write_bytes(serialize_split(test))
    print(f"wrote splits: {len(train.video_ids)} train, {len(test.video_ids)} test")
    return 0


def cmd_manifest(args: argparse.Namespace) -> int:
    root = Path(args.root)
    out = Path(args.out) if args.out else root / MANIFEST_NAME
    exclude = (MANIFEST_NAME,) if out.parent.resolve() == root.resolve() else ()
    manifest = build_manifest(root, exclude=exclude)
    out.write_bytes(manifest.to_json())
    print(f"manifest covers {len(manifest.entries)} files -> {out}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    verification = verify_run(Path(args.root))
    if verification.manifest_report is not None:
        print(verification.manifest_report.summary())
    for finding in verification.findings:
        print(f"finding: {finding}")
    if verification.ok:
        print("verification clean")
        return 0
    print("verification FAILED", file=sys.stderr)
    return 1


def cmd_eval(args: argparse.Namespace) -> int:
    class_set = _parse_classes(args.classes)
    records = parse_annotations(Path(args.annotations).read_bytes(), class_set=class_set)
    split = parse_split(Path(args.split).read_bytes(), args.split_name)
    face_flags = load_face_flags(Path(args.face_flags).read_bytes()) if args.face_flags else None

    pred_dir = Path(args.predictions)
    pred_files = sorted(pred_dir.glob("*.csv"), key=lambda p: _tier_order_key(p.stem))
    if not pred_files:
        raise ValidationError(f"no prediction CSVs under {pred_dir}")
    for path in pred_files:
        tier_from_name(path.stem)  # reject stems that are not tier names

    tier_names = [p.stem for p in pred_files]
    if args.recompute_quality:
        quality = {s.tier_name: s for s in recompute_quality(Path(args.tree), tier_names)}
    else:
        quality = load_quality_summary(Path(args.ssim_summary).read_bytes())

    prediction_sets = [
        load_predictions(p.read_bytes(), p.stem, args.config, class_set=class_set)
        for p in pred_files
    ]

    acc_original = args.acc_original
    reports = []
    for preds in prediction_sets:
        if preds.tier_name != "Original":
            continue
        report = evaluate(
            preds,
            records,
            split,
            quality.get("Original"),
            face_flags,
            acc_original_pct=acc_original,
            class_set=class_set,
            allow_train_eval=args.allow_train_eval,
        )
        reports.append(report)
        if acc_original is None:
            acc_original = report.top1_pct
    for preds in prediction_sets:
        if preds.tier_name == "Original":
            continue
        reports.append(
            evaluate(
                preds,
                records,
                split,
                quality.get(preds.tier_name),
                face_flags,
                acc_original_pct=acc_original,
                class_set=class_set,
                allow_train_eval=args.allow_train_eval,
            )
        )

    bundle = emit_report(reports)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(bundle.report_json)
    (out.parent / ACCURACY_PLOT_NAME).write_bytes(bundle.accuracy_plot_csv)
    (out.parent / PU_PLOT_NAME).write_bytes(bundle.pu_plot_csv)
    for r in reports:
        drop = f", drop {round(r.acc_drop_pp, 1)} pp" if r.tier_name != "Original" else ""
        pu = f", PU {round(r.pu_score, 3)}" if r.pu_score is not None else ""
        print(f"{r.tier_name} [{r.config_label}]: top1 {r.top1_pct}%{drop}{pu}")
    print(f"report -> {out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    accuracy_csv, pu_csv = plot_tables_from_report(Path(args.report).read_bytes())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / ACCURACY_PLOT_NAME).write_bytes(accuracy_csv)
    (out_dir / PU_PLOT_NAME).write_bytes(pu_csv)
    print(f"plot data -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privtier",
        description="Deterministic privacy-tier video pipeline and evaluation toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"privtier {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="generate tier trees from frames + annotations")
    p.add_argument("--input", required=True, help="input root (annotations.json + frames/)")
    p.add_argument("--output", required=True, help="output root (must be empty unless --resume)")
    key_group = p.add_mutually_exclusive_group()
    key_group.add_argument("--key-hex", help="AES key as 32 hex chars")
    key_group.add_argument("--key-file", help="file holding the key hex")
    p.add_argument("--tiers", help="comma-separated tier names (overrides --block-sizes)")
    p.add_argument("--block-sizes", default="4,8,16", help="scramble block sizes")
    p.add_argument("--classes", help="comma-separated class list")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fallback-csprng", action="store_true",
                   help="hash-chain keystream instead of AES-CTR (marks run non-canonical)")
    p.add_argument("--resume", action="store_true", help="skip files whose digests match")
    p.add_argument("--no-quality", action="store_true", help="skip SSIM/PSNR aggregation")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("split", help="derive train/test split files from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("manifest", help="write a SHA-256 manifest for a tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", help="manifest path (default: ROOT/manifest.json)")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("verify", help="verify manifest digests and tree structure")
    p.add_argument("--root", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="score per-tier prediction CSVs")
    p.add_argument("--predictions", required=True, help="directory of <tier>.csv files")
    p.add_argument("--annotations", required=True)
    p.add_argument("--split", required=True, help="split file to evaluate against")
    p.add_argument("--split-name", default="test", choices=("train", "test"))
    quality_group = p.add_mutually_exclusive_group(required=True)
    quality_group.add_argument("--ssim-summary", help="quality summary from the transform run")
    quality_group.add_argument("--recompute-quality", action="store_true",
                               help="recompute SSIM/PSNR from an exported tree (see --tree)")
    p.add_argument("--tree", help="exported tree root, required with --recompute-quality")
    p.add_argument("--face-flags", help="JSON of external face-detection booleans")
    p.add_argument("--out", required=True, help="report path; plot CSVs land beside it")
    p.add_argument("--config", default="A", choices=("A", "B", "C"),
                   help="declared training configuration label")
    p.add_argument("--acc-original", type=float,
                   help="Original-tier accuracy pct when Original.csv is absent")
    p.add_argument("--allow-train-eval", action="store_true")
    p.add_argument("--classes", help="comma-separated class list")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="re-emit plot CSVs from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "recompute_quality", False) and not args.tree:
        parser.error("--recompute-quality requires --tree")
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
