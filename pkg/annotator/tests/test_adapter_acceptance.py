"""Acceptance gate for the adapter: one verdict line for its shipped guarantee."""

from __future__ import annotations

import json
from fractions import Fraction

import pytest

from privtier import parse_annotations

from annotator import DetectionCandidate, SyntheticBackend, select_primary
from annotator.cli import main as annotate_main
from framefix import JUMPROPE_ID, LUNGES_ID, TAICHI_ID

KP = tuple((1.0, 2.0, 0.5) for _ in range(17))


def _verdict(capsys, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    with capsys.disabled():
        print(f"\n{line}", flush=True)
    assert ok, line


def _cand(bbox, conf) -> DetectionCandidate:
    return DetectionCandidate(bbox=bbox, confidence=conf, keypoints=KP)


def test_adapter_conformance(capsys, tmp_path, corpus_root, weights_file):
    weights, digest = weights_file

    # Selection rule table: largest area among confident candidates, and the
    # sub-threshold and empty cases give null.
    small = _cand((0.0, 0.0, 10.0, 10.0), 0.9)
    large = _cand((20.0, 20.0, 40.0, 40.0), 0.9)
    rule_hits = [
        select_primary([small, large]) is large,
        select_primary([_cand((0.0, 0.0, 10.0, 10.0), 0.4)]) is None,
        select_primary([]) is None,
    ]

    # A wrong pinned digest must abort before any inference happens.
    detect_calls = []
    mp = pytest.MonkeyPatch()
    try:
        original = SyntheticBackend.detect
        mp.setattr(
            SyntheticBackend,
            "detect",
            lambda self, frames: detect_calls.append(1) or original(self, frames),
        )
        blocked_out = tmp_path / "blocked" / "annotations.json"
        rc_blocked = annotate_main([
            "--input", str(corpus_root),
            "--out", str(blocked_out),
            "--weights", str(weights),
            "--weights-sha256", "f" * 64,
            "--backend", "synthetic",
        ])
    finally:
        mp.undo()
    aborted_clean = rc_blocked == 2 and not detect_calls and not blocked_out.exists()

    # A correct digest produces a document the pipeline-side parser accepts.
    out = tmp_path / "annotations.json"
    rc = annotate_main([
        "--input", str(corpus_root),
        "--out", str(out),
        "--weights", str(weights),
        "--weights-sha256", digest,
        "--backend", "synthetic",
    ])
    assert rc == 0
    records = parse_annotations(out.read_bytes())
    by_id = {r.video_id: r for r in records}
    parsed_ok = (
        len(records) == 3
        and by_id[TAICHI_ID].split == "train"
        and by_id[JUMPROPE_ID].split == "test"
        and by_id[TAICHI_ID].detection_rate == 1
        and by_id[JUMPROPE_ID].detection_rate == Fraction(26, 32)
        and by_id[LUNGES_ID].detection_rate == 0
        and all(r.clip_frames == 32 for r in records)
        and all(
            len(a.keypoints) == 17
            for r in records
            for a in r.annotations
            if a is not None
        )
    )
    pose_docs = [
        json.loads((tmp_path / "Estimated_Poses" / f"{vid}.json").read_text())
        for vid in (TAICHI_ID, JUMPROPE_ID, LUNGES_ID)
    ]
    poses_ok = all(
        len(doc["frames"]) == 32
        and all(f is None or len(f["keypoints"]) == 17 for f in doc["frames"])
        for doc in pose_docs
    )

    ok = all(rule_hits) and aborted_clean and parsed_ok and poses_ok
    _verdict(
        capsys,
        "adapter conformance",
        ok,
        f"selection rule table {sum(rule_hits)}/3, hash mismatch aborted with "
        f"0 inference calls, {len(records)} emitted records reparse cleanly",
    )
