"""End-to-end CLI behavior, including the fatal weight-hash gate."""

from __future__ import annotations

import importlib.util
import json

import pytest

from annotator.cli import main


def run_cli(corpus, out, weights, digest, *extra):
    argv = [
        "--input", str(corpus),
        "--out", str(out),
        "--weights", str(weights),
        "--weights-sha256", digest,
        "--backend", "synthetic",
        *extra,
    ]
    return main(argv)


def test_successful_run_writes_both_artifacts(corpus_root, weights_file, tmp_path, capsys):
    weights, digest = weights_file
    out = tmp_path / "annotations.json"
    assert run_cli(corpus_root, out, weights, digest) == 0
    stdout = capsys.readouterr().out
    assert "annotated 3 clips" in stdout
    records = json.loads(out.read_text())
    assert len(records) == 3
    poses = tmp_path / "Estimated_Poses"
    assert len(list(poses.glob("*.json"))) == 3


def test_hash_mismatch_aborts_with_no_output(corpus_root, weights_file, tmp_path, caplog):
    weights, _ = weights_file
    out = tmp_path / "annotations.json"
    assert run_cli(corpus_root, out, weights, "0" * 64) == 2
    assert not out.exists()
    assert not (tmp_path / "Estimated_Poses").exists()
    assert "does not match" in caplog.text


def test_missing_weight_file_fails(corpus_root, tmp_path):
    assert run_cli(corpus_root, tmp_path / "a.json", tmp_path / "none.bin", "0" * 64) == 2


def test_poses_dir_and_fps_flags(corpus_root, weights_file, tmp_path):
    weights, digest = weights_file
    out = tmp_path / "annotations.json"
    poses = tmp_path / "kp"
    assert run_cli(
        corpus_root, out, weights, digest, "--poses-dir", str(poses), "--fps", "30"
    ) == 0
    assert len(list(poses.glob("*.json"))) == 3
    assert not (tmp_path / "Estimated_Poses").exists()
    records = json.loads(out.read_text())
    assert all(r["source_fps"] == 30.0 for r in records)


def test_class_override_rejects_out_of_set_clips(corpus_root, weights_file, tmp_path):
    weights, digest = weights_file
    rc = run_cli(
        corpus_root, tmp_path / "a.json", weights, digest, "--classes", "TaiChi"
    )
    assert rc == 2


def test_default_backend_needs_model_dependency(corpus_root, weights_file, tmp_path):
    if importlib.util.find_spec("ultralytics") is not None:
        pytest.skip("ultralytics installed; unavailability path not reachable")
    weights, digest = weights_file
    argv = [
        "--input", str(corpus_root),
        "--out", str(tmp_path / "a.json"),
        "--weights", str(weights),
        "--weights-sha256", digest,
    ]
    assert main(argv) == 2
