"""End-to-end transform runs: layout, determinism, resume, verification."""

import json
import shutil

import numpy as np
import pytest
from PIL import Image

from privtier import (
    KeyMaterial,
    PipelineConfig,
    TierSpec,
    ValidationError,
    load_quality_summary,
    recompute_quality,
    run_pipeline,
    serialize_annotations,
    verify_run,
)
from privtier.pipeline import (
    encode_png,
    load_clip_frames,
    load_frame,
    process_clip,
    run_metadata_document,
    write_bytes,
)
from corpusfix import KEY_HEX, FIXTURE_CLIPS, fixture_frames, fixture_record

KEY = KeyMaterial.from_hex(KEY_HEX)
MINI_SPECS = (FIXTURE_CLIPS[1], FIXTURE_CLIPS[5])  # one train clip (padded), one test clip
TIER_NAMES = [
    "Original",
    "Tier1_Blur",
    "Tier2_Edge",
    "Tier3_AES_B4",
    "Tier3_AES_B8",
    "Tier3_AES_B16",
    "Tier3_AES_B4_NoBG",
    "Tier3_AES_B8_NoBG",
    "Tier3_AES_B16_NoBG",
]


def build_input_tree(root, specs=MINI_SPECS):
    root.mkdir(parents=True, exist_ok=True)
    records = [fixture_record(s) for s in specs]
    (root / "annotations.json").write_bytes(serialize_annotations(records))
    (root / "CHANGELOG.md").write_text("# Changes\n\n- test corpus\n")
    poses = root / "Estimated_Poses"
    poses.mkdir()
    for spec in specs:
        (poses / f"{spec[0]}.json").write_text("{}\n")
        frame_dir = root / "frames" / spec[0]
        frame_dir.mkdir(parents=True)
        for i, frame in enumerate(fixture_frames(spec)):
            Image.fromarray(frame, mode="RGB").save(frame_dir / f"src_{i:04d}.png")
    return root


@pytest.fixture(scope="module")
def mini_input(tmp_path_factory):
    return build_input_tree(tmp_path_factory.mktemp("mini_input"))


@pytest.fixture(scope="module")
def canonical_run(tmp_path_factory, mini_input):
    out = tmp_path_factory.mktemp("run") / "tree"
    config = PipelineConfig(input_root=mini_input, output_root=out, key=KEY)
    summary = run_pipeline(config)
    return out, summary


class TestHelpers:
    def test_write_bytes_resume_skips_identical(self, tmp_path):
        p = tmp_path / "a" / "f.bin"
        assert write_bytes(p, b"data") is True
        assert write_bytes(p, b"data", resume=True) is False
        assert write_bytes(p, b"other", resume=True) is True
        assert p.read_bytes() == b"other"

    def test_png_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(3)
        frame = rng.integers(0, 256, size=(24, 16, 3), dtype=np.uint8)
        p = tmp_path / "f.png"
        p.write_bytes(encode_png(frame))
        assert np.array_equal(load_frame(p), frame)

    def test_load_clip_frames_missing_dir(self, tmp_path):
        with pytest.raises(ValidationError, match="frame directory"):
            load_clip_frames(tmp_path, "nope")

    def test_load_clip_frames_empty_dir(self, tmp_path):
        (tmp_path / "frames" / "vid").mkdir(parents=True)
        with pytest.raises(ValidationError, match="no PNG"):
            load_clip_frames(tmp_path, "vid")


class TestPipelineConfig:
    def test_defaults(self, tmp_path):
        config = PipelineConfig(input_root=tmp_path, output_root=tmp_path / "o", key=KEY)
        assert [t.name for t in config.tier_set] == TIER_NAMES
        assert not config.non_canonical

    def test_scramble_requires_key(self, tmp_path):
        with pytest.raises(ValidationError, match="key"):
            PipelineConfig(input_root=tmp_path, output_root=tmp_path / "o")

    def test_keyless_allowed_without_scramble(self, tmp_path):
        config = PipelineConfig(
            input_root=tmp_path,
            output_root=tmp_path / "o",
            tier_set=(TierSpec.original(), TierSpec.blur()),
        )
        assert config.key is None

    def test_workers_validated(self, tmp_path):
        with pytest.raises(ValidationError, match="workers"):
            PipelineConfig(input_root=tmp_path, output_root=tmp_path / "o", key=KEY, workers=0)

    def test_generator_validated(self, tmp_path):
        with pytest.raises(ValidationError, match="generator"):
            PipelineConfig(
                input_root=tmp_path,
                output_root=tmp_path / "o",
                key=KEY,
                permutation_generator="dice",
            )


class TestRunLayout:
    def test_summary_counts(self, canonical_run):
        _, summary = canonical_run
        assert summary.ok
        assert summary.clips == 2
        assert summary.padded_clips == 1  # the 28-frame clip
        assert summary.frames_written == 9 * 2 * 32
        assert summary.frames_skipped == 0
        assert summary.null_annotation_frames == 2

    def test_tier_directories_and_frame_files(self, canonical_run):
        out, _ = canonical_run
        for tier in TIER_NAMES:
            for spec in MINI_SPECS:
                clip_dir = out / tier / spec[0]
                names = sorted(p.name for p in clip_dir.iterdir())
                assert names == [f"frame_{i:05d}.png" for i in range(32)]

    def test_top_level_documents(self, canonical_run):
        out, _ = canonical_run
        for name in (
            "annotations.json",
            "train_split.txt",
            "test_split.txt",
            "metrics_summary.json",
            "run_metadata.json",
            "manifest.json",
            "CHANGELOG.md",
        ):
            assert (out / name).is_file(), name
        assert (out / "Estimated_Poses" / "fx00002.json").is_file()
        assert (out / "train_split.txt").read_bytes() == b"fx00002\n"
        assert (out / "test_split.txt").read_bytes() == b"fx00006\n"

    def test_run_metadata_fields(self, canonical_run):
        out, _ = canonical_run
        doc = json.loads((out / "run_metadata.json").read_bytes())
        assert doc["schema"] == "privtier-run-v1"
        assert doc["key_fingerprint"] == KEY.fingerprint()
        assert doc["permutation_generator"] == "aes_ctr"
        assert doc["non_canonical"] is False
        assert doc["tiers"] == TIER_NAMES
        assert doc["frames_per_clip"] == 32
        assert doc["frame_files"] == 9 * 2 * 32
        assert doc["failed_clips"] == []
        # Reruns must be byte-stable, so nothing time- or host-dependent.
        assert not any("time" in k or "date" in k or "host" in k for k in doc)

    def test_quality_summary_sane(self, canonical_run):
        out, _ = canonical_run
        summaries = load_quality_summary((out / "metrics_summary.json").read_bytes())
        assert set(summaries) == set(TIER_NAMES)
        original = summaries["Original"]
        assert original.mean_ssim == pytest.approx(1.0)
        assert original.mean_psnr_db is None  # every frame identical -> all inf
        assert original.psnr_inf_count == original.frame_count
        # 64 frames minus 2 null-annotation frames measured per tier.
        assert original.frame_count == 62
        assert original.skipped_null_roi == 2
        blur = summaries["Tier1_Blur"]
        assert blur.mean_ssim < 0.95
        assert summaries["Tier2_Edge"].mean_ssim < blur.mean_ssim

    def test_verify_run_clean(self, canonical_run):
        out, _ = canonical_run
        verdict = verify_run(out)
        assert verdict.findings == []
        assert verdict.manifest_report.ok
        assert verdict.ok

    def test_recompute_quality_matches_run_measurements(self, canonical_run):
        out, _ = canonical_run
        stored = load_quality_summary((out / "metrics_summary.json").read_bytes())
        for tier in ("Original", "Tier1_Blur", "Tier3_AES_B8"):
            (recomputed,) = recompute_quality(out, [tier])
            assert recomputed.mean_ssim == pytest.approx(stored[tier].mean_ssim, abs=1e-6)
            assert recomputed.frame_count == stored[tier].frame_count
            assert recomputed.psnr_inf_count == stored[tier].psnr_inf_count


class TestDeterminism:
    def test_resume_rewrites_nothing(self, canonical_run, mini_input):
        out, _ = canonical_run
        manifest_before = (out / "manifest.json").read_bytes()
        config = PipelineConfig(
            input_root=mini_input, output_root=out, key=KEY, resume=True
        )
        summary = run_pipeline(config)
        assert summary.frames_written == 0
        assert summary.frames_skipped == 9 * 2 * 32
        assert (out / "manifest.json").read_bytes() == manifest_before

    def test_refuses_nonempty_output_without_resume(self, canonical_run, mini_input):
        out, _ = canonical_run
        config = PipelineConfig(input_root=mini_input, output_root=out, key=KEY)
        with pytest.raises(ValidationError, match="not empty"):
            run_pipeline(config)

    def test_two_workers_byte_identical(self, canonical_run, mini_input, tmp_path):
        out1, _ = canonical_run
        out2 = tmp_path / "tree2"
        config = PipelineConfig(
            input_root=mini_input, output_root=out2, key=KEY, workers=2
        )
        summary = run_pipeline(config)
        assert summary.ok
        assert (out2 / "manifest.json").read_bytes() == (out1 / "manifest.json").read_bytes()

    def test_fallback_generator_differs_and_is_flagged(self, canonical_run, mini_input, tmp_path):
        out1, _ = canonical_run
        out2 = tmp_path / "fallback"
        config = PipelineConfig(
            input_root=mini_input,
            output_root=out2,
            key=KEY,
            tier_set=(TierSpec.original(), TierSpec.scramble(8)),
            permutation_generator="csprng_fallback",
        )
        summary = run_pipeline(config)
        assert summary.ok
        doc = json.loads((out2 / "run_metadata.json").read_bytes())
        assert doc["non_canonical"] is True
        name = "frame_00000.png"
        canonical = (out1 / "Tier3_AES_B8" / "fx00006" / name).read_bytes()
        fallback = (out2 / "Tier3_AES_B8" / "fx00006" / name).read_bytes()
        assert canonical != fallback
        same_original = (out2 / "Original" / "fx00006" / name).read_bytes()
        assert same_original == (out1 / "Original" / "fx00006" / name).read_bytes()


class TestFailureIsolation:
    def test_missing_frames_fail_only_that_clip(self, tmp_path):
        root = build_input_tree(tmp_path / "input")
        shutil.rmtree(root / "frames" / "fx00006")
        out = tmp_path / "out"
        config = PipelineConfig(
            input_root=root,
            output_root=out,
            tier_set=(TierSpec.original(),),
        )
        summary = run_pipeline(config)
        assert not summary.ok
        assert summary.failed == ["fx00006"]
        assert (out / "Original" / "fx00002" / "frame_00031.png").is_file()
        doc = json.loads((out / "run_metadata.json").read_bytes())
        assert doc["failed_clips"] == ["fx00006"]

    def test_process_clip_never_raises(self, tmp_path):
        record = fixture_record(MINI_SPECS[0])
        result = process_clip(
            record, tmp_path, tmp_path / "o", KEY,
            (TierSpec.original(),), "aes_ctr", False, False,
        )
        assert result.error is not None
        assert "frame directory" in result.error


class TestVerifyRunFindings:
    @pytest.fixture
    def damaged(self, canonical_run, tmp_path):
        out, _ = canonical_run
        copy = tmp_path / "damaged"
        shutil.copytree(out, copy)
        return copy

    def test_deleted_frame_detected(self, damaged):
        target = damaged / "Tier1_Blur" / "fx00006" / "frame_00007.png"
        target.unlink()
        verdict = verify_run(damaged)
        assert not verdict.ok
        assert any("Tier1_Blur/fx00006" in f for f in verdict.findings)
        assert "Tier1_Blur/fx00006/frame_00007.png" in verdict.manifest_report.missing

    def test_truncated_png_detected(self, damaged):
        target = damaged / "Original" / "fx00002" / "frame_00000.png"
        target.write_bytes(target.read_bytes()[:100])
        verdict = verify_run(damaged)
        assert not verdict.ok
        assert any("decode failed" in f for f in verdict.findings)
        assert "Original/fx00002/frame_00000.png" in verdict.manifest_report.mismatched

    def test_wrong_geometry_detected(self, damaged):
        target = damaged / "Original" / "fx00002" / "frame_00001.png"
        small = np.zeros((10, 10, 3), dtype=np.uint8)
        target.write_bytes(encode_png(small))
        verdict = verify_run(damaged)
        assert any("geometry" in f for f in verdict.findings)

    def test_missing_tier_directory_detected(self, damaged):
        shutil.rmtree(damaged / "Tier2_Edge")
        verdict = verify_run(damaged)
        assert any("missing tier directory Tier2_Edge" in f for f in verdict.findings)

    def test_missing_metadata_falls_back_to_default_tiers(self, damaged):
        (damaged / "run_metadata.json").unlink()
        verdict = verify_run(damaged)
        assert any("run_metadata.json" in f for f in verdict.findings)


class TestRunMetadataDocument:
    def test_document_is_deterministic(self, tmp_path):
        config = PipelineConfig(input_root=tmp_path, output_root=tmp_path / "o", key=KEY)
        from privtier.pipeline import RunSummary

        summary = RunSummary(
            clips=2, failed=[], padded_clips=1, frames_written=576,
            frames_skipped=0, null_annotation_frames=2, tier_names=TIER_NAMES,
        )
        assert run_metadata_document(config, summary) == run_metadata_document(config, summary)
