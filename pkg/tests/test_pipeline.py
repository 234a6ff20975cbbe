import json
import os

import numpy as np
import pytest

from concat_augment.augment import Strategy
from concat_augment.batchio import iter_stream, read_batch_file
from concat_augment.cli import main as cli_main
from concat_augment.errors import ConfigurationError
from concat_augment.pipeline import (
    PipelineConfig,
    audit,
    format_summary,
    iter_epoch_batches,
    run,
)
from concat_augment.specaugment import MaskPolicy

from conftest import manifest_text, write_audio_corpus


def strip_timings(doc):
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k != "timings_s"}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def read_tree(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "report.json"
    }


class TestRun:
    def test_two_utterance_self_concat_emits_four(self, tmp_path):
        rng = np.random.default_rng(0)
        manifest = write_audio_corpus(tmp_path / "c", 2, rng, n_speakers=1)
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out",
            audio_root=manifest.parent,
            strategy=Strategy("self"),
            seed=3,
            epochs=1,
        )
        report = run(config)
        assert report.epochs[0]["emitted_instances"] == 4  # 2 originals + 2 self-concats
        report.check_consistency()

    def test_reruns_are_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        manifest = write_audio_corpus(tmp_path / "c", 20, rng, n_speakers=4)

        def one_run(out):
            config = PipelineConfig(
                manifest_path=manifest,
                out_dir=out,
                audio_root=manifest.parent,
                strategy=Strategy("random"),
                seed=11,
                epochs=2,
                budget_frames=600,
                specaugment=MaskPolicy(),
            )
            return run(config)

        r1 = one_run(tmp_path / "out1")
        r2 = one_run(tmp_path / "out2")
        assert read_tree(tmp_path / "out1") == read_tree(tmp_path / "out2")
        assert strip_timings(r1.to_dict()) == strip_timings(r2.to_dict())

    def test_report_written_with_expected_fields(self, tmp_path):
        rng = np.random.default_rng(2)
        manifest = write_audio_corpus(tmp_path / "c", 6, rng, n_speakers=2)
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out",
            audio_root=manifest.parent,
            strategy=Strategy("speaker"),
            epochs=1,
        )
        report = run(config)
        doc = json.loads((tmp_path / "out" / "report.json").read_text())
        assert doc["ingestion"]["accepted"] == 6
        epoch = doc["epochs"][0]
        for key in (
            "planned",
            "excluded_by_strategy",
            "dropped_by_filter",
            "materialized",
            "materialization_failures",
            "emitted_instances",
            "batch_count",
            "padding_waste",
            "total_frames_emitted",
            "strategy_histogram",
            "timings_s",
        ):
            assert key in epoch
        assert doc["totals"]["batches"] == report.epochs[0]["batch_count"]
        assert format_summary(report)

    def test_emitted_files_decode_and_respect_budget(self, tmp_path):
        rng = np.random.default_rng(3)
        manifest = write_audio_corpus(tmp_path / "c", 15, rng)
        budget = 500
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out",
            audio_root=manifest.parent,
            seed=5,
            epochs=1,
            budget_frames=budget,
        )
        report = run(config)
        files = sorted((tmp_path / "out" / "epoch-000").glob("batch-*.cabx"))
        assert len(files) == report.epochs[0]["batch_count"]
        total = 0
        for path in files:
            batch = read_batch_file(path)
            assert batch.padded_frames <= budget
            assert batch.features.shape[2] == 80
            total += batch.features.shape[0]
        assert total == report.epochs[0]["emitted_instances"]

    def test_stream_emit_mode(self, tmp_path):
        rng = np.random.default_rng(4)
        manifest = write_audio_corpus(tmp_path / "c", 8, rng)
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out",
            audio_root=manifest.parent,
            epochs=1,
            emit="stream",
            budget_frames=400,
        )
        report = run(config)
        batches = list(iter_stream(tmp_path / "out" / "epoch-000.cabxs"))
        assert len(batches) == report.epochs[0]["batch_count"]

    def test_missing_audio_dropped_with_diagnostic(self, tmp_path):
        rng = np.random.default_rng(5)
        manifest = write_audio_corpus(tmp_path / "c", 5, rng, n_speakers=1)
        os.remove(manifest.parent / "u000002.npy")
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out",
            audio_root=manifest.parent,
            strategy=Strategy("self"),
            epochs=1,
        )
        report = run(config)
        # the broken utterance fails as an original and inside its self-concat
        assert report.epochs[0]["failed_originals"] == 1
        assert report.epochs[0]["materialization_failures"] == 1
        assert report.epochs[0]["emitted_instances"] == 8
        assert any("u000002" in d for d in report.diagnostics)
        report.check_consistency()

    def test_worker_pool_does_not_change_bytes(self, tmp_path):
        rng = np.random.default_rng(6)
        manifest = write_audio_corpus(tmp_path / "c", 16, rng)

        def one_run(out, workers):
            config = PipelineConfig(
                manifest_path=manifest,
                out_dir=out,
                audio_root=manifest.parent,
                seed=9,
                epochs=1,
                budget_frames=600,
                specaugment=MaskPolicy(),
                workers=workers,
            )
            run(config)

        one_run(tmp_path / "o1", workers=1)
        one_run(tmp_path / "o2", workers=4)
        assert read_tree(tmp_path / "o1") == read_tree(tmp_path / "o2")

    def test_workers_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONCAT_AUGMENT_WORKERS", "3")
        assert PipelineConfig(manifest_path="x").resolved_workers() == 3
        monkeypatch.delenv("CONCAT_AUGMENT_WORKERS")
        assert PipelineConfig(manifest_path="x").resolved_workers() == 1

    def test_archive_cache_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        manifest = write_audio_corpus(tmp_path / "c", 6, rng)
        config = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out1",
            audio_root=manifest.parent,
            archive_dir=tmp_path / "arch",
            seed=2,
            epochs=1,
            budget_frames=600,
        )
        run(config)
        # second run served from the archive produces identical artifacts
        config2 = PipelineConfig(
            manifest_path=manifest,
            out_dir=tmp_path / "out2",
            audio_root=manifest.parent,
            archive_dir=tmp_path / "arch",
            seed=2,
            epochs=1,
            budget_frames=600,
        )
        run(config2)
        assert read_tree(tmp_path / "out1") == read_tree(tmp_path / "out2")


class TestAudit:
    def test_audit_matches_run_counts(self, tmp_path):
        rng = np.random.default_rng(8)
        manifest = write_audio_corpus(tmp_path / "c", 10, rng, n_speakers=3)
        common = dict(
            manifest_path=manifest,
            audio_root=manifest.parent,
            strategy=Strategy("speaker"),
            seed=4,
            epochs=2,
            budget_frames=600,
        )
        audited = audit(PipelineConfig(**common))
        ran = run(PipelineConfig(out_dir=tmp_path / "out", **common))
        for ea, er in zip(audited.epochs, ran.epochs):
            assert ea["planned"] == er["planned"]
            assert ea["dropped_by_filter"] == er["dropped_by_filter"]
            assert ea["excluded_by_strategy"] == er["excluded_by_strategy"]
            assert ea["batch_count"] == er["batch_count"]

    def test_speaker_strategy_without_speakers_is_fatal(self, tmp_path):
        rows = [(f"u{i}", f"u{i}.npy", 10, "1 2", "") for i in range(4)]
        manifest = tmp_path / "m.tsv"
        manifest.write_text(manifest_text(rows), encoding="utf-8")
        config = PipelineConfig(manifest_path=manifest, strategy=Strategy("speaker"))
        with pytest.raises(ConfigurationError):
            audit(config)

    def test_audit_needs_no_audio(self, tmp_path):
        rows = [(f"u{i}", f"missing{i}.wav", 100 + i, "1 2 3", "s") for i in range(50)]
        manifest = tmp_path / "m.tsv"
        manifest.write_text(manifest_text(rows), encoding="utf-8")
        report = audit(PipelineConfig(manifest_path=manifest, seed=1, epochs=3))
        assert report.totals["epochs"] == 3
        report.check_consistency()


class TestAblation:
    def test_no_original_leaves_no_single_utterance_instances(self, tmp_path):
        rng = np.random.default_rng(9)
        manifest = write_audio_corpus(tmp_path / "c", 10, rng)
        config = PipelineConfig(
            manifest_path=manifest,
            audio_root=manifest.parent,
            include_original=False,
            seed=6,
            epochs=1,
            budget_frames=600,
        )
        for batch in iter_epoch_batches(config, epoch=0):
            for provenance in batch.instance_ids:
                assert len(provenance) == 2

    def test_default_ratio_one_to_one(self, tmp_path):
        rng = np.random.default_rng(10)
        manifest = write_audio_corpus(tmp_path / "c", 12, rng)
        report = audit(
            PipelineConfig(manifest_path=manifest, audio_root=manifest.parent, epochs=1)
        )
        epoch = report.epochs[0]
        assert epoch["planned"] == epoch["originals_in"] - epoch["excluded_by_strategy"]

    def test_self_only_histogram(self, tmp_path):
        rng = np.random.default_rng(11)
        manifest = write_audio_corpus(tmp_path / "c", 5, rng)
        report = audit(
            PipelineConfig(
                manifest_path=manifest,
                strategy=Strategy("self"),
                include_original=False,
                epochs=1,
            )
        )
        assert set(report.epochs[0]["strategy_histogram"]) == {"self"}


class TestCli:
    def test_run_and_audit_commands(self, tmp_path, capsys):
        rng = np.random.default_rng(12)
        manifest = write_audio_corpus(tmp_path / "c", 6, rng, n_speakers=2)
        code = cli_main(
            [
                "run",
                "--manifest", str(manifest),
                "--strategy", "random",
                "--seed", "7",
                "--epochs", "2",
                "--budget", "600",
                "--max-frames", "3000",
                "--audio-root", str(manifest.parent),
                "--out", str(tmp_path / "out"),
                "--specaugment", "on",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "epoch 0:" in out and "epoch 1:" in out
        assert (tmp_path / "out" / "report.json").exists()
        assert any((tmp_path / "out" / "epoch-000").glob("*.cabx"))

        code = cli_main(
            ["audit", "--manifest", str(manifest), "--report", str(tmp_path / "a.json")]
        )
        assert code == 0
        assert json.loads((tmp_path / "a.json").read_text())["epochs"]

    def test_no_original_flag(self, tmp_path, capsys):
        rng = np.random.default_rng(13)
        manifest = write_audio_corpus(tmp_path / "c", 4, rng)
        code = cli_main(
            ["audit", "--manifest", str(manifest), "--no-original",
             "--report", str(tmp_path / "r.json")]
        )
        assert code == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert "original" not in doc["epochs"][0]["strategy_histogram"]

    def test_fatal_error_exit_code(self, tmp_path, capsys):
        rows = [("u1", "a.npy", 10, "1", "")]
        manifest = tmp_path / "m.tsv"
        manifest.write_text(manifest_text(rows), encoding="utf-8")
        code = cli_main(["audit", "--manifest", str(manifest), "--strategy", "speaker"])
        assert code == 1
        assert "fatal" in capsys.readouterr().err

    def test_missing_manifest_exit_code(self, tmp_path, capsys):
        code = cli_main(["audit", "--manifest", str(tmp_path / "nope.tsv")])
        assert code == 1
        assert "manifest" in capsys.readouterr().err

    def test_partial_report_on_fatal(self, tmp_path):
        rows = [("u1", "a.npy", 10, "1", "")]
        manifest = tmp_path / "m.tsv"
        manifest.write_text(manifest_text(rows), encoding="utf-8")
        report_path = tmp_path / "partial.json"
        code = cli_main(
            ["audit", "--manifest", str(manifest), "--strategy", "speaker",
             "--report", str(report_path)]
        )
        assert code == 1
        assert "error" in json.loads(report_path.read_text())
