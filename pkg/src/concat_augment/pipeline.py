"""Per-epoch orchestration: plan, filter, batch, mask, emit, report.

Planning, filtering and batch composition run on manifest metadata only
(frame counts are exactly additive under concatenation), so the full
augmented corpus is never resident in memory. Features are materialized
lazily per batch through a bounded LRU loader, masked, collated, and
written by a single writer in plan order; a configurable worker pool
overlaps materialization with writing without ever reordering batches.

Reports are JSON; all wall-clock measurements live under ``timings_s``
keys so reproducibility checks can strip them.
"""

from __future__ import annotations

import json
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from threading import Lock
from typing import Callable, Iterator

from .archive import FeatureArchive
from .augment import (
    CombineResult,
    EpochPlan,
    Strategy,
    TrainingInstance,
    combine_and_filter,
    instance_from_plan,
    instance_from_utterance,
    plan_epoch,
    with_features,
)
from .batching import Batch, compose_batches, pad_and_collate, padding_waste
from .batchio import StreamWriter, write_batch_file
from .errors import ConfigurationError, MaterializationError, PipelineError
from .features import FeatureConfig, load_or_compute
from .manifest import (
    ParseResult,
    SpeakerIndex,
    Utterance,
    build_speaker_index,
    ingestion_report,
    load_manifest,
)
from .rng import MASK_STREAM, keyed_rng
from .specaugment import MaskPolicy, apply_masks

WORKERS_ENV_VAR = "CONCAT_AUGMENT_WORKERS"

EMIT_MODES = ("files", "stream")


@dataclass
class PipelineConfig:
    manifest_path: str | Path
    out_dir: str | Path | None = None
    report_path: str | Path | None = None
    corpus_mode: str = "tokens"
    strategy: Strategy = field(default_factory=lambda: Strategy("random"))
    seed: int = 0
    epochs: int = 1
    max_frames: int = 3000
    budget_frames: int = 40000
    include_original: bool = True
    specaugment: MaskPolicy | None = None
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    bucketing: bool = True
    accounting: str = "padded"
    emit: str = "files"
    target_pad_id: int = 0
    audio_root: str | Path | None = None
    archive_dir: str | Path | None = None
    feature_cache_size: int = 256
    workers: int | None = None  # None -> CONCAT_AUGMENT_WORKERS or 1

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        env = os.environ.get(WORKERS_ENV_VAR)
        if env:
            return max(1, int(env))
        return 1

    def summary(self) -> dict:
        return {
            "manifest": str(self.manifest_path),
            "corpus_mode": self.corpus_mode,
            "strategy": self.strategy.kind,
            "arity": self.strategy.k,
            "seed": self.seed,
            "epochs": self.epochs,
            "max_frames": self.max_frames,
            "budget_frames": self.budget_frames,
            "include_original": self.include_original,
            "specaugment": None
            if self.specaugment is None
            else {
                "freq_param": self.specaugment.freq_param,
                "time_param": self.specaugment.time_param,
                "n_freq_masks": self.specaugment.n_freq_masks,
                "n_time_masks": self.specaugment.n_time_masks,
                "mask_value": self.specaugment.mask_value,
            },
            "feature": {
                "sample_rate_hz": self.feature.sample_rate_hz,
                "n_mels": self.feature.n_mels,
                "win_ms": self.feature.win_ms,
                "hop_ms": self.feature.hop_ms,
                "fft_size": self.feature.n_fft,
                "log_floor": self.feature.log_floor,
                "mean_var_norm": self.feature.mean_var_norm,
            },
            "bucketing": self.bucketing,
            "accounting": self.accounting,
            "emit": self.emit,
            "target_pad_id": self.target_pad_id,
        }


@dataclass
class AuditReport:
    """Machine-readable run summary; one entry per epoch."""

    config: dict
    ingestion: dict
    epochs: list[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "config": self.config,
            "ingestion": self.ingestion,
            "epochs": self.epochs,
            "totals": self.totals,
            "diagnostics": self.diagnostics,
            "timings_s": self.timings_s,
        }
        if self.error is not None:
            doc["error"] = self.error
        return doc

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def check_consistency(self) -> None:
        """Assert the count identities every epoch entry must satisfy."""
        for ep in self.epochs:
            planned = ep["planned"]
            if planned != ep["materialized"] + ep["materialization_failures"]:
                raise AssertionError(f"epoch {ep['epoch']}: planned != materialized + failures")
            survivors = sum(ep["strategy_histogram"].values())
            failed = ep["materialization_failures"] + ep["failed_originals"]
            if ep["emitted_instances"] != survivors - failed:
                raise AssertionError(f"epoch {ep['epoch']}: emitted != survivors - failures")


@dataclass
class _Prepared:
    parse: ParseResult
    utterances: list[Utterance]
    by_id: dict[str, Utterance]
    index: SpeakerIndex
    load: Callable | None
    archive: FeatureArchive | None


def _prepare(config: PipelineConfig, with_loader: bool) -> _Prepared:
    try:
        parse = load_manifest(config.manifest_path, config.corpus_mode)
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest: {exc}") from exc
    utterances = parse.utterances
    if not utterances:
        raise ConfigurationError(f"manifest {config.manifest_path} has no accepted utterances")
    by_id = {u.id: u for u in utterances}
    index = build_speaker_index(utterances)

    archive = None
    load = None
    if with_loader:
        if config.archive_dir is not None:
            archive = FeatureArchive(config.archive_dir, mode="a")
            lock = Lock()  # the archive permits a single writer

            def fetch(utt_id: str):
                with lock:
                    return load_or_compute(
                        by_id[utt_id], config.feature, cache=archive, audio_root=config.audio_root
                    )

        else:

            def fetch(utt_id: str):
                return load_or_compute(
                    by_id[utt_id], config.feature, audio_root=config.audio_root
                )

        load = lru_cache(maxsize=config.feature_cache_size)(fetch)

    return _Prepared(parse, utterances, by_id, index, load, archive)


def _plan_and_filter(
    prepared: _Prepared, config: PipelineConfig, epoch: int
) -> tuple[EpochPlan, CombineResult, list[TrainingInstance]]:
    plan = plan_epoch(prepared.utterances, prepared.index, config.strategy, config.seed, epoch)
    originals = (
        [instance_from_utterance(u) for u in prepared.utterances]
        if config.include_original
        else []
    )
    augmented = [instance_from_plan(e, prepared.by_id, config.strategy) for e in plan.pairings]
    combined = combine_and_filter(originals, augmented, config.max_frames)
    survivors = [replace(inst, ordinal=i) for i, inst in enumerate(combined.instances)]
    return plan, combined, survivors


@dataclass
class _BuiltBatch:
    batch: Batch | None
    failed_original: int
    failed_augmented: int
    diagnostics: list[str]


def _build_batch(
    group: list[TrainingInstance],
    config: PipelineConfig,
    epoch: int,
    load: Callable,
) -> _BuiltBatch:
    kept = []
    failed_original = 0
    failed_augmented = 0
    diagnostics = []
    for inst in group:
        try:
            materialized = with_features(inst, load)
        except MaterializationError as exc:
            if inst.is_original:
                failed_original += 1
            else:
                failed_augmented += 1
            diagnostics.append(f"epoch {epoch}: dropped {inst.constituents}: {exc}")
            continue
        if config.specaugment is not None:
            rng = keyed_rng(config.seed, MASK_STREAM, epoch, inst.ordinal)
            materialized = replace(
                materialized, features=apply_masks(materialized.features, config.specaugment, rng)
            )
        kept.append(materialized)
    batch = pad_and_collate(kept, config.target_pad_id) if kept else None
    return _BuiltBatch(batch, failed_original, failed_augmented, diagnostics)


_EXHAUSTED = object()


def _ordered_pool_map(fn, items, workers: int):
    """Map with a worker pool, yielding results strictly in input order.

    The in-flight window is bounded (2x workers) so producers stall
    instead of racing ahead of the writer.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    items = iter(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        while len(pending) < 2 * workers:
            item = next(items, _EXHAUSTED)
            if item is _EXHAUSTED:
                break
            pending.append(pool.submit(fn, item))
        while pending:
            done = pending.popleft()
            item = next(items, _EXHAUSTED)
            if item is not _EXHAUSTED:
                pending.append(pool.submit(fn, item))
            yield done.result()


def iter_epoch_batches(
    config: PipelineConfig, epoch: int, prepared: _Prepared | None = None
) -> Iterator[Batch]:
    """Yield one epoch's collated (and masked) batches in plan order.

    Library-level access to the exact batches ``run`` would emit,
    including provenance ids, without writing anything.
    """
    if prepared is None:
        prepared = _prepare(config, with_loader=True)
    _, _, survivors = _plan_and_filter(prepared, config, epoch)
    groups = compose_batches(
        survivors, config.budget_frames, config.seed, epoch, config.bucketing, config.accounting
    )
    workers = config.resolved_workers()

    def build(group):
        return _build_batch(group, config, epoch, prepared.load)

    for built in _ordered_pool_map(build, groups, workers):
        if built.batch is not None:
            yield built.batch


def _epoch_stats(
    epoch: int,
    plan: EpochPlan,
    combined: CombineResult,
    survivors: list[TrainingInstance],
    n_originals: int,
) -> dict:
    histogram: dict[str, int] = {}
    for inst in survivors:
        key = inst.strategy or "original"
        histogram[key] = histogram.get(key, 0) + 1
    return {
        "epoch": epoch,
        "planned": len(plan.pairings),
        "excluded_by_strategy": len(plan.excluded),
        "originals_in": n_originals,
        "dropped_by_filter": {
            "original": combined.dropped_original,
            "augmented": combined.dropped_augmented,
        },
        "materialized": len(plan.pairings),
        "materialization_failures": 0,
        "failed_originals": 0,
        "emitted_instances": len(survivors),
        "total_frames_emitted": sum(i.n_frames for i in survivors),
        "strategy_histogram": histogram,
        "batch_count": 0,
        "padding_waste": 0.0,
        "timings_s": {},
    }


def _run_or_audit(config: PipelineConfig, emit_artifacts: bool) -> AuditReport:
    if config.emit not in EMIT_MODES:
        raise ConfigurationError(f"unknown emit mode {config.emit!r}")
    if emit_artifacts and config.out_dir is None:
        raise ConfigurationError("run requires an output directory")

    started = time.perf_counter()
    prepared = _prepare(config, with_loader=emit_artifacts)
    report = AuditReport(
        config=config.summary(),
        ingestion=ingestion_report(prepared.parse, prepared.index),
    )
    out_dir = Path(config.out_dir) if config.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            plan, combined, survivors = _plan_and_filter(prepared, config, epoch)
            t_plan = time.perf_counter()
            groups = compose_batches(
                survivors,
                config.budget_frames,
                config.seed,
                epoch,
                config.bucketing,
                config.accounting,
            )
            t_compose = time.perf_counter()

            n_orig = len(prepared.utterances) if config.include_original else 0
            stats = _epoch_stats(epoch, plan, combined, survivors, n_orig)

            if emit_artifacts:
                failed_aug = 0
                failed_orig = 0
                emitted = 0
                padded_mass = 0
                true_mass = 0
                batch_index = 0
                writer = None
                if config.emit == "stream":
                    writer = StreamWriter(out_dir / f"epoch-{epoch:03d}.cabxs")
                else:
                    (out_dir / f"epoch-{epoch:03d}").mkdir(exist_ok=True)

                def build(group, _epoch=epoch):
                    return _build_batch(group, config, _epoch, prepared.load)

                try:
                    for built in _ordered_pool_map(build, groups, config.resolved_workers()):
                        failed_aug += built.failed_augmented
                        failed_orig += built.failed_original
                        report.diagnostics.extend(built.diagnostics)
                        if built.batch is None:
                            continue
                        batch = built.batch
                        if config.emit == "stream":
                            writer.write(batch)
                        else:
                            write_batch_file(
                                batch,
                                out_dir / f"epoch-{epoch:03d}" / f"batch-{batch_index:05d}.cabx",
                            )
                        emitted += batch.size
                        padded_mass += batch.padded_frames
                        true_mass += sum(batch.feature_lengths)
                        batch_index += 1
                finally:
                    if writer is not None:
                        writer.close()
                stats["materialization_failures"] = failed_aug
                stats["failed_originals"] = failed_orig
                stats["materialized"] = len(plan.pairings) - failed_aug
                stats["emitted_instances"] = emitted
                stats["total_frames_emitted"] = true_mass
                stats["batch_count"] = batch_index
                stats["padding_waste"] = (
                    (padded_mass - true_mass) / padded_mass if padded_mass else 0.0
                )
            else:
                stats["batch_count"] = len(groups)
                stats["padding_waste"] = padding_waste(groups)

            t_end = time.perf_counter()
            stats["timings_s"] = {
                "plan_and_filter": t_plan - t0,
                "compose": t_compose - t_plan,
                "materialize_and_emit": t_end - t_compose,
            }
            report.epochs.append(stats)
    except PipelineError as exc:
        report.error = str(exc)
        _write_report(report, config, out_dir)
        raise

    finally:
        if prepared.archive is not None:
            prepared.archive.close()

    report.totals = {
        "epochs": len(report.epochs),
        "batches": sum(e["batch_count"] for e in report.epochs),
        "emitted_instances": sum(e["emitted_instances"] for e in report.epochs),
        "total_frames_emitted": sum(e["total_frames_emitted"] for e in report.epochs),
        "materialization_failures": sum(e["materialization_failures"] for e in report.epochs),
    }
    report.timings_s["total"] = time.perf_counter() - started
    _write_report(report, config, out_dir)
    return report


def _write_report(report: AuditReport, config: PipelineConfig, out_dir: Path | None) -> None:
    path = config.report_path
    if path is None and out_dir is not None:
        path = out_dir / "report.json"
    if path is not None:
        report.write(path)


def run(config: PipelineConfig) -> AuditReport:
    """Plan, materialize, mask, batch and write every epoch; report.

    Emits batch artifacts in the configured binary format plus a JSON
    report. All emitted bytes are a pure function of (manifest, config,
    seed); only the report's ``timings_s`` fields vary between reruns.
    """
    return _run_or_audit(config, emit_artifacts=True)


def audit(config: PipelineConfig) -> AuditReport:
    """Dry run: identical planning, filtering and batch composition,
    with frame counts taken from the manifest and no feature I/O."""
    return _run_or_audit(config, emit_artifacts=False)


def format_summary(report: AuditReport) -> str:
    """Human-readable digest of a report, one line per epoch."""
    lines = [
        "{strategy} x{arity} seed={seed} mode={corpus_mode} "
        "budget={budget_frames} max_frames={max_frames}".format(**report.config),
        "ingestion: accepted={accepted} skipped={skipped} speakerless={speakerless} "
        "singleton_speakers={singleton_speakers}".format(**report.ingestion),
    ]
    for ep in report.epochs:
        dropped = ep["dropped_by_filter"]
        lines.append(
            f"epoch {ep['epoch']}: planned={ep['planned']} "
            f"excluded={ep['excluded_by_strategy']} "
            f"filtered orig/aug={dropped['original']}/{dropped['augmented']} "
            f"emitted={ep['emitted_instances']} batches={ep['batch_count']} "
            f"waste={ep['padding_waste']:.3f} frames={ep['total_frames_emitted']}"
        )
    if report.error:
        lines.append(f"FATAL: {report.error}")
    return "\n".join(lines)
