"""
Full pipeline
=============

Synthesize a small corpus on disk, run two epochs end to end (plan ->
filter -> mask -> batch -> emit), and show that a rerun is
byte-identical. The same thing is available from the shell:

    concat-augment run --manifest corpus/train.tsv --strategy random \
        --seed 11 --epochs 2 --budget 4000 --audio-root corpus \
        --out out --specaugment on
"""

import tempfile
from pathlib import Path

import numpy as np

from concat_augment import (
    FeatureConfig,
    MaskPolicy,
    PipelineConfig,
    Strategy,
    read_batch_file,
    run,
)
from concat_augment.pipeline import format_summary


def write_corpus(root: Path, n: int, rng: np.random.Generator) -> Path:
    cfg = FeatureConfig()
    root.mkdir(parents=True)
    rows = ["id\taudio\tn_frames\ttgt_text\tspeaker"]
    for i in range(n):
        n_frames = int(rng.integers(10, 60))
        samples = cfg.win_samples + (n_frames - 1) * cfg.hop_samples
        np.save(root / f"u{i:03d}.npy", rng.uniform(-0.5, 0.5, size=samples))
        tokens = " ".join(str(t) for t in rng.integers(0, 400, size=5))
        rows.append(f"u{i:03d}\tu{i:03d}.npy\t{n_frames}\t{tokens}\tspk{i % 6}")
    manifest = root / "train.tsv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    manifest = write_corpus(tmp / "corpus", 40, np.random.default_rng(11))

    def launch(out_dir: Path):
        return run(
            PipelineConfig(
                manifest_path=manifest,
                out_dir=out_dir,
                audio_root=manifest.parent,
                strategy=Strategy("random"),
                seed=11,
                epochs=2,
                budget_frames=4000,
                specaugment=MaskPolicy(),
            )
        )

    report = launch(tmp / "out_a")
    print(format_summary(report))

    first = sorted((tmp / "out_a" / "epoch-000").glob("*.cabx"))[0]
    batch = read_batch_file(first)
    print(f"\nfirst batch: B={batch.size}, T_max={batch.t_max}, "
          f"F={batch.features.shape[2]}, padded mass {batch.padded_frames}")

    launch(tmp / "out_b")
    pairs = zip(
        sorted((tmp / "out_a").rglob("*.cabx")), sorted((tmp / "out_b").rglob("*.cabx"))
    )
    identical = all(a.read_bytes() == b.read_bytes() for a, b in pairs)
    print(f"rerun byte-identical: {identical}")
