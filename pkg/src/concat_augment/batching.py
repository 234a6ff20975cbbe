"""Frame-budget batch assembly.

Instances are shuffled by a keyed RNG, optionally stable-sorted into
length buckets (width 100 frames), packed greedily under the budget,
and the batch order is shuffled by the same stream. The default budget
accounting is padded (B * T_max <= budget), since padded frame mass is
what memory scales with; summed true frames is available as a switch.

Text-mode targets are collated as Unicode code points so the padded
target tensor is always integer-valued; true lengths recover the exact
original sequences either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import TrainingInstance
from .errors import BatchingError
from .rng import BATCH_STREAM, keyed_rng

BUCKET_WIDTH_FRAMES = 100

ACCOUNTING_MODES = ("padded", "true")


@dataclass
class Batch:
    """Padded feature tensor plus target sequences and true lengths."""

    features: np.ndarray  # B x T_max x F, float32, zero-padded
    feature_lengths: list[int]
    targets: np.ndarray  # B x L_max, int64, pad-filled
    target_lengths: list[int]
    target_pad_id: int
    instance_ids: list[tuple[str, ...]] | None = None

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def t_max(self) -> int:
        return self.features.shape[1]

    @property
    def padded_frames(self) -> int:
        return self.size * self.t_max


@dataclass
class EpochStream:
    """All batches of one epoch; each surviving instance appears once."""

    batches: list[Batch]
    seed: int
    epoch: int
    groups: list[list[TrainingInstance]] = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter(self.batches)

    def __len__(self) -> int:
        return len(self.batches)


def _target_codes(target) -> list[int]:
    if isinstance(target, str):
        return [ord(ch) for ch in target]
    return list(target)


def compose_batches(
    instances: Sequence[TrainingInstance],
    budget_frames: int,
    seed: int,
    epoch: int,
    bucketing: bool = True,
    accounting: str = "padded",
) -> list[list[TrainingInstance]]:
    """Decide batch membership from metadata only (no features needed).

    Deterministic for fixed (seed, epoch, input order). Raises
    :class:`BatchingError` when any single instance exceeds the budget.
    """
    if accounting not in ACCOUNTING_MODES:
        raise BatchingError(f"unknown accounting mode {accounting!r}")
    for inst in instances:
        if inst.n_frames > budget_frames:
            raise BatchingError(
                f"instance {inst.constituents} has {inst.n_frames} frames, "
                f"over the budget of {budget_frames}"
            )
    if not instances:
        return []

    rng = keyed_rng(seed, BATCH_STREAM, epoch)
    order = rng.permutation(len(instances))
    shuffled = [instances[i] for i in order]
    if bucketing:
        # stable sort keeps the shuffled order inside each bucket
        shuffled.sort(key=lambda inst: inst.n_frames // BUCKET_WIDTH_FRAMES)

    groups: list[list[TrainingInstance]] = []
    current: list[TrainingInstance] = []
    current_max = 0
    current_sum = 0
    for inst in shuffled:
        if current:
            if accounting == "padded":
                fits = (len(current) + 1) * max(current_max, inst.n_frames) <= budget_frames
            else:
                fits = current_sum + inst.n_frames <= budget_frames
            if not fits:
                groups.append(current)
                current, current_max, current_sum = [], 0, 0
        current.append(inst)
        current_max = max(current_max, inst.n_frames)
        current_sum += inst.n_frames
    if current:
        groups.append(current)

    batch_order = rng.permutation(len(groups))
    return [groups[i] for i in batch_order]


def pad_and_collate(group: Sequence[TrainingInstance], target_pad_id: int = 0) -> Batch:
    """Zero-pad features to T_max and pad targets to L_max.

    Every instance must carry materialized features with one consistent
    feature dimension. De-padding via the recorded lengths reconstructs
    the originals bit-exactly.
    """
    if not group:
        raise BatchingError("cannot collate an empty group")
    for inst in group:
        if inst.features is None:
            raise BatchingError(f"instance {inst.constituents} has no materialized features")
    dims = {inst.features.shape[1] for inst in group}
    if len(dims) != 1:
        raise BatchingError(f"inconsistent feature dimensions in batch: {sorted(dims)}")
    (n_bins,) = dims

    feature_lengths = [int(inst.features.shape[0]) for inst in group]
    t_max = max(feature_lengths)
    features = np.zeros((len(group), t_max, n_bins), dtype=np.float32)
    for row, inst in enumerate(group):
        features[row, : feature_lengths[row]] = inst.features

    codes = [_target_codes(inst.target) for inst in group]
    target_lengths = [len(c) for c in codes]
    targets = np.full((len(group), max(target_lengths)), target_pad_id, dtype=np.int64)
    for row, seq in enumerate(codes):
        targets[row, : len(seq)] = seq

    return Batch(
        features=features,
        feature_lengths=feature_lengths,
        targets=targets,
        target_lengths=target_lengths,
        target_pad_id=target_pad_id,
        instance_ids=[inst.constituents for inst in group],
    )


def make_batches(
    instances: Sequence[TrainingInstance],
    budget_frames: int,
    seed: int,
    epoch: int,
    bucketing: bool = True,
    accounting: str = "padded",
    target_pad_id: int = 0,
) -> EpochStream:
    """Compose and collate one epoch of batches (features required)."""
    groups = compose_batches(instances, budget_frames, seed, epoch, bucketing, accounting)
    batches = [pad_and_collate(g, target_pad_id) for g in groups]
    return EpochStream(batches=batches, seed=seed, epoch=epoch, groups=groups)


def padding_waste(groups: Sequence[Sequence[TrainingInstance]]) -> float:
    """Fraction of padded frame mass that is padding, over composed groups."""
    padded = 0
    true = 0
    for group in groups:
        t_max = max(inst.n_frames for inst in group)
        padded += len(group) * t_max
        true += sum(inst.n_frames for inst in group)
    if padded == 0:
        return 0.0
    return (padded - true) / padded
