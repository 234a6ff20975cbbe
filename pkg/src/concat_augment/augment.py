"""Temporal-concatenation augmentation.

Three pairing strategies build new training instances by appending one
instance's feature frames (and target tokens) after another's, with no
separator:

* ``self``: every utterance is paired with itself (one repetition).
* ``speaker``: partners are drawn from the anchor's speaker group,
  excluding the anchor; utterances from singleton groups or without a
  speaker label are excluded from the plan.
* ``random``: partners are drawn uniformly from the whole corpus;
  the anchor itself is allowed as partner only when the pool has size 1.

Plans are drawn once per epoch over the entire corpus: every eligible
utterance anchors exactly one augmented instance, so pre-filter the
augmented set is the same size as the eligible original set. Plans are
a pure function of (seed, epoch, strategy, utterance order) and rerun
bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, MaterializationError
from .manifest import SpeakerIndex, Target, Utterance
from .rng import PLAN_STREAM, keyed_rng

STRATEGY_KINDS = ("self", "speaker", "random")

EXCLUDED_SPEAKERLESS = "speakerless"
EXCLUDED_SINGLETON = "singleton-speaker"

PlanEntry = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class Strategy:
    """Concatenation strategy: kind plus arity k (instances per concat)."""

    kind: str
    k: int = 2

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(
                f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}"
            )
        if self.kind == "self" and self.k != 2:
            raise ConfigurationError("self-concatenation repeats once; k must be 2")
        if self.k < 2:
            raise ConfigurationError(f"arity must be >= 2, got {self.k}")


@dataclass(frozen=True)
class TrainingInstance:
    """A training instance with provenance.

    Originals have a single constituent and ``strategy is None``;
    augmented instances record their ordered constituent utterance ids
    and the strategy that created them. ``features`` is filled by
    materialization and stays ``None`` on metadata-only paths (planning,
    filtering, batch composition). ``ordinal`` is the instance's stable
    position in the epoch's post-filter sequence; mask streams key on it.
    """

    constituents: tuple[str, ...]
    n_frames: int
    target: Target
    strategy: str | None = None
    features: np.ndarray | None = field(default=None, compare=False, repr=False)
    ordinal: int | None = field(default=None, compare=False)

    @property
    def is_original(self) -> bool:
        return self.strategy is None


@dataclass(frozen=True)
class EpochPlan:
    """All pairings for one epoch, before materialization."""

    epoch: int
    seed: int
    strategy: Strategy
    pairings: tuple[PlanEntry, ...]
    excluded: tuple[tuple[str, str], ...]

    def canonical_bytes(self) -> bytes:
        """Stable byte serialization, for determinism audits."""
        doc = {
            "epoch": self.epoch,
            "seed": self.seed,
            "strategy": [self.strategy.kind, self.strategy.k],
            "pairings": [[a, list(p)] for a, p in self.pairings],
            "excluded": [list(e) for e in self.excluded],
        }
        return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _gap_partners(rng: np.random.Generator, pool: int, anchor_pos: int, n_partners: int):
    """Uniform draw of partner positions from range(pool) minus anchor_pos.

    Without replacement within the tuple; falls back to with-replacement
    draws when fewer than n_partners candidates exist (degenerate pools
    smaller than the arity).
    """
    if pool <= 1:
        return [anchor_pos] * n_partners
    if n_partners == 1:
        j = int(rng.integers(0, pool - 1))
        return [j + (j >= anchor_pos)]
    if n_partners <= pool - 1:
        draws = rng.choice(pool - 1, size=n_partners, replace=False)
    else:
        draws = rng.integers(0, pool - 1, size=n_partners)
    return [int(j) + (int(j) >= anchor_pos) for j in draws]


def plan_epoch(
    utterances: Sequence[Utterance],
    index: SpeakerIndex | None,
    strategy: Strategy,
    seed: int,
    epoch: int,
) -> EpochPlan:
    """Draw the epoch's pairings over the entire corpus.

    The RNG stream is keyed by (seed, epoch): different epochs yield
    different plans, reruns are bit-identical. Anchors follow the
    utterance list order; every eligible utterance anchors exactly once.

    Raises :class:`ConfigurationError` for the speaker strategy when no
    speaker groups exist.
    """
    if not utterances:
        raise ConfigurationError("cannot plan an epoch over an empty corpus")
    rng = keyed_rng(seed, PLAN_STREAM, epoch)
    ids = [u.id for u in utterances]

    if strategy.kind == "self":
        pairings = tuple((uid, (uid,) * (strategy.k - 1)) for uid in ids)
        return EpochPlan(epoch, seed, strategy, pairings, ())

    if strategy.kind == "random":
        n = len(ids)
        entries: list[PlanEntry] = []
        if strategy.k == 2 and n > 1:
            # vectorized gap trick: j uniform over [0, n-2], skip the anchor slot
            draws = rng.integers(0, n - 1, size=n)
            partner_pos = draws + (draws >= np.arange(n))
            entries = [(ids[i], (ids[int(p)],)) for i, p in enumerate(partner_pos)]
        else:
            for i, uid in enumerate(ids):
                partners = _gap_partners(rng, n, i, strategy.k - 1)
                entries.append((uid, tuple(ids[p] for p in partners)))
        return EpochPlan(epoch, seed, strategy, tuple(entries), ())

    # speaker strategy
    if index is None or len(index.groups) == 0:
        raise ConfigurationError("speaker strategy requires a manifest with speaker labels")
    # Pre-draw partner positions group by group (vectorized for k=2);
    # emission below follows utterance list order.
    group_pos: dict[str, int] = {}
    drawn: dict[str, list[list[int]]] = {}
    for speaker, members in index.groups.items():
        g = len(members)
        if g < 2:
            continue
        if strategy.k == 2:
            draws = rng.integers(0, g - 1, size=g)
            partner_pos = draws + (draws >= np.arange(g))
            drawn[speaker] = [[int(p)] for p in partner_pos]
        else:
            drawn[speaker] = [_gap_partners(rng, g, i, strategy.k - 1) for i in range(g)]

    pairings_list: list[PlanEntry] = []
    excluded: list[tuple[str, str]] = []
    for utt in utterances:
        if utt.speaker_id is None:
            excluded.append((utt.id, EXCLUDED_SPEAKERLESS))
            continue
        members = index.groups[utt.speaker_id]
        if len(members) < 2:
            excluded.append((utt.id, EXCLUDED_SINGLETON))
            continue
        pos = group_pos.setdefault(utt.speaker_id, 0)
        group_pos[utt.speaker_id] = pos + 1
        partners = drawn[utt.speaker_id][pos]
        pairings_list.append((utt.id, tuple(members[p] for p in partners)))
    return EpochPlan(epoch, seed, strategy, tuple(pairings_list), tuple(excluded))


def _join_targets(targets: list[Target]) -> Target:
    # text joins with a single space; token sequences concatenate with
    # no separator symbol of any kind
    if isinstance(targets[0], str):
        return " ".join(targets)  # type: ignore[arg-type]
    joined: tuple[int, ...] = ()
    for t in targets:
        joined = joined + t  # type: ignore[operator]
    return joined


def instance_from_utterance(utt: Utterance) -> TrainingInstance:
    return TrainingInstance(
        constituents=(utt.id,),
        n_frames=utt.n_frames,
        target=utt.target,
        strategy=None,
    )


def instance_from_plan(
    entry: PlanEntry,
    utterances_by_id: Mapping[str, Utterance],
    strategy: Strategy,
) -> TrainingInstance:
    """Metadata-only augmented instance: exact frame and target sums."""
    anchor, partners = entry
    constituents = (anchor, *partners)
    utts = [utterances_by_id[c] for c in constituents]
    return TrainingInstance(
        constituents=constituents,
        n_frames=sum(u.n_frames for u in utts),
        target=_join_targets([u.target for u in utts]),
        strategy=strategy.kind,
    )


def with_features(
    instance: TrainingInstance,
    load_features: Callable[[str], np.ndarray],
) -> TrainingInstance:
    """Materialize: stack constituent feature matrices along time.

    Frame counts come from the loaded matrices, so the frame-additivity
    invariant holds exactly even if a loader reconciled a manifest
    mismatch. Load failures raise :class:`MaterializationError`; the
    pipeline drops the entry with a diagnostic.
    """
    try:
        parts = [np.asarray(load_features(cid)) for cid in instance.constituents]
    except Exception as exc:
        raise MaterializationError(
            f"failed to load features for {instance.constituents}: {exc}"
        ) from exc
    stacked = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)
    return replace(instance, n_frames=int(stacked.shape[0]), features=stacked)


def materialize(
    entry: PlanEntry,
    utterances_by_id: Mapping[str, Utterance],
    load_features: Callable[[str], np.ndarray],
    strategy: Strategy,
) -> TrainingInstance:
    """Turn one plan entry into a concrete augmented instance."""
    return with_features(instance_from_plan(entry, utterances_by_id, strategy), load_features)


@dataclass
class CombineResult:
    instances: list[TrainingInstance]
    dropped_original: int
    dropped_augmented: int


def combine_and_filter(
    original: Iterable[TrainingInstance],
    augmented: Iterable[TrainingInstance],
    max_frames: int = 3000,
) -> CombineResult:
    """Merge originals and augmented, dropping anything over max_frames.

    Originals come first, augmented after (a later keyed shuffle decides
    batch composition). Drop counts are reported per source. Pass an
    empty ``original`` to reproduce the augmented-only ablation.
    """
    if max_frames < 1:
        raise ConfigurationError(f"max_frames must be >= 1, got {max_frames}")
    kept: list[TrainingInstance] = []
    dropped_orig = 0
    dropped_aug = 0
    for inst in original:
        if inst.n_frames > max_frames:
            dropped_orig += 1
        else:
            kept.append(inst)
    for inst in augmented:
        if inst.n_frames > max_frames:
            dropped_aug += 1
        else:
            kept.append(inst)
    return CombineResult(kept, dropped_orig, dropped_aug)
