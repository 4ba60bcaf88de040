"""Majority-vote block recovery, recovery curves, dilution accuracy and quality sweeps."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from motifstore.core.motifs import Block, BlockLayout
from motifstore.data.schemas import FilterStatus, Orientation
from motifstore.decoders.base import SlotCalls
from motifstore.decoders.search import ReadScore, score_read_vs_truth

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.95
DEFAULT_QUALITY_THRESHOLDS = (0.0, 10.0, 15.0, 20.0)


# ---------------------------------------------------------------------------
# Votes
# ---------------------------------------------------------------------------


@dataclass
class VoteTable:
    """Per-slot motif vote counts for one block."""

    block_id: int
    address: list[Counter[int]]
    payload: list[Counter[int]]

    @classmethod
    def empty(cls, block_id: int, layout: BlockLayout) -> VoteTable:
        return cls(
            block_id=block_id,
            address=[Counter() for _ in range(layout.n_address_slots)],
            payload=[Counter() for _ in range(layout.n_payload_slots)],
        )

    def slots(self) -> list[Counter[int]]:
        return [*self.address, *self.payload]


def vote_update(table: VoteTable, calls: SlotCalls) -> VoteTable:
    """Add one vote per called slot; absent slots are left alone."""
    counters = table.slots()
    if len(calls.slots) != len(counters):
        msg = f"Read {calls.read_id} has {len(calls.slots)} slots, block {table.block_id} has {len(counters)}"
        raise ValueError(msg)
    for counter, motif in zip(counters, calls.slots, strict=True):
        if motif is not None:
            counter[motif] += 1
    return table


def merge_tables(a: VoteTable, b: VoteTable) -> VoteTable:
    """Counter-wise sum of two tables of the same block."""
    if a.block_id != b.block_id:
        msg = f"Cannot merge votes of blocks {a.block_id} and {b.block_id}"
        raise ValueError(msg)
    return VoteTable(
        block_id=a.block_id,
        address=[x + y for x, y in zip(a.address, b.address, strict=True)],
        payload=[x + y for x, y in zip(a.payload, b.payload, strict=True)],
    )


@dataclass(frozen=True)
class BlockDecision:
    """Voted address motifs and payload subsets; None marks an undecided slot."""

    address: tuple[int | None, ...]
    payload: tuple[tuple[int, ...] | None, ...]

    def matches(self, block: Block) -> list[bool]:
        """Per payload slot: does the decided subset equal the block's subset."""
        return [d is not None and d == p.subset for d, p in zip(self.payload, block.payloads, strict=True)]


def _top(counter: Counter[int], k: int) -> tuple[int, ...] | None:
    if len(counter) < k:
        return None
    ranked = sorted(counter.items(), key=lambda item: (-item[1], item[0]))
    return tuple(sorted(motif for motif, _ in ranked[:k]))


def block_decision(table: VoteTable, layout: BlockLayout) -> BlockDecision:
    """Top-k motifs per payload slot (ties to the lower id), argmax per address slot."""
    address = tuple(top[0] if (top := _top(c, 1)) is not None else None for c in table.address)
    payload = tuple(_top(c, layout.k) for c in table.payload)
    return BlockDecision(address=address, payload=payload)


# ---------------------------------------------------------------------------
# Per-read outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReadOutcome:
    """A decoded read joined with its block and true orientation."""

    read_id: str
    block_id: int
    orientation: Orientation
    status: FilterStatus
    calls: SlotCalls | None
    read_q: float | None = None

    @property
    def votes(self) -> bool:
        return self.status is FilterStatus.RETAINED and self.calls is not None


def _group(outcomes: Iterable[ReadOutcome]) -> dict[int, list[ReadOutcome]]:
    grouped: dict[int, list[ReadOutcome]] = defaultdict(list)
    for outcome in outcomes:
        grouped[outcome.block_id].append(outcome)
    for reads in grouped.values():
        reads.sort(key=lambda r: r.read_id)
    return grouped


def _score(outcome: ReadOutcome, block: Block, layout: BlockLayout) -> ReadScore:
    if outcome.calls is None:
        return ReadScore(detected=0.0, error=0.0, error_defined=False)
    return score_read_vs_truth(outcome.calls, block.slot_sets(), layout)


@dataclass(frozen=True)
class ReadMetrics:
    """Mean detected and error fractions over a set of reads (None when undefined)."""

    reads: int
    detected: float | None
    error: float | None


def read_metrics(
    outcomes: Sequence[ReadOutcome],
    truth_blocks: Mapping[int, Block],
    layout: BlockLayout,
) -> ReadMetrics:
    scores = [_score(o, truth_blocks[o.block_id], layout) for o in outcomes]
    if not scores:
        return ReadMetrics(reads=0, detected=None, error=None)
    errors = [s.error for s in scores if s.error_defined]
    return ReadMetrics(
        reads=len(scores),
        detected=float(np.mean([s.detected for s in scores])),
        error=float(np.mean(errors)) if errors else None,
    )


# ---------------------------------------------------------------------------
# Recovery curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    reads_per_block: int
    mean_reads: float  # mean reads actually consumed per block
    slot_fraction: float
    block_fraction: float


@dataclass(frozen=True)
class BlockOutcome:
    block_id: int
    reads: int
    recovered: bool
    address: tuple[int | None, ...]
    payload: tuple[tuple[int, ...] | None, ...]


@dataclass
class RecoveryReport:
    threshold: float
    curve: list[CurvePoint]
    coverage_to_threshold: float | None
    full_convergence_coverage: float | None
    blocks: list[BlockOutcome]
    retained_fraction: float
    metrics: ReadMetrics
    by_orientation: dict[str, ReadMetrics] = field(default_factory=dict)

    @property
    def recovered_fraction(self) -> float:
        return sum(b.recovered for b in self.blocks) / len(self.blocks) if self.blocks else 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "coverage_to_threshold": _round(self.coverage_to_threshold),
            "full_convergence_coverage": _round(self.full_convergence_coverage),
            "recovered_fraction": _round(self.recovered_fraction),
            "retained_fraction": _round(self.retained_fraction),
            "reads": self.metrics.reads,
            "mean_detected": _round(self.metrics.detected),
            "mean_error": _round(self.metrics.error),
            "by_orientation": {
                name: {"reads": m.reads, "mean_detected": _round(m.detected), "mean_error": _round(m.error)}
                for name, m in self.by_orientation.items()
            },
            "curve": [
                {
                    "reads_per_block": p.reads_per_block,
                    "mean_reads": _round(p.mean_reads),
                    "slot_fraction": _round(p.slot_fraction),
                    "block_fraction": _round(p.block_fraction),
                }
                for p in self.curve
            ],
            "blocks": [
                {
                    "block_id": b.block_id,
                    "reads": b.reads,
                    "recovered": b.recovered,
                    "address": list(b.address),
                    "payload": [list(s) if s is not None else None for s in b.payload],
                }
                for b in self.blocks
            ],
        }


def _round(value: float | None) -> float | None:
    return round(value, 6) if value is not None else None


def _crossing(curve: Sequence[CurvePoint], level: float) -> float | None:
    for point in curve:
        if point.slot_fraction >= level - 1e-12:
            return point.mean_reads
    return None


def recovery_curve(
    outcomes: Iterable[ReadOutcome],
    truth_blocks: Sequence[Block],
    layout: BlockLayout,
    threshold: float = DEFAULT_THRESHOLD,
) -> RecoveryReport:
    """Replay reads per block in read_id order and track how many payload slots the votes get right.

    Every sequenced read counts toward coverage; only retained reads vote.
    Undecided slots count as unrecovered.
    """
    truth = {b.block_id: b for b in truth_blocks}
    outcomes = list(outcomes)
    grouped = _group(outcomes)
    unknown = sorted(set(grouped) - set(truth))
    if unknown:
        msg = f"Reads reference blocks absent from the truth set: {unknown[:5]}"
        raise ValueError(msg)

    max_reads = max((len(r) for r in grouped.values()), default=0)
    n_blocks = len(truth)
    n_payload = layout.n_payload_slots
    # correct[block_index, n] = payload slots right after n reads of that block
    correct = np.zeros((n_blocks, max_reads + 1), dtype=np.int64)
    blocks: list[BlockOutcome] = []
    for row, block in enumerate(sorted(truth.values(), key=lambda b: b.block_id)):
        table = VoteTable.empty(block.block_id, layout)
        reads = grouped.get(block.block_id, [])
        decision = block_decision(table, layout)
        for n, outcome in enumerate(reads, start=1):
            if outcome.votes and outcome.calls is not None:
                vote_update(table, outcome.calls)
                decision = block_decision(table, layout)
            correct[row, n] = sum(decision.matches(block))
        correct[row, len(reads) + 1 :] = correct[row, len(reads)]
        blocks.append(
            BlockOutcome(
                block_id=block.block_id,
                reads=len(reads),
                recovered=all(decision.matches(block)),
                address=decision.address,
                payload=decision.payload,
            )
        )

    counts = np.array([len(grouped.get(b.block_id, [])) for b in sorted(truth.values(), key=lambda b: b.block_id)])
    curve = [
        CurvePoint(
            reads_per_block=n,
            mean_reads=float(np.minimum(counts, n).mean()) if n_blocks else 0.0,
            slot_fraction=float(correct[:, n].sum() / (n_blocks * n_payload)) if n_blocks else 0.0,
            block_fraction=float((correct[:, n] == n_payload).mean()) if n_blocks else 0.0,
        )
        for n in range(max_reads + 1)
    ]

    retained = [o for o in outcomes if o.votes]
    by_orientation = {
        str(orientation): read_metrics([o for o in retained if o.orientation is orientation], truth, layout)
        for orientation in Orientation
    }
    by_orientation["combined"] = read_metrics(retained, truth, layout)
    report = RecoveryReport(
        threshold=threshold,
        curve=curve,
        coverage_to_threshold=_crossing(curve, threshold),
        full_convergence_coverage=_crossing(curve, 1.0),
        blocks=blocks,
        retained_fraction=len(retained) / len(outcomes) if outcomes else 0.0,
        metrics=by_orientation["combined"],
        by_orientation=by_orientation,
    )
    if report.coverage_to_threshold is None:
        logger.warning("Recovery never reached %.0f%% (final %.4f)", threshold * 100, curve[-1].slot_fraction)
    else:
        logger.info("Recovery reached %.0f%% at %.2f reads/block", threshold * 100, report.coverage_to_threshold)
    return report


def reads_to_decide(
    outcomes: Iterable[ReadOutcome],
    truth_blocks: Sequence[Block],
    layout: BlockLayout,
) -> dict[tuple[int, int], int | None]:
    """Per (block, payload slot): the number of block reads after which the slot first decoded correctly."""
    grouped = _group(outcomes)
    result: dict[tuple[int, int], int | None] = {}
    for block in sorted(truth_blocks, key=lambda b: b.block_id):
        table = VoteTable.empty(block.block_id, layout)
        first: list[int | None] = [None] * layout.n_payload_slots
        for n, outcome in enumerate(grouped.get(block.block_id, []), start=1):
            if not outcome.votes or outcome.calls is None:
                continue
            vote_update(table, outcome.calls)
            for slot, ok in enumerate(block_decision(table, layout).matches(block)):
                if ok and first[slot] is None:
                    first[slot] = n
        for slot, n in enumerate(first):
            result[(block.block_id, slot)] = n
    return result


def decoding_accuracy(
    outcomes: Iterable[ReadOutcome],
    truth_blocks: Sequence[Block],
    layout: BlockLayout,
) -> float:
    """Fraction of blocks whose every payload slot is recovered from all their reads."""
    if not truth_blocks:
        return 0.0
    grouped = _group(outcomes)
    recovered = 0
    for block in truth_blocks:
        table = VoteTable.empty(block.block_id, layout)
        for outcome in grouped.get(block.block_id, []):
            if outcome.votes and outcome.calls is not None:
                vote_update(table, outcome.calls)
        recovered += all(block_decision(table, layout).matches(block))
    return recovered / len(truth_blocks)


@dataclass(frozen=True)
class DilutionRow:
    pipeline: str
    coverage: float
    accuracy: float
    reads: int


def dilution_experiment(
    runs: Mapping[tuple[str, float], Sequence[ReadOutcome]],
    truth_blocks: Sequence[Block],
    layout: BlockLayout,
) -> list[DilutionRow]:
    """Decoding accuracy per (pipeline, mean coverage), highest coverage first."""
    rows = [
        DilutionRow(
            pipeline=pipeline,
            coverage=coverage,
            accuracy=decoding_accuracy(outcomes, truth_blocks, layout),
            reads=len(outcomes),
        )
        for (pipeline, coverage), outcomes in runs.items()
    ]
    rows.sort(key=lambda r: (r.pipeline, -r.coverage))
    return rows


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    retained_fraction: float
    detected: float | None
    error: float | None

    @property
    def defined(self) -> bool:
        return self.detected is not None


def quality_sweep(
    outcomes: Sequence[ReadOutcome],
    truth_blocks: Sequence[Block],
    layout: BlockLayout,
    thresholds: Sequence[float] = DEFAULT_QUALITY_THRESHOLDS,
) -> list[SweepRow]:
    """Retain reads with read Q at or above each threshold and score the survivors.

    Reads without a quality score count as Q 0.
    """
    truth = {b.block_id: b for b in truth_blocks}
    rows = []
    for threshold in sorted(thresholds):
        kept = [o for o in outcomes if (o.read_q or 0.0) >= threshold]
        metrics = read_metrics(kept, truth, layout)
        rows.append(
            SweepRow(
                threshold=threshold,
                retained_fraction=len(kept) / len(outcomes) if outcomes else 0.0,
                detected=metrics.detected,
                error=metrics.error,
            )
        )
    return rows


def coupon_collector_expectation(k: int) -> float:
    """Expected draws to see all k members of a uniform mixture: k * H(k)."""
    return k * math.fsum(1.0 / i for i in range(1, k + 1))
