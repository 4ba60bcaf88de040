"""Baseline motif inference on base-level reads: zero-error matching and approximate-matching search."""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field

from motifstore.core.align import banded_edit_distance
from motifstore.core.motifs import BlockLayout, MotifLibrary, complement_reverse
from motifstore.data.schemas import FilterStatus, Orientation, PipelineName
from motifstore.data.synthsim import Read, Squiggle
from motifstore.decoders.base import DecodeResult, MotifDecoder, SlotCalls

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchParams:
    """Tuning knobs of the search pipelines (none of them come from measured data)."""

    k_idx: int = 8
    min_support: int = 3
    merge_window: int = 10
    refine_window: int = 5
    indel_tol: int = 5
    margin_min: int = 2
    diagonal_slack: int = 2
    ze_flank_tolerance: int = 2
    # reads with fewer bases are filtered before searching
    min_read_length: int = 0


@dataclass(frozen=True)
class ReadScore:
    """Per-read detection against the pre-synthesis truth."""

    detected: float
    error: float
    error_defined: bool  # False when the read called nothing


def _orient(bases: str) -> list[tuple[Orientation, str]]:
    return [(Orientation.FORWARD, bases), (Orientation.REVERSE, complement_reverse(bases))]


def _find_all(seq: str, pattern: str) -> list[int]:
    hits = []
    start = seq.find(pattern)
    while start != -1:
        hits.append(start)
        start = seq.find(pattern, start + 1)
    return hits


# ---------------------------------------------------------------------------
# Zero-error search
# ---------------------------------------------------------------------------


def _ze_oriented(
    seq: str,
    library: MotifLibrary,
    layout: BlockLayout,
    tolerance: int,
) -> tuple[int, list[int | None]]:
    spacer_hits = [_find_all(seq, spacer) for spacer in library.spacers[: layout.n_spacers]]
    n_hits = sum(len(h) for h in spacer_hits)
    l, l_s = library.motif_length, library.spacer_length
    best: list[tuple[int, int] | None] = [None] * layout.n_slots
    for motif_id, motif in enumerate(library.motifs):
        for p in _find_all(seq, motif):
            for slot in range(layout.n_slots):
                gaps = [abs(p - (q + l_s)) for q in spacer_hits[slot]]
                gaps += [abs(r - (p + l)) for r in spacer_hits[slot + 1]]
                near = [g for g in gaps if g <= tolerance]
                if not near:
                    continue
                candidate = (min(near), motif_id)
                current = best[slot]
                if current is None or candidate < current:
                    best[slot] = candidate
    return n_hits, [b[1] if b is not None else None for b in best]


def ze_search(read: Read | str, library: MotifLibrary, layout: BlockLayout, flank_tolerance: int = 2) -> SlotCalls:
    """Exact motif matches assigned to slots by an adjacent exact spacer match on either flank.

    Both orientations are searched; the one with more exact spacer hits wins.
    """
    bases = read.bases if isinstance(read, Read) else read
    read_id = read.read_id if isinstance(read, Read) else ""
    scored = []
    for orientation, seq in _orient(bases):
        n_hits, slots = _ze_oriented(seq, library, layout, flank_tolerance)
        scored.append((-n_hits, seq, orientation, slots))
    neg_hits, _, orientation, slots = min(scored, key=lambda item: (item[0], item[1]))
    return SlotCalls(read_id=read_id, slots=tuple(slots), orientation=orientation, score=float(-neg_hits))


# ---------------------------------------------------------------------------
# Approximate-matching search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpacerIndex:
    """k-mer -> (spacer position, offset within spacer) postings over all spacers."""

    k: int
    postings: dict[str, tuple[tuple[int, int], ...]]
    spacers: tuple[str, ...]

    @property
    def n_postings(self) -> int:
        return sum(len(p) for p in self.postings.values())


def build_spacer_index(library: MotifLibrary, k_idx: int = 8) -> SpacerIndex:
    """Index every k-mer of every spacer; shared k-mers keep one posting per occurrence."""
    if not 1 <= k_idx <= library.spacer_length:
        msg = f"k_idx={k_idx} must be in [1, spacer length {library.spacer_length}]"
        raise ValueError(msg)
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for position, spacer in enumerate(library.spacers):
        for offset in range(len(spacer) - k_idx + 1):
            postings[spacer[offset : offset + k_idx]].append((position, offset))
    return SpacerIndex(
        k=k_idx,
        postings={kmer: tuple(p) for kmer, p in sorted(postings.items())},
        spacers=library.spacers,
    )


@dataclass
class SpacerCandidate:
    """A putative spacer occurrence in the read."""

    spacer: int
    offset: float
    support: int
    corrected_offset: int = 0


@dataclass
class Chain:
    """Spacer candidates with consecutive positions and motif-sized gaps, plus their segment calls."""

    candidates: list[SpacerCandidate]
    calls: dict[int, int | None] = field(default_factory=dict)  # slot -> motif id
    score: int = 0

    @property
    def start(self) -> int:
        return self.candidates[0].corrected_offset

    def end(self, spacer_length: int) -> int:
        return self.candidates[-1].corrected_offset + spacer_length


def _raw_candidates(seq: str, index: SpacerIndex, slack: int) -> list[SpacerCandidate]:
    """k-mer hits grouped per spacer into diagonal bands of nearly equal implied start."""
    implied: dict[int, list[int]] = defaultdict(list)
    for p in range(len(seq) - index.k + 1):
        for spacer, offset in index.postings.get(seq[p : p + index.k], ()):
            implied[spacer].append(p - offset)
    candidates = []
    for spacer in sorted(implied):
        starts = sorted(implied[spacer])
        band = [starts[0]]
        for start in starts[1:]:
            if start - band[-1] <= slack:
                band.append(start)
                continue
            candidates.append(SpacerCandidate(spacer, sum(band) / len(band), len(band)))
            band = [start]
        candidates.append(SpacerCandidate(spacer, sum(band) / len(band), len(band)))
    return candidates


def _merge(candidates: list[SpacerCandidate], window: int) -> list[SpacerCandidate]:
    """Merge same-spacer candidates within ``window`` bases at their support-weighted mean offset."""
    merged: list[SpacerCandidate] = []
    for cand in sorted(candidates, key=lambda c: (c.spacer, c.offset)):
        last = merged[-1] if merged else None
        if last is not None and last.spacer == cand.spacer and cand.offset - last.offset <= window:
            support = last.support + cand.support
            last.offset = (last.offset * last.support + cand.offset * cand.support) / support
            last.support = support
        else:
            merged.append(SpacerCandidate(cand.spacer, cand.offset, cand.support))
    return merged


def _window_mismatches(seq: str, pos: int, spacer: str) -> int:
    mismatches = 0
    for i, base in enumerate(spacer):
        j = pos + i
        if j < 0 or j >= len(seq) or seq[j] != base:
            mismatches += 1
    return mismatches


def _refine(seq: str, cand: SpacerCandidate, spacer: str, window: int) -> int:
    """Shift within +-window minimizing Hamming distance to the spacer; ties favour the smaller shift."""
    center = round(cand.offset)
    shifts = sorted(range(-window, window + 1), key=lambda s: (abs(s), s))
    return min(shifts, key=lambda s: (_window_mismatches(seq, center + s, spacer), abs(s), s)) + center


def _align_segment(
    segment: str,
    library: MotifLibrary,
    band: int,
    margin_min: int,
) -> tuple[int | None, int]:
    """Best motif for a between-spacer segment (or None without a clear margin) and its score l - d."""
    ranked = sorted(
        (banded_edit_distance(segment, motif, band), motif_id) for motif_id, motif in enumerate(library.motifs)
    )
    best_distance, best_motif = ranked[0]
    runner_up = ranked[1][0] if len(ranked) > 1 else best_distance + margin_min
    score = max(0, library.motif_length - best_distance)
    if runner_up - best_distance < margin_min:
        return None, score
    return best_motif, score


def _chains(
    seq: str,
    candidates: list[SpacerCandidate],
    library: MotifLibrary,
    layout: BlockLayout,
    params: SearchParams,
) -> list[Chain]:
    l, l_s = library.motif_length, library.spacer_length
    by_spacer: dict[int, list[SpacerCandidate]] = defaultdict(list)
    for cand in candidates:
        by_spacer[cand.spacer].append(cand)

    successor: dict[int, SpacerCandidate] = {}
    for cand in candidates:
        options = []
        for nxt in by_spacer.get(cand.spacer + 1, []):
            gap = nxt.corrected_offset - (cand.corrected_offset + l_s)
            if abs(gap - l) <= params.indel_tol:
                options.append((abs(gap - l), -nxt.support, nxt.corrected_offset, nxt))
        if options:
            successor[id(cand)] = min(options, key=lambda o: o[:3])[3]

    pointed = {id(s) for s in successor.values()}
    chains = []
    for head in sorted(candidates, key=lambda c: (c.corrected_offset, c.spacer)):
        if id(head) in pointed or id(head) not in successor:
            continue
        members = [head]
        while id(members[-1]) in successor:
            members.append(successor[id(members[-1])])
        chain = Chain(candidates=members)
        for left, right in itertools.pairwise(members):
            slot = left.spacer
            if slot >= layout.n_slots:
                continue
            segment = seq[left.corrected_offset + l_s : right.corrected_offset]
            motif, score = _align_segment(segment, library, 2 * params.indel_tol, params.margin_min)
            chain.calls[slot] = motif
            chain.score += score
        chains.append(chain)
    return chains


def _keep_best_per_overlap(chains: list[Chain], spacer_length: int) -> list[Chain]:
    """Group chains whose read spans overlap and keep only the highest mapping score per group."""
    kept: list[Chain] = []
    group: list[Chain] = []
    group_end: int | None = None
    for chain in sorted(chains, key=lambda c: (c.start, -c.score)):
        if group_end is not None and chain.start < group_end:
            group.append(chain)
            group_end = max(group_end, chain.end(spacer_length))
            continue
        if group:
            kept.append(min(group, key=lambda c: (-c.score, c.start, -len(c.candidates))))
        group = [chain]
        group_end = chain.end(spacer_length)
    if group:
        kept.append(min(group, key=lambda c: (-c.score, c.start, -len(c.candidates))))
    return kept


def _am_oriented(
    seq: str,
    index: SpacerIndex,
    library: MotifLibrary,
    layout: BlockLayout,
    params: SearchParams,
) -> tuple[int, list[int | None]]:
    raw = _raw_candidates(seq, index, params.diagonal_slack)
    strong = [c for c in raw if c.support >= params.min_support]
    merged = _merge(strong, params.merge_window)
    for cand in merged:
        cand.corrected_offset = _refine(seq, cand, index.spacers[cand.spacer], params.refine_window)
    chains = _keep_best_per_overlap(_chains(seq, merged, library, layout, params), library.spacer_length)

    slots: list[int | None] = [None] * layout.n_slots
    filled = [False] * layout.n_slots
    for chain in sorted(chains, key=lambda c: (-c.score, c.start)):
        for slot, motif in chain.calls.items():
            if not filled[slot]:
                slots[slot] = motif
                filled[slot] = True
    return sum(c.score for c in chains), slots


def am_search(
    read: Read | str,
    index: SpacerIndex,
    library: MotifLibrary,
    layout: BlockLayout,
    params: SearchParams | None = None,
) -> SlotCalls:
    """Spacer seeding, merging, position refinement, chaining and per-segment motif alignment.

    Both orientations are decoded; the higher total mapping score wins and ties go
    to the lexicographically smaller oriented sequence, so a read and its reverse
    complement give the same slot calls.
    """
    params = params or SearchParams()
    if index.spacers != library.spacers or index.k != params.k_idx:
        msg = "Spacer index was not built from this library with the configured k_idx"
        raise ValueError(msg)
    bases = read.bases if isinstance(read, Read) else read
    read_id = read.read_id if isinstance(read, Read) else ""
    scored = []
    for orientation, seq in _orient(bases):
        score, slots = _am_oriented(seq, index, library, layout, params)
        scored.append((-score, seq, orientation, slots))
    neg_score, _, orientation, slots = min(scored, key=lambda item: (item[0], item[1]))
    return SlotCalls(read_id=read_id, slots=tuple(slots), orientation=orientation, score=float(-neg_score))


# ---------------------------------------------------------------------------
# Scoring and pipeline wrappers
# ---------------------------------------------------------------------------


def score_read_vs_truth(calls: SlotCalls, truth: Sequence[frozenset[int]], layout: BlockLayout) -> ReadScore:
    """Payload-slot detection and error fractions against per-slot truth sets (address slots ignored)."""
    payload = range(layout.n_address_slots, layout.n_slots)
    called = [s for s in payload if calls.slots[s] is not None]
    correct = sum(1 for s in called if calls.slots[s] in truth[s])
    detected = correct / layout.n_payload_slots
    if not called:
        return ReadScore(detected=detected, error=0.0, error_defined=False)
    return ReadScore(detected=detected, error=(len(called) - correct) / len(called), error_defined=True)


def passes_length_gate(read: Read, min_read_length: int) -> bool:
    """Whether the read is long enough to be searched."""
    return len(read.bases) >= min_read_length


class ZeroErrorDecoder(MotifDecoder):
    def __init__(self, library: MotifLibrary, layout: BlockLayout, params: SearchParams | None = None) -> None:
        self._library = library
        self._layout = layout
        self._params = params or SearchParams()

    @property
    def name(self) -> PipelineName:
        return PipelineName.ZE

    def decode(self, read: Read | None, squiggle: Squiggle | None) -> DecodeResult:
        if read is None:
            raise self._missing("base-level read")
        if not passes_length_gate(read, self._params.min_read_length):
            return DecodeResult(read_id=read.read_id, status=FilterStatus.FILTERED, calls=None)
        calls = ze_search(read, self._library, self._layout, self._params.ze_flank_tolerance)
        return DecodeResult(read_id=read.read_id, status=FilterStatus.RETAINED, calls=calls)


class ApproximateMatchDecoder(MotifDecoder):
    def __init__(self, library: MotifLibrary, layout: BlockLayout, params: SearchParams | None = None) -> None:
        self._library = library
        self._layout = layout
        self._params = params or SearchParams()
        self._index = build_spacer_index(library, self._params.k_idx)

    @property
    def name(self) -> PipelineName:
        return PipelineName.AM

    def decode(self, read: Read | None, squiggle: Squiggle | None) -> DecodeResult:
        if read is None:
            raise self._missing("base-level read")
        if not passes_length_gate(read, self._params.min_read_length):
            return DecodeResult(read_id=read.read_id, status=FilterStatus.FILTERED, calls=None)
        calls = am_search(read, self._index, self._library, self._layout, self._params)
        return DecodeResult(read_id=read.read_id, status=FilterStatus.RETAINED, calls=calls)
