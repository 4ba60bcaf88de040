"""Direct signal-to-motif caller.

A squiggle is segmented into events, then decoded by a semi-Markov Viterbi over
the layout grammar S0 slot S1 slot ... Sn. Each grammar position consumes a
contiguous run of events aligned to a k-mer level template with stay/step/skip
moves; its length is held to a band around the template length. Both strand
orientations are decoded and the higher path score wins.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from motifstore.core.motifs import BlockLayout, MotifLibrary, complement_reverse
from motifstore.data.schemas import FilterStatus, Orientation, PipelineName, TokenRecord
from motifstore.data.synthsim import PoreModel, Read, Squiggle
from motifstore.decoders.base import DecodeResult, MotifDecoder, SlotCalls
from motifstore.decoders.ctc import EmissionMatrix, TokenAlphabet, quality, read_quality

logger = logging.getLogger(__name__)

NEG = -1e12
MIN_EVENT_PENALTY = 1e-3
MAX_CONFIDENCE = 1.0 - 1e-9


class UnmappableReadError(ValueError):
    """The event sequence cannot be parsed by the layout grammar."""


@dataclass(frozen=True)
class CallerParams:
    """Scoring constants of the caller and its read/token filter."""

    penalty_scale: float = 1.5
    band: float = 0.3
    stay_penalty: float = 2.0
    step_penalty: float = 0.0
    skip_penalty: float = 4.0
    emission_cap: float = 8.0
    confidence_scale: float = 4.0
    prune_margin: float = 40.0
    max_starts: int = 32
    blank_floor: float = 1e-6
    q_cap: float = 60.0
    read_q_min: float = 11.0
    token_p_min: float = 0.85


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Piecewise-constant summary of a squiggle: mean level and sample count per event."""

    levels: np.ndarray
    supports: np.ndarray

    def __len__(self) -> int:
        return int(self.levels.shape[0])

    @property
    def total_support(self) -> int:
        return int(self.supports.sum())


def event_penalty(noise_std: float, n_samples: int, scale: float = 1.5) -> float:
    """Segment penalty scale * sigma^2 * ln(n), floored so noiseless signals still segment."""
    return max(scale * noise_std**2 * math.log(max(n_samples, 2)), MIN_EVENT_PENALTY)


def eventize(squiggle: Squiggle, penalty: float) -> EventSequence:
    """Exact optimal partition under squared error + penalty per segment (pruned exact search)."""
    samples = np.asarray(squiggle.samples, dtype=np.float64)
    n = samples.shape[0]
    if n == 0:
        msg = f"Squiggle {squiggle.read_id!r} has no samples"
        raise ValueError(msg)
    offset = samples.mean()
    centered = samples - offset
    s1 = np.concatenate(([0.0], np.cumsum(centered)))
    s2 = np.concatenate(([0.0], np.cumsum(centered * centered)))

    best = np.empty(n + 1)
    best[0] = -penalty
    previous = np.zeros(n + 1, dtype=np.int64)
    candidates = np.zeros(1, dtype=np.int64)
    for t in range(1, n + 1):
        sums = s1[t] - s1[candidates]
        costs = best[candidates] + (s2[t] - s2[candidates]) - sums * sums / (t - candidates) + penalty
        i = int(np.argmin(costs))
        best[t] = costs[i]
        previous[t] = candidates[i]
        # changepoints that can no longer be optimal are dropped
        candidates = np.append(candidates[costs - penalty <= best[t]], t)

    bounds = [n]
    while bounds[-1] > 0:
        bounds.append(int(previous[bounds[-1]]))
    edges = np.asarray(bounds[::-1], dtype=np.int64)
    supports = np.diff(edges)
    levels = (s1[edges[1:]] - s1[edges[:-1]]) / supports + offset
    return EventSequence(levels=levels, supports=supports)


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GrammarTemplates:
    """Level templates of one strand orientation, in the order the pore reads them.

    Spacer templates cover each spacer's interior k-mers; motif templates are
    slot-specific and cover every k-mer that overlaps the slot, so together they
    tile the whole oligo.
    """

    orientation: Orientation
    spacer_means: np.ndarray  # (n_spacers, l_s - k + 1)
    spacer_stds: np.ndarray
    slot_means: np.ndarray  # (n_slots, M, l + k - 1)
    slot_stds: np.ndarray

    @property
    def n_slots(self) -> int:
        return int(self.slot_means.shape[0])

    @property
    def n_positions(self) -> int:
        return 2 * self.n_slots + 1

    def forward_position(self, position: int) -> int:
        if self.orientation is Orientation.REVERSE:
            return self.n_positions - 1 - position
        return position


@dataclass(frozen=True, eq=False)
class TemplateBank:
    """Templates for both orientations plus the token alphabet they emit into."""

    forward: GrammarTemplates
    reverse: GrammarTemplates
    alphabet: TokenAlphabet
    layout: BlockLayout

    def grammar(self, orientation: Orientation) -> GrammarTemplates:
        return self.forward if orientation is Orientation.FORWARD else self.reverse

    def min_events(self, band: float) -> int:
        spacer_len = self.forward.spacer_means.shape[1]
        slot_len = self.forward.slot_means.shape[2]
        n_slots = self.forward.n_slots
        return (n_slots + 1) * _band(spacer_len, band)[0] + n_slots * _band(slot_len, band)[0]


def _grammar(
    spacers: Sequence[str],
    motifs: Sequence[str],
    n_slots: int,
    pore: PoreModel,
    orientation: Orientation,
) -> GrammarTemplates:
    context = pore.kmer_length - 1
    spacer_means = np.stack([pore.levels(s) for s in spacers])
    spacer_stds = np.stack([pore.level_stds(s) for s in spacers])
    slot_means, slot_stds = [], []
    for slot in range(n_slots):
        left = spacers[slot][len(spacers[slot]) - context :]
        right = spacers[slot + 1][:context]
        slot_means.append(np.stack([pore.levels(left + m + right) for m in motifs]))
        slot_stds.append(np.stack([pore.level_stds(left + m + right) for m in motifs]))
    return GrammarTemplates(
        orientation=orientation,
        spacer_means=spacer_means,
        spacer_stds=spacer_stds,
        slot_means=np.stack(slot_means),
        slot_stds=np.stack(slot_stds),
    )


def build_template_bank(library: MotifLibrary, layout: BlockLayout, pore: PoreModel) -> TemplateBank:
    """Compile forward and reverse-complement grammars from the library and pore model."""
    if library.spacer_length < pore.kmer_length:
        msg = f"Spacer length {library.spacer_length} is shorter than k={pore.kmer_length}"
        raise ValueError(msg)
    spacers = list(library.spacers[: layout.n_spacers])
    motifs = list(library.motifs)
    forward = _grammar(spacers, motifs, layout.n_slots, pore, Orientation.FORWARD)
    reverse = _grammar(
        [complement_reverse(s) for s in reversed(spacers)],
        [complement_reverse(m) for m in motifs],
        layout.n_slots,
        pore,
        Orientation.REVERSE,
    )
    return TemplateBank(
        forward=forward,
        reverse=reverse,
        alphabet=TokenAlphabet(n_motifs=library.n_motifs, n_spacers=layout.n_spacers),
        layout=layout,
    )


# ---------------------------------------------------------------------------
# Semi-Markov Viterbi
# ---------------------------------------------------------------------------


def _band(template_length: int, band: float) -> tuple[int, int]:
    lo = max(1, math.floor(template_length * (1.0 - band)))
    hi = max(lo, math.ceil(template_length * (1.0 + band)))
    return lo, hi


def _emission_scores(
    events: EventSequence,
    means: np.ndarray,
    stds: np.ndarray,
    noise_std: float,
    cap: float,
    pad: int,
) -> np.ndarray:
    """Capped Gaussian log-likelihood of every event against every template level, NEG-padded at the end."""
    n = len(events)
    variance = stds[None] ** 2 + (noise_std**2 / events.supports)[:, None, None]
    z2 = (events.levels[:, None, None] - means[None]) ** 2 / variance
    scores = np.maximum(-0.5 * z2, -cap)
    padded = np.full((n + pad, *means.shape), NEG)
    padded[:n] = scores
    return padded


def _segment_table(
    emissions: np.ndarray,
    starts: np.ndarray,
    base: np.ndarray,
    lo: int,
    hi: int,
    params: CallerParams,
) -> np.ndarray:
    """Best warped alignment score of every alternative template over events [a, a + L).

    Returns shape (len(starts), n_alternatives, hi - lo + 1) with ``base`` added per start.
    """
    n_states = emissions.shape[2]
    skip, stay, step = params.skip_penalty, params.stay_penalty, params.step_penalty
    first = emissions[starts]
    table = np.full((starts.shape[0], emissions.shape[1], n_states), NEG)
    table[:, :, 0] = base[:, None] + first[:, :, 0]
    for s in (1, 2):
        if n_states > s:
            table[:, :, s] = base[:, None] - s * skip + first[:, :, s]
    out = np.full((starts.shape[0], emissions.shape[1], hi - lo + 1), NEG)
    for d in range(hi):
        if d:
            moved = table - stay
            np.maximum(moved[:, :, 1:], table[:, :, :-1] - step, out=moved[:, :, 1:])
            np.maximum(moved[:, :, 2:], table[:, :, :-2] - skip, out=moved[:, :, 2:])
            np.maximum(moved[:, :, 3:], table[:, :, :-3] - 2 * skip, out=moved[:, :, 3:])
            table = np.maximum(moved + emissions[starts + d], NEG)
        if d + 1 >= lo:
            out[:, :, d + 1 - lo] = table[:, :, -1]
    return out


def _prune_starts(scores: np.ndarray, params: CallerParams) -> np.ndarray:
    live = np.flatnonzero(scores > NEG / 2)
    if live.size == 0:
        return live
    live = live[scores[live] >= scores[live].max() - params.prune_margin]
    if live.size > params.max_starts:
        order = np.lexsort((live, -scores[live]))[: params.max_starts]
        live = live[order]
    return np.sort(live)


@dataclass(frozen=True)
class _Segment:
    position: int  # grammar position in decoding orientation
    start: int
    end: int
    choice: int  # alternative index chosen
    scores: np.ndarray  # segment score of every alternative over [start, end)


@dataclass(frozen=True)
class _Path:
    orientation: Orientation
    score: float
    segments: list[_Segment]


def _decode_orientation(
    events: EventSequence,
    grammar: GrammarTemplates,
    noise_std: float,
    params: CallerParams,
) -> _Path | None:
    n = len(events)
    spacer_len = grammar.spacer_means.shape[1]
    slot_len = grammar.slot_means.shape[2]
    spacer_band = _band(spacer_len, params.band)
    slot_band = _band(slot_len, params.band)
    pad = max(spacer_band[1], slot_band[1]) + 1
    spacer_em = _emission_scores(events, grammar.spacer_means, grammar.spacer_stds, noise_std, params.emission_cap, pad)
    slot_em = [
        _emission_scores(events, grammar.slot_means[i], grammar.slot_stds[i], noise_std, params.emission_cap, pad)
        for i in range(grammar.n_slots)
    ]

    prefix = np.full(n + 1, NEG)
    prefix[0] = 0.0
    pointers: list[tuple[np.ndarray, np.ndarray]] = []
    tables: list[tuple[np.ndarray, np.ndarray, np.ndarray, int]] = []
    for position in range(grammar.n_positions):
        if position % 2 == 0:
            emissions = spacer_em[:, position // 2 : position // 2 + 1]
            lo, hi = spacer_band
        else:
            emissions = slot_em[position // 2]
            lo, hi = slot_band
        starts = _prune_starts(prefix, params)
        if starts.size == 0:
            return None
        base = prefix[starts]
        out = _segment_table(emissions, starts, base, lo, hi, params)
        choice = out.argmax(axis=1)
        total = out.max(axis=1)
        ends = starts[:, None] + np.arange(lo, hi + 1)[None, :]
        from_start = np.broadcast_to(starts[:, None], ends.shape)
        valid = (ends <= n) & (total > NEG / 2)

        end_f, total_f, start_f, choice_f = ends[valid], total[valid], from_start[valid], choice[valid]
        # best total per end; ties go to the earlier start
        order = np.lexsort((start_f, -total_f, end_f))
        unique_ends, first = np.unique(end_f[order], return_index=True)
        picked = order[first]

        prefix = np.full(n + 1, NEG)
        prefix[unique_ends] = total_f[picked]
        back_start = np.full(n + 1, -1, dtype=np.int64)
        back_choice = np.full(n + 1, -1, dtype=np.int64)
        back_start[unique_ends] = start_f[picked]
        back_choice[unique_ends] = choice_f[picked]
        pointers.append((back_start, back_choice))
        tables.append((starts, base, out, lo))

    if prefix[n] <= NEG / 2:
        return None

    segments: list[_Segment] = []
    end = n
    for position in range(grammar.n_positions - 1, -1, -1):
        back_start, back_choice = pointers[position]
        start = int(back_start[end])
        choice = int(back_choice[end])
        if position % 2 == 0:
            # rescore the span against every spacer for a runner-up
            length = end - start
            scores = _segment_table(spacer_em, np.array([start]), np.zeros(1), length, length, params)[0, :, 0]
            choice = position // 2
        else:
            starts, base, out, lo = tables[position]
            row = int(np.searchsorted(starts, start))
            scores = out[row, :, end - start - lo] - base[row]
        segments.append(_Segment(position=position, start=start, end=end, choice=choice, scores=scores))
        end = start
    segments.reverse()
    return _Path(orientation=grammar.orientation, score=float(prefix[n]), segments=segments)


# ---------------------------------------------------------------------------
# Calls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalledToken:
    """A decoded token in forward molecule order."""

    token: int
    confidence: float
    span: tuple[int, int]  # emission-matrix rows
    position: int  # grammar position: even = spacer, odd = slot
    gap: float  # score margin over the runner-up alternative

    @property
    def is_motif(self) -> bool:
        return self.position % 2 == 1

    @property
    def slot(self) -> int | None:
        return self.position // 2 if self.is_motif else None


@dataclass(frozen=True)
class MotifCall:
    """Decoded token sequence of one read; read_q is the mean Q of its motif tokens."""

    read_id: str
    orientation: Orientation
    tokens: tuple[CalledToken, ...]
    read_q: float
    score: float

    def motif_tokens(self) -> list[CalledToken]:
        return [t for t in self.tokens if t.is_motif]

    def slot_calls(self, layout: BlockLayout) -> SlotCalls:
        slots: list[int | None] = [None] * layout.n_slots
        for token in self.motif_tokens():
            slots[token.position // 2] = token.token
        return SlotCalls(read_id=self.read_id, slots=tuple(slots), orientation=self.orientation, score=self.score)

    def token_records(self, q_cap: float) -> list[TokenRecord]:
        return [
            TokenRecord(
                token=t.token,
                confidence=round(t.confidence, 9),
                quality=round(quality(t.confidence, q_cap), 6),
            )
            for t in self.tokens
        ]


def _logistic(x: float) -> float:
    return float(np.exp(-np.logaddexp(0.0, -x)))


def _confidence(gap: float, scale: float) -> float:
    return min(_logistic(gap / scale), MAX_CONFIDENCE)


def viterbi_call(
    events: EventSequence,
    bank: TemplateBank,
    layout: BlockLayout,
    noise_std: float,
    params: CallerParams | None = None,
    read_id: str = "",
) -> tuple[MotifCall, EmissionMatrix]:
    """Decode both orientations, keep the better path, and synthesize one emission row per grammar position.

    Each token's confidence is a logistic of its score margin over the runner-up
    alternative at the same span. Its emission row puts that confidence on the
    chosen token, spreads the rest over the alternatives by score and reserves a
    small blank floor.
    """
    params = params or CallerParams()
    if layout != bank.layout:
        msg = "Template bank was built for a different layout"
        raise ValueError(msg)
    if len(events) < bank.min_events(params.band):
        msg = f"Read {read_id!r}: {len(events)} events, grammar needs at least {bank.min_events(params.band)}"
        raise UnmappableReadError(msg)

    paths = [_decode_orientation(events, bank.grammar(o), noise_std, params) for o in Orientation]
    found = [p for p in paths if p is not None]
    if not found:
        msg = f"Read {read_id!r}: no grammar parse in either orientation"
        raise UnmappableReadError(msg)
    path = max(found, key=lambda p: p.score)
    grammar = bank.grammar(path.orientation)
    alphabet = bank.alphabet
    n_spacers = grammar.n_slots + 1

    rows = np.zeros((grammar.n_positions, alphabet.size))
    tokens: list[CalledToken] = []
    for segment in path.segments:
        forward_position = grammar.forward_position(segment.position)
        if segment.position % 2 == 0:
            to_forward = [
                j if path.orientation is Orientation.FORWARD else n_spacers - 1 - j for j in range(len(segment.scores))
            ]
            columns = [alphabet.spacer_token(j) for j in to_forward]
        else:
            columns = [alphabet.motif_token(m) for m in range(len(segment.scores))]
        chosen = segment.scores[segment.choice]
        others = np.delete(segment.scores, segment.choice)
        gap = float(chosen - others.max())
        confidence = _confidence(gap, params.confidence_scale)

        row = rows[forward_position]
        weights = np.exp((others - others.max()) / params.confidence_scale)
        weights /= weights.sum()
        other_columns = [c for i, c in enumerate(columns) if i != segment.choice]
        row[other_columns] = (1.0 - confidence) * (1.0 - params.blank_floor) * weights
        row[columns[segment.choice]] = confidence * (1.0 - params.blank_floor)
        row[alphabet.blank] = params.blank_floor
        tokens.append(
            CalledToken(
                token=columns[segment.choice],
                confidence=confidence,
                span=(forward_position, forward_position + 1),
                position=forward_position,
                gap=gap,
            )
        )

    tokens.sort(key=lambda t: t.position)
    emissions = EmissionMatrix.from_unnormalized(rows)
    motif_confidences = [t.confidence for t in tokens if t.is_motif]
    call = MotifCall(
        read_id=read_id,
        orientation=path.orientation,
        tokens=tuple(tokens),
        read_q=read_quality(motif_confidences, params.q_cap),
        score=path.score,
    )
    return call, emissions


# ---------------------------------------------------------------------------
# Filtering and calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterOutcome:
    """Result of the token/read quality filter with its retention statistics."""

    call: MotifCall | None  # None when the read is rejected
    status: FilterStatus
    tokens_in: int
    tokens_kept: int
    read_q: float  # mean Q of surviving motif tokens


def filter_call(
    call: MotifCall,
    read_q_min: float = 11.0,
    token_p_min: float = 0.85,
    q_cap: float = 60.0,
) -> FilterOutcome:
    """Treat tokens under ``token_p_min`` as blanks and reject reads whose survivors average under ``read_q_min``."""
    kept = tuple(t for t in call.tokens if t.confidence >= token_p_min)
    survivors = [t.confidence for t in kept if t.is_motif]
    read_q = read_quality(survivors, q_cap)
    if not survivors or read_q < read_q_min:
        return FilterOutcome(None, FilterStatus.FILTERED, len(call.tokens), len(kept), read_q)
    filtered = replace(call, tokens=kept, read_q=read_q)
    return FilterOutcome(filtered, FilterStatus.RETAINED, len(call.tokens), len(kept), read_q)


def calibrate_confidence_scale(
    gaps: Sequence[float],
    correct: Sequence[bool],
    grid: Sequence[float] | None = None,
) -> float:
    """Logistic scale minimizing the log loss of token correctness given score gaps."""
    if len(gaps) != len(correct) or not gaps:
        msg = "Calibration needs equally many gaps and labels, at least one"
        raise ValueError(msg)
    grid = list(grid) if grid is not None else list(np.geomspace(0.25, 64.0, 49))
    x = np.asarray(gaps, dtype=np.float64)
    y = np.asarray(correct, dtype=np.float64)
    losses = []
    for scale in grid:
        p = np.clip(np.exp(-np.logaddexp(0.0, -x / scale)), 1e-12, 1.0 - 1e-12)
        losses.append(float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    best = int(np.argmin(losses))
    logger.info("Calibrated confidence scale %.4g (log loss %.4g)", grid[best], losses[best])
    return float(grid[best])


def calibration_pairs(call: MotifCall, truth_motifs: Sequence[int]) -> list[tuple[float, bool]]:
    """(gap, correct) for every motif token against the molecule's true slot motifs."""
    return [(t.gap, t.token == truth_motifs[t.position // 2]) for t in call.motif_tokens()]


class ViterbiCallerDecoder(MotifDecoder):
    def __init__(
        self,
        bank: TemplateBank,
        noise_std: float,
        params: CallerParams | None = None,
    ) -> None:
        self._bank = bank
        self._noise_std = noise_std
        self._params = params or CallerParams()

    @property
    def name(self) -> PipelineName:
        return PipelineName.CALLER

    @property
    def requires_squiggles(self) -> bool:
        return True

    @property
    def requires_reads(self) -> bool:
        return False

    def call(self, squiggle: Squiggle) -> tuple[MotifCall, EmissionMatrix]:
        penalty = event_penalty(self._noise_std, len(squiggle), self._params.penalty_scale)
        events = eventize(squiggle, penalty)
        return viterbi_call(events, self._bank, self._bank.layout, self._noise_std, self._params, squiggle.read_id)

    def decode(self, read: Read | None, squiggle: Squiggle | None) -> DecodeResult:
        if squiggle is None:
            raise self._missing("squiggle")
        try:
            call, emissions = self.call(squiggle)
        except UnmappableReadError as exc:
            logger.warning("%s", exc)
            return DecodeResult(read_id=squiggle.read_id, status=FilterStatus.UNMAPPABLE, calls=None)
        outcome = filter_call(call, self._params.read_q_min, self._params.token_p_min, self._params.q_cap)
        # rejected reads still carry their token-filtered slots
        kept = tuple(t for t in call.tokens if t.confidence >= self._params.token_p_min)
        return DecodeResult(
            read_id=squiggle.read_id,
            status=outcome.status,
            calls=replace(call, tokens=kept).slot_calls(self._bank.layout),
            tokens=tuple(call.token_records(self._params.q_cap)),
            read_q=outcome.read_q,
            emissions=emissions,
        )
