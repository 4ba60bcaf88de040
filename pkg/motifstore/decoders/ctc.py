"""CTC mathematics over emission matrices: collapse, loss, gradient, greedy and prefix-beam decoding.

All probability arithmetic is in log space. Emission rows are distributions over
an alphabet whose last index is the blank token.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

NEG_INF = -math.inf
ROW_SUM_TOLERANCE = 1e-9
DEFAULT_Q_CAP = 60.0


class CTCInfeasibleError(ValueError):
    """The target cannot be emitted within the available windows."""


@dataclass(frozen=True)
class TokenAlphabet:
    """Motif ids 0..M-1, then one token per spacer position, then the blank."""

    n_motifs: int
    n_spacers: int = 0

    @property
    def size(self) -> int:
        return self.n_motifs + self.n_spacers + 1

    @property
    def blank(self) -> int:
        return self.size - 1

    def motif_token(self, motif_id: int) -> int:
        return motif_id

    def spacer_token(self, position: int) -> int:
        return self.n_motifs + position

    def is_motif(self, token: int) -> bool:
        return 0 <= token < self.n_motifs

    def label(self, token: int) -> str:
        if token == self.blank:
            return "φ"
        if self.is_motif(token):
            return f"M{token}"
        return f"S{token - self.n_motifs}"


@dataclass(frozen=True, eq=False)
class EmissionMatrix:
    """T' x |alphabet| matrix of per-window token probabilities."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.probs.ndim != 2 or self.probs.shape[1] < 2:
            msg = f"Emission matrix must be 2-D with at least 2 columns, got shape {self.probs.shape}"
            raise ValueError(msg)
        if np.any(self.probs < 0):
            msg = "Emission probabilities must be non-negative"
            raise ValueError(msg)
        sums = self.probs.sum(axis=1)
        if self.probs.shape[0] and np.max(np.abs(sums - 1.0)) > ROW_SUM_TOLERANCE:
            msg = f"Emission rows must sum to 1 (max deviation {np.max(np.abs(sums - 1.0)):.3g})"
            raise ValueError(msg)

    @classmethod
    def from_unnormalized(cls, weights: np.ndarray) -> EmissionMatrix:
        """Normalize non-negative row weights into probabilities."""
        weights = np.asarray(weights, dtype=np.float64)
        return cls(weights / weights.sum(axis=1, keepdims=True))

    @property
    def n_windows(self) -> int:
        return int(self.probs.shape[0])

    @property
    def n_tokens(self) -> int:
        return int(self.probs.shape[1])

    @property
    def blank(self) -> int:
        return self.n_tokens - 1

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def collapse(path: Sequence[int], blank: int) -> list[int]:
    """Merge runs of equal tokens, then drop blanks."""
    return [token for token, _ in itertools.groupby(path) if token != blank]


def min_windows(target: Sequence[int]) -> int:
    """Shortest alignment length for a target: one window per token plus a blank between repeats."""
    repeats = sum(1 for a, b in itertools.pairwise(target) if a == b)
    return len(target) + repeats


def _extended(target: Sequence[int], blank: int) -> tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved target and the mask of states reachable by a two-state skip."""
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = np.asarray(target, dtype=np.int64)
    skip = np.zeros(ext.shape[0], dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return ext, skip


def _check_target(log_probs: np.ndarray, target: Sequence[int], blank: int) -> None:
    if any(t == blank for t in target):
        msg = "CTC targets must not contain the blank token"
        raise ValueError(msg)
    if any(not 0 <= t < log_probs.shape[1] for t in target):
        msg = f"Target token outside alphabet of size {log_probs.shape[1]}"
        raise ValueError(msg)


def _alpha(log_probs: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = log_probs.shape[0], ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        one = np.concatenate(([NEG_INF], prev[:-1]))
        two = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))[:S]
        two = np.where(skip, two, NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(prev, one), two) + log_probs[t, ext]
    return alpha


def _beta(log_probs: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = log_probs.shape[0], ext.shape[0]
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    skip_from = np.concatenate((skip[2:], [False, False]))[:S]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        one = np.concatenate((nxt[1:], [NEG_INF]))
        two = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))[:S]
        two = np.where(skip_from, two, NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(nxt, one), two) + log_probs[t, ext]
    return beta


def ctc_forward(log_probs: np.ndarray, target: Sequence[int], blank: int | None = None) -> float:
    """Negative log probability of ``target`` summed over all alignments.

    Returns ``math.inf`` when the target cannot fit in the available windows.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    blank = log_probs.shape[1] - 1 if blank is None else blank
    _check_target(log_probs, target, blank)
    T = log_probs.shape[0]
    if T == 0 or T < min_windows(target):
        return math.inf
    ext, skip = _extended(target, blank)
    last = _alpha(log_probs, ext, skip)[T - 1]
    total = last[-1] if last.shape[0] == 1 else np.logaddexp(last[-1], last[-2])
    if total == NEG_INF:
        return math.inf
    return float(-total)


def ctc_gradient(log_probs: np.ndarray, target: Sequence[int], blank: int | None = None) -> np.ndarray:
    """Gradient of :func:`ctc_forward` with respect to the pre-softmax logits of each row.

    ``log_probs`` must be row-normalized (the log-softmax of those logits).
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    blank = log_probs.shape[1] - 1 if blank is None else blank
    _check_target(log_probs, target, blank)
    T = log_probs.shape[0]
    if T == 0 or T < min_windows(target):
        msg = f"Target of length {len(target)} needs {min_windows(target)} windows, got {T}"
        raise CTCInfeasibleError(msg)
    ext, skip = _extended(target, blank)
    alpha = _alpha(log_probs, ext, skip)
    beta = _beta(log_probs, ext, skip)
    last = alpha[T - 1]
    log_total = last[-1] if last.shape[0] == 1 else np.logaddexp(last[-1], last[-2])
    if log_total == NEG_INF:
        msg = "Target has zero probability under these emissions"
        raise CTCInfeasibleError(msg)

    emitted = log_probs[:, ext]
    with np.errstate(invalid="ignore"):
        through = np.where(np.isneginf(emitted), NEG_INF, alpha + beta - emitted)
    occupancy = np.zeros_like(log_probs)
    weights = np.exp(through - log_total)
    for s, token in enumerate(ext):
        occupancy[:, token] += weights[:, s]
    return np.exp(log_probs) - occupancy


def greedy_spans(emissions: EmissionMatrix) -> list[tuple[int, float, int, int]]:
    """Collapsed argmax runs as (token, max probability in run, first window, end window)."""
    best = np.argmax(emissions.probs, axis=1)
    spans = []
    start = 0
    for token, run in itertools.groupby(best.tolist()):
        length = len(list(run))
        if token != emissions.blank:
            confidence = float(emissions.probs[start : start + length, token].max())
            spans.append((int(token), confidence, start, start + length))
        start += length
    return spans


def greedy_decode(emissions: EmissionMatrix) -> tuple[list[int], list[float]]:
    """Per-window argmax (ties toward the lower index, blank last), collapsed.

    Each token's confidence is the highest probability among the windows of its merged run.
    """
    spans = greedy_spans(emissions)
    return [s[0] for s in spans], [s[1] for s in spans]


def _bucket(table: dict[tuple[int, ...], list[float]], prefix: tuple[int, ...]) -> list[float]:
    return table.setdefault(prefix, [NEG_INF, NEG_INF])


def _beam_score(item: tuple[tuple[int, ...], Sequence[float]]) -> tuple[float, tuple[int, ...]]:
    prefix, (p_blank, p_token) = item
    return -float(np.logaddexp(p_blank, p_token)), prefix


def _prefix_beam(log_probs: np.ndarray, blank: int, beam_width: int) -> tuple[set[tuple[int, ...]], bool]:
    """Final prefixes of one prefix-beam pass and whether any step pruned a prefix."""
    beams: dict[tuple[int, ...], list[float]] = {(): [0.0, NEG_INF]}
    pruned = False
    for row in log_probs:
        nxt: dict[tuple[int, ...], list[float]] = {}
        for prefix, (p_blank, p_token) in beams.items():
            p_total = np.logaddexp(p_blank, p_token)
            entry = _bucket(nxt, prefix)
            entry[0] = np.logaddexp(entry[0], p_total + row[blank])
            for token in range(blank):
                p = row[token]
                if p == NEG_INF:
                    continue
                extended = _bucket(nxt, (*prefix, token))
                if prefix and prefix[-1] == token:
                    # a repeat only extends the prefix across a blank
                    entry[1] = np.logaddexp(entry[1], p_token + p)
                    extended[1] = np.logaddexp(extended[1], p_blank + p)
                else:
                    extended[1] = np.logaddexp(extended[1], p_total + p)
        pruned = pruned or len(nxt) > beam_width
        beams = dict(sorted(nxt.items(), key=_beam_score)[:beam_width])
    return set(beams), pruned


def beam_decode(emissions: EmissionMatrix, beam_width: int) -> tuple[list[int], float]:
    """Prefix beam search returning the labelling with the highest exact log probability.

    Candidates are the final prefixes of every beam of width 1..``beam_width``, each
    rescored with :func:`ctc_forward`, so the returned log probability is
    non-decreasing in ``beam_width``. Ties go to the lexicographically smaller labelling.
    """
    if beam_width < 1:
        msg = f"beam_width must be >= 1, got {beam_width}"
        raise ValueError(msg)
    log_probs = emissions.log_probs()
    blank = emissions.blank
    candidates: set[tuple[int, ...]] = set()
    for width in range(1, beam_width + 1):
        survivors, pruned = _prefix_beam(log_probs, blank, width)
        candidates |= survivors
        if not pruned:
            break

    scored = [(-ctc_forward(log_probs, prefix, blank), prefix) for prefix in candidates]
    best_log_p, best_prefix = min(scored, key=lambda item: (-item[0], item[1]))
    return list(best_prefix), best_log_p


def quality(confidence: float, cap: float = DEFAULT_Q_CAP) -> float:
    """Phred-like score -10 log10(1 - P_C), saturating at ``cap``."""
    if not 0.0 <= confidence < 1.0:
        msg = f"Confidence must be in [0, 1), got {confidence}"
        raise ValueError(msg)
    return min(-10.0 * math.log10(1.0 - confidence), cap)


def read_quality(confidences: Sequence[float], cap: float = DEFAULT_Q_CAP) -> float:
    """Mean per-token Q (not the Q of the mean confidence); 0 for an empty call."""
    if not confidences:
        return 0.0
    return sum(quality(c, cap) for c in confidences) / len(confidences)
