"""Record schemas shared by the simulator, the decoders and the recovery engine."""

from __future__ import annotations

from collections.abc import Sequence
from enum import StrEnum
from typing import TypedDict


class Orientation(StrEnum):
    """Strand orientation of a read relative to the assembled oligo."""

    FORWARD = "forward"
    REVERSE = "reverse"


class CodecMode(StrEnum):
    """How payload bits are packed into composite symbols."""

    PER_SYMBOL_FLOOR = "per-symbol-floor"  # floor(log2 C(M,k)) bits per slot
    MIXED_RADIX = "mixed-radix"  # one base-C(M,k) number per block


class CoverageModel(StrEnum):
    """Reads-per-block draw used by the simulator."""

    FIXED = "fixed"
    POISSON = "poisson"


class SquiggleSource(StrEnum):
    """Which sequence the simulator renders into a squiggle."""

    MOLECULE = "molecule"  # the clean molecule, oriented; channel errors stay base-level
    READ = "read"  # the corrupted read, so the signal carries the channel errors too


class FilterStatus(StrEnum):
    """Outcome of decoding a single read."""

    RETAINED = "retained"
    FILTERED = "filtered"  # caller quality filter rejected the read
    UNMAPPABLE = "unmappable"  # too few events for the layout grammar


class PipelineName(StrEnum):
    """Registered decoding pipelines."""

    ZE = "ze"
    AM = "am"
    CALLER = "caller"
    HYBRID = "hybrid"


class TruthRecord(TypedDict):
    """Ground-truth provenance of one simulated read (sidecar file only)."""

    read_id: str
    block_id: int
    orientation: str  # Orientation value
    truth_motifs: list[int]  # chosen motif id per slot, address slots first
    edits: list[int]  # [substitutions, insertions, deletions]


class TokenRecord(TypedDict):
    """One called token: motif or spacer id, confidence and Phred-like quality."""

    token: int
    confidence: float
    quality: float


class CallRecord(TypedDict):
    """One line of a calls file."""

    read_id: str
    pipeline: str  # PipelineName value
    status: str  # FilterStatus value
    orientation: str | None
    slots: list[int | None]  # motif id per slot, None when absent
    tokens: list[TokenRecord]
    read_q: float | None
    score: float


class CallsHeader(TypedDict):
    """First line of a calls file; ties the calls to their corpus."""

    format: str
    pipeline: str
    library_digest: str
    pore_digest: str
    blocks_digest: str


class ToyCallRecord(TypedDict):
    """One held-out read called by the toy model, next to its truth labels."""

    read_id: str
    tokens: list[int]
    labels: list[int]  # true motif ids in pore order
    edit_distance: int
    read_q: float


CALLS_FORMAT = "motifstore-calls/1"


def make_truth_record(
    read_id: str,
    block_id: int,
    orientation: Orientation,
    truth_motifs: list[int],
    edits: tuple[int, int, int] = (0, 0, 0),
) -> TruthRecord:
    """Create a truth sidecar record."""
    return TruthRecord(
        read_id=read_id,
        block_id=block_id,
        orientation=str(orientation),
        truth_motifs=list(truth_motifs),
        edits=list(edits),
    )


def make_call_record(
    read_id: str,
    pipeline: PipelineName,
    status: FilterStatus,
    slots: list[int | None],
    orientation: Orientation | None = None,
    tokens: list[TokenRecord] | None = None,
    read_q: float | None = None,
    score: float = 0.0,
) -> CallRecord:
    """Create a calls-file record; scores are rounded so files stay byte-stable."""
    return CallRecord(
        read_id=read_id,
        pipeline=str(pipeline),
        status=str(status),
        orientation=str(orientation) if orientation is not None else None,
        slots=list(slots),
        tokens=list(tokens or []),
        read_q=round(read_q, 6) if read_q is not None else None,
        score=round(score, 6),
    )


def make_calls_header(
    pipeline: PipelineName,
    library_digest: str,
    pore_digest: str,
    blocks_digest: str,
) -> CallsHeader:
    """Create the header line of a calls file."""
    return CallsHeader(
        format=CALLS_FORMAT,
        pipeline=str(pipeline),
        library_digest=library_digest,
        pore_digest=pore_digest,
        blocks_digest=blocks_digest,
    )


def make_toy_call_record(
    read_id: str,
    tokens: Sequence[int],
    labels: Sequence[int],
    edit_distance: int,
    read_q: float,
) -> ToyCallRecord:
    return ToyCallRecord(
        read_id=read_id,
        tokens=list(tokens),
        labels=list(labels),
        edit_distance=edit_distance,
        read_q=round(read_q, 6),
    )
