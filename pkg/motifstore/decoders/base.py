"""Abstract base for motif decoding pipelines."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from motifstore.data.schemas import FilterStatus, Orientation, PipelineName, TokenRecord
from motifstore.data.synthsim import Read, Squiggle
from motifstore.decoders.ctc import EmissionMatrix


@dataclass(frozen=True)
class SlotCalls:
    """At most one motif id per layout slot (address slots first); None when absent."""

    read_id: str
    slots: tuple[int | None, ...]
    orientation: Orientation | None = field(default=None, compare=False)
    score: float = field(default=0.0, compare=False)

    @property
    def n_called(self) -> int:
        return sum(s is not None for s in self.slots)


@dataclass(frozen=True)
class DecodeResult:
    """Per-read output of a pipeline, ready to become a calls-file record."""

    read_id: str
    status: FilterStatus
    calls: SlotCalls | None
    tokens: tuple[TokenRecord, ...] = ()
    read_q: float | None = None
    # per-window token distributions, for pipelines that produce them
    emissions: EmissionMatrix | None = field(default=None, compare=False, repr=False)

    @property
    def retained(self) -> bool:
        return self.status is FilterStatus.RETAINED


class MotifDecoder(ABC):
    """A pipeline mapping one read (base-level, squiggle, or both) to slot calls.

    Implementations: ZeroErrorDecoder, ApproximateMatchDecoder, ViterbiCallerDecoder, HybridDecoder.
    """

    @property
    @abstractmethod
    def name(self) -> PipelineName:
        """Registry name of the pipeline."""

    @property
    def requires_squiggles(self) -> bool:
        return False

    @property
    def requires_reads(self) -> bool:
        return True

    @abstractmethod
    def decode(self, read: Read | None, squiggle: Squiggle | None) -> DecodeResult:
        """Decode a single read. Must not consult the read's truth fields."""

    def _missing(self, what: str) -> ValueError:
        msg = f"Pipeline {self.name} needs {what} input"
        return ValueError(msg)
