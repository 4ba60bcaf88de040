"""Caller first, AM search on the paired base-level read when the caller rejects."""

from __future__ import annotations

import logging

from motifstore.data.schemas import FilterStatus, PipelineName
from motifstore.data.synthsim import Read, Squiggle
from motifstore.decoders.base import DecodeResult, MotifDecoder
from motifstore.decoders.caller import ViterbiCallerDecoder
from motifstore.decoders.search import ApproximateMatchDecoder

logger = logging.getLogger(__name__)


class HybridDecoder(MotifDecoder):
    def __init__(self, caller: ViterbiCallerDecoder, fallback: ApproximateMatchDecoder) -> None:
        self._caller = caller
        self._fallback = fallback

    @property
    def name(self) -> PipelineName:
        return PipelineName.HYBRID

    @property
    def requires_squiggles(self) -> bool:
        return True

    def decode(self, read: Read | None, squiggle: Squiggle | None) -> DecodeResult:
        if squiggle is None:
            raise self._missing("squiggle")
        if read is None:
            raise self._missing("base-level read")
        primary = self._caller.decode(None, squiggle)
        if primary.status is FilterStatus.RETAINED:
            return primary
        logger.debug("Read %s: caller %s, falling back to AM search", read.read_id, primary.status)
        fallback = self._fallback.decode(read, None)
        return DecodeResult(
            read_id=fallback.read_id,
            status=fallback.status,
            calls=fallback.calls,
            tokens=primary.tokens,
            read_q=primary.read_q,
            emissions=primary.emissions,
        )
