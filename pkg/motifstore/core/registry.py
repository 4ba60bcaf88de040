"""Decoding-pipeline registry with name-based dispatch."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TypedDict

from motifstore.core.config import ExperimentConfig
from motifstore.core.motifs import BlockLayout, MotifLibrary
from motifstore.data.schemas import PipelineName
from motifstore.data.synthsim import PoreModel
from motifstore.decoders.base import MotifDecoder
from motifstore.decoders.caller import TemplateBank, ViterbiCallerDecoder, build_template_bank
from motifstore.decoders.hybrid import HybridDecoder
from motifstore.decoders.search import ApproximateMatchDecoder, ZeroErrorDecoder

logger = logging.getLogger(__name__)


class UnknownPipelineError(KeyError):
    """No pipeline is registered under the requested name."""


@dataclass
class DecoderContext:
    """What a pipeline factory may draw on; the template bank is compiled on first use."""

    library: MotifLibrary
    layout: BlockLayout
    config: ExperimentConfig
    pore: PoreModel | None = None
    _bank: TemplateBank | None = field(default=None, repr=False)

    def template_bank(self) -> TemplateBank:
        if self.pore is None:
            msg = "The caller needs a pore model"
            raise ValueError(msg)
        if self._bank is None:
            self._bank = build_template_bank(self.library, self.layout, self.pore)
        return self._bank


PipelineFactory = Callable[[DecoderContext], MotifDecoder]


class PipelineDef(TypedDict):
    """Registry entry for a single pipeline."""

    factory: PipelineFactory
    requires_squiggles: bool
    description: str


def _ze(ctx: DecoderContext) -> MotifDecoder:
    return ZeroErrorDecoder(ctx.library, ctx.layout, ctx.config.search)


def _am(ctx: DecoderContext) -> MotifDecoder:
    return ApproximateMatchDecoder(ctx.library, ctx.layout, ctx.config.search)


def _caller(ctx: DecoderContext) -> ViterbiCallerDecoder:
    return ViterbiCallerDecoder(ctx.template_bank(), ctx.config.squiggle.noise_std, ctx.config.caller)


def _hybrid(ctx: DecoderContext) -> MotifDecoder:
    fallback = ApproximateMatchDecoder(ctx.library, ctx.layout, ctx.config.search)
    return HybridDecoder(_caller(ctx), fallback)


PIPELINE_REGISTRY: dict[str, PipelineDef] = {
    PipelineName.ZE: {
        "factory": _ze,
        "requires_squiggles": False,
        "description": "Exact motif matches on base-level reads, anchored by flanking spacers.",
    },
    PipelineName.AM: {
        "factory": _am,
        "requires_squiggles": False,
        "description": "Spacer k-mer seeding, chaining and banded alignment on base-level reads.",
    },
    PipelineName.CALLER: {
        "factory": _caller,
        "requires_squiggles": True,
        "description": "Semi-Markov Viterbi over squiggle events with token confidences and quality filter.",
    },
    PipelineName.HYBRID: {
        "factory": _hybrid,
        "requires_squiggles": True,
        "description": "Caller calls for reads that pass its filter, AM search for the rest.",
    },
}


def register_pipeline(name: str, factory: PipelineFactory, requires_squiggles: bool, description: str) -> None:
    """Add or replace a pipeline."""
    PIPELINE_REGISTRY[name] = {
        "factory": factory,
        "requires_squiggles": requires_squiggles,
        "description": description,
    }


def get_pipeline(name: str) -> PipelineDef:
    if name not in PIPELINE_REGISTRY:
        logger.error("Unknown pipeline requested: %s", name)
        msg = f"Unknown pipeline: {name!r} (known: {', '.join(sorted(PIPELINE_REGISTRY))})"
        raise UnknownPipelineError(msg)
    return PIPELINE_REGISTRY[name]


def build_decoder(name: str, ctx: DecoderContext) -> MotifDecoder:
    """Instantiate the pipeline registered under ``name``."""
    return get_pipeline(name)["factory"](ctx)


def get_pipeline_descriptions() -> dict[str, str]:
    return {name: entry["description"] for name, entry in sorted(PIPELINE_REGISTRY.items())}
