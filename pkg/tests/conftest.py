"""Shared fixtures: a small layout and simulated corpora built once per session."""

from __future__ import annotations

import pytest

from motifstore.core.config import (
    ChannelSettings,
    ExperimentConfig,
    LayoutSettings,
    SquiggleSettings,
)
from motifstore.core.motifs import Block, BlockLayout, MotifLibrary
from motifstore.core.orchestrator import Corpus, build_library, build_pore, simulate_corpus
from motifstore.data.codec import bytes_to_bits, encode
from motifstore.data.synthsim import PoreModel

PAYLOAD = b"motifs!!!"  # 72 bits -> 6 blocks of 12 bits in the small layout


def make_config(**overrides: object) -> ExperimentConfig:
    """Small layout: one address slot and two payload slots, 8 motifs, k = 4."""
    fields: dict[str, object] = {
        "layout": LayoutSettings(n_address_slots=1, n_payload_slots=2, motifs_per_symbol=4),
        "channel": ChannelSettings(coverage=8.0),
        "seed": 7,
        "threads": 2,
    }
    fields.update(overrides)
    return ExperimentConfig(**fields)  # type: ignore[arg-type]


@pytest.fixture(scope="session")
def small_config() -> ExperimentConfig:
    return make_config()


@pytest.fixture(scope="session")
def noiseless_config() -> ExperimentConfig:
    return make_config(
        channel=ChannelSettings(p_sub=0.0, p_ins=0.0, p_del=0.0, coverage=4.0),
        squiggle=SquiggleSettings(noise_std=0.0),
    )


@pytest.fixture(scope="session")
def layout(small_config: ExperimentConfig) -> BlockLayout:
    return small_config.block_layout()


@pytest.fixture(scope="session")
def library(small_config: ExperimentConfig) -> MotifLibrary:
    return build_library(small_config)


@pytest.fixture(scope="session")
def pore(small_config: ExperimentConfig) -> PoreModel:
    return build_pore(small_config)


@pytest.fixture(scope="session")
def blocks(layout: BlockLayout) -> list[Block]:
    return encode(bytes_to_bits(PAYLOAD), layout).blocks


@pytest.fixture(scope="session")
def corpus(
    blocks: list[Block], small_config: ExperimentConfig, library: MotifLibrary, pore: PoreModel
) -> Corpus:
    return simulate_corpus(blocks, small_config, library, pore)


@pytest.fixture(scope="session")
def noiseless_corpus(
    blocks: list[Block], noiseless_config: ExperimentConfig, library: MotifLibrary, pore: PoreModel
) -> Corpus:
    return simulate_corpus(blocks, noiseless_config, library, pore)
