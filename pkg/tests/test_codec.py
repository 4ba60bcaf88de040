"""Tests for motifstore.data.codec."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from motifstore.core.motifs import Block, BlockLayout, CompositeSymbol
from motifstore.data.codec import (
    CodecConfig,
    CodecError,
    bits_to_bytes,
    bytes_to_bits,
    choose,
    decode,
    encode,
    subset_rank,
    subset_unrank,
)
from motifstore.data.schemas import CodecMode

LAYOUT = BlockLayout(n_address_slots=1, n_payload_slots=8, k=4, library_size=8, spacer_length=40)


class TestChoose:
    def test_eight_choose_four(self) -> None:
        assert choose(8, 4) == 70

    def test_k_exceeds_m(self) -> None:
        with pytest.raises(CodecError):
            choose(3, 4)


class TestSubsetRank:
    def test_first_and_last(self) -> None:
        assert subset_rank((0, 1, 2, 3), 8, 4) == 0
        assert subset_rank((4, 5, 6, 7), 8, 4) == 69

    def test_lexicographic_order(self) -> None:
        ranks = [subset_rank(s, 6, 3) for s in itertools.combinations(range(6), 3)]
        assert ranks == list(range(choose(6, 3)))

    @pytest.mark.parametrize(("m", "k"), [(1, 1), (5, 0), (7, 3), (10, 5)])
    def test_unrank_inverts_rank(self, m: int, k: int) -> None:
        for rank in range(choose(m, k)):
            assert subset_rank(subset_unrank(rank, m, k), m, k) == rank

    def test_rejects_unsorted(self) -> None:
        with pytest.raises(CodecError, match="strictly increasing"):
            subset_rank((3, 1, 2, 4), 8, 4)

    def test_rejects_wrong_size(self) -> None:
        with pytest.raises(CodecError, match="expected 4"):
            subset_rank((0, 1, 2), 8, 4)

    def test_rejects_out_of_range_rank(self) -> None:
        with pytest.raises(CodecError, match="outside"):
            subset_unrank(70, 8, 4)


class TestCodecConfig:
    def test_per_symbol_bits(self) -> None:
        config = CodecConfig(CodecMode.PER_SYMBOL_FLOOR)
        assert config.bits_per_slot(LAYOUT) == 6
        assert config.bits_per_block(LAYOUT) == 48

    def test_mixed_radix_is_denser(self) -> None:
        config = CodecConfig(CodecMode.MIXED_RADIX)
        assert config.bits_per_block(LAYOUT) == math.floor(8 * math.log2(70))
        assert config.bits_per_block(LAYOUT) > CodecConfig().bits_per_block(LAYOUT)
        assert math.log2(70) == pytest.approx(6.13, abs=0.01)


class TestEncodeDecode:
    def test_six_bytes_fill_one_block(self) -> None:
        encoded = encode(bytes_to_bits(b"motifs"), LAYOUT)
        assert len(encoded.blocks) == 1
        assert encoded.padding_bits == 0

    def test_blocks_are_valid_and_addressed(self) -> None:
        encoded = encode(bytes_to_bits(bytes(range(30))), LAYOUT)
        for block in encoded.blocks:
            block.check(LAYOUT)
            assert block.address == (block.block_id % 8,)

    def test_empty_input(self) -> None:
        encoded = encode("", LAYOUT)
        assert encoded.blocks == []
        assert decode(encoded.blocks, LAYOUT) == ""

    @pytest.mark.parametrize("mode", list(CodecMode))
    def test_random_bitstreams_roundtrip(self, mode: CodecMode) -> None:
        rng = np.random.default_rng(0)
        config = CodecConfig(mode)
        for _ in range(50):
            bits = "".join(map(str, rng.integers(0, 2, size=int(rng.integers(1, 400)))))
            encoded = encode(bits, LAYOUT, config)
            assert decode(encoded.blocks, LAYOUT, config, encoded.padding_bits) == bits

    def test_decode_ignores_block_order(self) -> None:
        bits = bytes_to_bits(b"order matters not")
        encoded = encode(bits, LAYOUT)
        assert decode(list(reversed(encoded.blocks)), LAYOUT, padding_bits=encoded.padding_bits) == bits

    def test_rejects_non_binary(self) -> None:
        with pytest.raises(CodecError, match="'0' and '1'"):
            encode("0102", LAYOUT)

    def test_rank_not_representable(self) -> None:
        symbols = tuple(CompositeSymbol((4, 5, 6, 7)) for _ in range(8))
        with pytest.raises(CodecError, match="not representable"):
            decode([Block(block_id=0, address=(0,), payloads=symbols)], LAYOUT)

    def test_mixed_radix_overflow(self) -> None:
        symbols = tuple(CompositeSymbol((4, 5, 6, 7)) for _ in range(8))
        with pytest.raises(CodecError, match="exceeds"):
            decode([Block(block_id=0, address=(0,), payloads=symbols)], LAYOUT, CodecConfig(CodecMode.MIXED_RADIX))


class TestBytes:
    def test_roundtrip(self) -> None:
        assert bits_to_bytes(bytes_to_bits(b"\x00\xffA")) == b"\x00\xffA"

    def test_partial_byte(self) -> None:
        with pytest.raises(ValueError, match="multiple of 8"):
            bits_to_bytes("0101")
