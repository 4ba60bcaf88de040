"""Bitstream <-> composite-symbol blocks via lexicographic subset ranking."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

from motifstore.core.motifs import Block, BlockLayout, CompositeSymbol
from motifstore.data.schemas import CodecMode

logger = logging.getLogger(__name__)


class CodecError(ValueError):
    """Raised for malformed symbols, ranks or blocks."""


def choose(M: int, k: int) -> int:
    """Exact binomial coefficient C(M, k)."""
    if M < 0 or k < 0:
        msg = f"choose needs non-negative arguments, got ({M}, {k})"
        raise CodecError(msg)
    if k > M:
        msg = f"choose({M}, {k}): k exceeds M"
        raise CodecError(msg)
    return math.comb(M, k)


def _ids(subset: CompositeSymbol | Sequence[int]) -> tuple[int, ...]:
    return subset.subset if isinstance(subset, CompositeSymbol) else tuple(subset)


def subset_rank(subset: CompositeSymbol | Sequence[int], M: int, k: int) -> int:
    """Lexicographic rank of a sorted k-subset of {0..M-1} (combinatorial number system)."""
    ids = _ids(subset)
    if len(ids) != k:
        msg = f"Subset {ids} has {len(ids)} ids, expected {k}"
        raise CodecError(msg)
    rank = 0
    previous = -1
    for i, value in enumerate(ids):
        if value <= previous or value >= M:
            msg = f"Subset {ids} is not a strictly increasing selection from 0..{M - 1}"
            raise CodecError(msg)
        for skipped in range(previous + 1, value):
            rank += math.comb(M - 1 - skipped, k - 1 - i)
        previous = value
    return rank


def subset_unrank(rank: int, M: int, k: int) -> CompositeSymbol:
    """Inverse of :func:`subset_rank`."""
    total = choose(M, k)
    if not 0 <= rank < total:
        msg = f"Rank {rank} outside [0, {total}) for C({M}, {k})"
        raise CodecError(msg)
    ids: list[int] = []
    value = 0
    for i in range(k):
        while True:
            below = math.comb(M - 1 - value, k - 1 - i)
            if rank < below:
                break
            rank -= below
            value += 1
        ids.append(value)
        value += 1
    return CompositeSymbol(tuple(ids))


@dataclass(frozen=True)
class CodecConfig:
    """Packing mode; M and k come from the layout."""

    mode: CodecMode = CodecMode.PER_SYMBOL_FLOOR

    def bits_per_slot(self, layout: BlockLayout) -> int:
        return choose(layout.library_size, layout.k).bit_length() - 1

    def bits_per_block(self, layout: BlockLayout) -> int:
        symbols = choose(layout.library_size, layout.k)
        if self.mode is CodecMode.MIXED_RADIX:
            return (symbols**layout.n_payload_slots).bit_length() - 1
        return self.bits_per_slot(layout) * layout.n_payload_slots


@dataclass(frozen=True)
class EncodedBlocks:
    """Blocks produced by :func:`encode` plus the zero padding appended to the stream."""

    blocks: list[Block]
    padding_bits: int


def _address(block_id: int, layout: BlockLayout) -> tuple[int, ...]:
    M = layout.library_size
    n = layout.n_address_slots
    return tuple((block_id // M ** (n - 1 - j)) % M for j in range(n))


def encode(bits: str, layout: BlockLayout, config: CodecConfig | None = None) -> EncodedBlocks:
    """Pack a '0'/'1' string into blocks; the tail is zero-padded to a whole block."""
    config = config or CodecConfig()
    if set(bits) - {"0", "1"}:
        msg = "Bitstream may only contain '0' and '1'"
        raise CodecError(msg)
    if not bits:
        return EncodedBlocks(blocks=[], padding_bits=0)

    block_bits = config.bits_per_block(layout)
    if block_bits < 1:
        msg = f"Layout carries no payload bits (C({layout.library_size}, {layout.k}) = 1)"
        raise CodecError(msg)
    n_blocks = -(-len(bits) // block_bits)
    padding = n_blocks * block_bits - len(bits)
    padded = bits + "0" * padding

    M, k, n = layout.library_size, layout.k, layout.n_payload_slots
    symbols = choose(M, k)
    slot_bits = config.bits_per_slot(layout)
    blocks: list[Block] = []
    for block_id in range(n_blocks):
        chunk = padded[block_id * block_bits : (block_id + 1) * block_bits]
        if config.mode is CodecMode.MIXED_RADIX:
            value = int(chunk, 2)
            ranks = [(value // symbols ** (n - 1 - s)) % symbols for s in range(n)]
        else:
            ranks = [int(chunk[s * slot_bits : (s + 1) * slot_bits], 2) for s in range(n)]
        payloads = tuple(subset_unrank(r, M, k) for r in ranks)
        blocks.append(Block(block_id=block_id, address=_address(block_id, layout), payloads=payloads))

    logger.info("Encoded %d bits into %d blocks (%s, %d padding bits)", len(bits), n_blocks, config.mode, padding)
    return EncodedBlocks(blocks=blocks, padding_bits=padding)


def _payload_ranks(block: Block, layout: BlockLayout) -> list[int]:
    if len(block.payloads) != layout.n_payload_slots:
        msg = f"Block {block.block_id}: {len(block.payloads)} payload slots, layout has {layout.n_payload_slots}"
        raise CodecError(msg)
    ranks = []
    for slot, symbol in enumerate(block.payloads):
        if len(symbol.subset) != layout.k:
            msg = f"Block {block.block_id}, payload slot {slot}: subset {symbol.subset} does not have {layout.k} ids"
            raise CodecError(msg)
        ranks.append(subset_rank(symbol, layout.library_size, layout.k))
    return ranks


def decode_block_value(block: Block, layout: BlockLayout) -> int:
    """Payload ranks of a block read as one base-C(M,k) integer, most significant slot first."""
    symbols = choose(layout.library_size, layout.k)
    value = 0
    for rank in _payload_ranks(block, layout):
        value = value * symbols + rank
    return value


def decode(
    blocks: Sequence[Block],
    layout: BlockLayout,
    config: CodecConfig | None = None,
    padding_bits: int = 0,
) -> str:
    """Inverse of :func:`encode`; blocks are concatenated in block_id order."""
    config = config or CodecConfig()
    block_bits = config.bits_per_block(layout)
    slot_bits = config.bits_per_slot(layout)
    parts: list[str] = []
    for block in sorted(blocks, key=lambda b: b.block_id):
        if config.mode is CodecMode.MIXED_RADIX:
            value = decode_block_value(block, layout)
            if value >= 1 << block_bits:
                msg = f"Block {block.block_id}: value {value} exceeds the {block_bits}-bit block capacity"
                raise CodecError(msg)
            parts.append(format(value, f"0{block_bits}b"))
            continue
        for slot, rank in enumerate(_payload_ranks(block, layout)):
            if rank >= 1 << slot_bits:
                msg = f"Block {block.block_id}, payload slot {slot}: rank {rank} not representable in {slot_bits} bits"
                raise CodecError(msg)
            parts.append(format(rank, f"0{slot_bits}b"))
    bits = "".join(parts)
    if padding_bits:
        if padding_bits > len(bits):
            msg = f"Padding {padding_bits} exceeds decoded length {len(bits)}"
            raise CodecError(msg)
        bits = bits[:-padding_bits]
    return bits


def bytes_to_bits(data: bytes) -> str:
    return "".join(format(byte, "08b") for byte in data)


def bits_to_bytes(bits: str) -> bytes:
    """Pack a bit string whose length is a multiple of 8."""
    if len(bits) % 8:
        msg = f"Bit string length {len(bits)} is not a multiple of 8"
        raise CodecError(msg)
    return bytes(int(bits[i : i + 8], 2) for i in range(0, len(bits), 8))
