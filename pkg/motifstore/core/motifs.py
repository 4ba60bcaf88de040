"""Domain types for motif libraries, oligo layouts and blocks, plus seeded library generation."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from Bio.Seq import complement as complement_bases
from Bio.Seq import reverse_complement

from motifstore.core.align import edit_distance

logger = logging.getLogger(__name__)

BASES = "ACGT"


class Base(StrEnum):
    """One of the four nucleotides."""

    A = "A"
    C = "C"
    G = "G"
    T = "T"

    @property
    def complement(self) -> Base:
        return Base(complement_bases(self.value))


class LibraryGenerationError(ValueError):
    """Raised when rejection sampling cannot satisfy the library constraints."""


def complement_reverse(seq: str) -> str:
    """Reverse complement of a base string."""
    return str(reverse_complement(seq))


@dataclass(frozen=True)
class MotifLibrary:
    """Payload motifs (index = motif id) and position-specific spacers (index = position)."""

    motifs: tuple[str, ...]
    spacers: tuple[str, ...]
    motif_length: int
    spacer_length: int

    def __post_init__(self) -> None:
        if len(self.motifs) < 2:
            msg = f"A library needs at least 2 motifs, got {len(self.motifs)}"
            raise ValueError(msg)
        for i, motif in enumerate(self.motifs):
            if len(motif) != self.motif_length:
                msg = f"Motif {i} has length {len(motif)}, expected {self.motif_length}"
                raise ValueError(msg)
        for j, spacer in enumerate(self.spacers):
            if len(spacer) != self.spacer_length:
                msg = f"Spacer {j} has length {len(spacer)}, expected {self.spacer_length}"
                raise ValueError(msg)
        if len(set(self.motifs)) != len(self.motifs):
            msg = "Motif sequences must be pairwise distinct"
            raise ValueError(msg)
        if len(set(self.spacers)) != len(self.spacers):
            msg = "Spacer sequences must be pairwise distinct"
            raise ValueError(msg)
        if set(self.spacers) & set(self.motifs):
            msg = "Spacer sequences must differ from every motif"
            raise ValueError(msg)
        invalid = set("".join(self.motifs + self.spacers)) - set(BASES)
        if invalid:
            msg = f"Library contains non-nucleotide symbols: {sorted(invalid)}"
            raise ValueError(msg)

    @property
    def n_motifs(self) -> int:
        return len(self.motifs)

    @property
    def n_spacers(self) -> int:
        return len(self.spacers)

    def min_motif_distance(self) -> int:
        """Smallest pairwise edit distance between motifs (exhaustive)."""
        return min(edit_distance(a, b) for a, b in itertools.combinations(self.motifs, 2))


@dataclass(frozen=True)
class BlockLayout:
    """Slot geometry of one oligo: address slots first, then payload slots."""

    n_address_slots: int
    n_payload_slots: int
    k: int  # motifs per composite symbol
    library_size: int
    spacer_length: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.library_size:
            msg = f"motifs_per_symbol must be in [1, {self.library_size}], got {self.k}"
            raise ValueError(msg)
        if self.n_payload_slots < 1:
            msg = f"At least one payload slot is required, got {self.n_payload_slots}"
            raise ValueError(msg)
        if self.n_address_slots < 0:
            msg = f"n_address_slots must be non-negative, got {self.n_address_slots}"
            raise ValueError(msg)

    @property
    def n_slots(self) -> int:
        return self.n_address_slots + self.n_payload_slots

    @property
    def n_spacers(self) -> int:
        return self.n_slots + 1

    def oligo_length(self, motif_length: int) -> int:
        return self.n_slots * motif_length + self.n_spacers * self.spacer_length

    def payload_slot(self, slot: int) -> int:
        """Payload index of a layout slot index."""
        return slot - self.n_address_slots


@dataclass(frozen=True)
class CompositeSymbol:
    """A sorted k-of-M motif subset carried by one payload slot."""

    subset: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b <= a for a, b in itertools.pairwise(self.subset)):
            msg = f"Composite symbol ids must be strictly increasing: {self.subset}"
            raise ValueError(msg)

    def check(self, layout: BlockLayout) -> None:
        if len(self.subset) != layout.k:
            msg = f"Composite symbol {self.subset} has {len(self.subset)} ids, expected {layout.k}"
            raise ValueError(msg)
        if self.subset and not 0 <= self.subset[0] <= self.subset[-1] < layout.library_size:
            msg = f"Composite symbol {self.subset} references ids outside 0..{layout.library_size - 1}"
            raise ValueError(msg)


@dataclass(frozen=True)
class Block:
    """One stored information unit."""

    block_id: int
    address: tuple[int, ...]
    payloads: tuple[CompositeSymbol, ...]

    def check(self, layout: BlockLayout) -> None:
        if len(self.address) != layout.n_address_slots:
            msg = f"Block {self.block_id}: {len(self.address)} address motifs, layout has {layout.n_address_slots}"
            raise ValueError(msg)
        if len(self.payloads) != layout.n_payload_slots:
            msg = f"Block {self.block_id}: {len(self.payloads)} payloads, layout has {layout.n_payload_slots}"
            raise ValueError(msg)
        for motif_id in self.address:
            if not 0 <= motif_id < layout.library_size:
                msg = f"Block {self.block_id}: address motif {motif_id} not in library"
                raise ValueError(msg)
        for payload in self.payloads:
            payload.check(layout)

    def slot_sets(self) -> list[frozenset[int]]:
        """Acceptable motif ids per layout slot, address slots first."""
        return [frozenset({m}) for m in self.address] + [frozenset(p.subset) for p in self.payloads]


def _random_sequence(rng: np.random.Generator, length: int) -> str:
    return "".join(BASES[i] for i in rng.integers(0, 4, size=length))


def _sample_distinct(
    rng: np.random.Generator,
    count: int,
    length: int,
    min_distance: int,
    forbidden: Sequence[str],
    max_attempts: int,
    what: str,
) -> list[str]:
    accepted: list[str] = []
    attempts = 0
    while len(accepted) < count:
        if attempts >= max_attempts:
            msg = (
                f"Could not place {count} {what} of length {length} with pairwise edit distance "
                f">= {min_distance} after {max_attempts} attempts ({len(accepted)} placed)"
            )
            raise LibraryGenerationError(msg)
        attempts += 1
        candidate = _random_sequence(rng, length)
        if candidate in forbidden:
            continue
        if all(edit_distance(candidate, other) >= min_distance for other in accepted):
            accepted.append(candidate)
    logger.debug("Placed %d %s in %d attempts", count, what, attempts)
    return accepted


def generate_library(
    n_motifs: int,
    motif_length: int,
    n_spacers: int,
    spacer_length: int,
    min_distance: int,
    seed: int,
    max_attempts: int = 100_000,
) -> MotifLibrary:
    """Rejection-sample a motif library under a pairwise edit-distance floor.

    Motifs and spacers are uniform random base strings; every motif pair is at
    least ``min_distance`` edits apart and spacers obey the same floor among
    themselves. The result is a pure function of the arguments.
    """
    if n_motifs < 2:
        msg = f"n_motifs must be >= 2, got {n_motifs}"
        raise LibraryGenerationError(msg)
    if motif_length < 1:
        msg = f"motif_length must be >= 1, got {motif_length}"
        raise LibraryGenerationError(msg)
    if min_distance > motif_length:
        msg = f"d_min={min_distance} exceeds achievable distance for motif length {motif_length}"
        raise LibraryGenerationError(msg)
    if n_motifs > 4**motif_length:
        msg = f"Only {4**motif_length} distinct motifs of length {motif_length} exist, asked for {n_motifs}"
        raise LibraryGenerationError(msg)

    rng = np.random.default_rng(seed)
    motifs = _sample_distinct(rng, n_motifs, motif_length, min_distance, (), max_attempts, "motifs")
    spacer_floor = min(min_distance, spacer_length)
    spacers = _sample_distinct(rng, n_spacers, spacer_length, spacer_floor, motifs, max_attempts, "spacers")
    library = MotifLibrary(
        motifs=tuple(motifs),
        spacers=tuple(spacers),
        motif_length=motif_length,
        spacer_length=spacer_length,
    )
    logger.info(
        "Generated library: %d motifs (l=%d), %d spacers (l_s=%d)", n_motifs, motif_length, n_spacers, spacer_length
    )
    return library
