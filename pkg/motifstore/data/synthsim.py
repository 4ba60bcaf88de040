"""Synthesis and sequencing simulation: oligo assembly, base-level channel, pore model and squiggles."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from motifstore.core.motifs import BASES, Block, BlockLayout, MotifLibrary, complement_reverse
from motifstore.data.schemas import CoverageModel, Orientation

logger = logging.getLogger(__name__)

Seed = int | Sequence[int]

_CODES = np.full(256, -1, dtype=np.int64)
for _i, _b in enumerate(BASES):
    _CODES[ord(_b)] = _i


@dataclass(frozen=True)
class Molecule:
    """One assembled oligo: S0 m0 S1 m1 ... m(n-1) Sn."""

    block_id: int
    chosen_motifs: tuple[int, ...]
    sequence: str


@dataclass(frozen=True)
class ChannelParams:
    """Per-base error rates, orientation flip rate and reads-per-block model."""

    p_sub: float = 0.03
    p_ins: float = 0.03
    p_del: float = 0.04
    p_reverse: float = 0.5
    coverage: float = 20.0
    coverage_model: CoverageModel = CoverageModel.FIXED

    def __post_init__(self) -> None:
        for name in ("p_sub", "p_ins", "p_del", "p_reverse"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                msg = f"{name} must be in [0, 1], got {value}"
                raise ValueError(msg)
        if self.p_sub + self.p_del > 1.0:
            msg = f"p_sub + p_del must not exceed 1, got {self.p_sub + self.p_del}"
            raise ValueError(msg)
        if self.coverage < 0:
            msg = f"coverage must be non-negative, got {self.coverage}"
            raise ValueError(msg)


@dataclass(frozen=True)
class Read:
    """A base-level read. Truth fields are populated only by the simulator."""

    read_id: str
    block_id: int
    orientation: Orientation
    bases: str
    truth_motifs: tuple[int, ...] = ()
    edits: tuple[int, int, int] = (0, 0, 0)  # substitutions, insertions, deletions


@dataclass(frozen=True, eq=False)
class PoreModel:
    """Mean and standard deviation of the current (pA) for every k-mer, indexed base-4 (A=0 .. T=3)."""

    kmer_length: int
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self) -> None:
        size = 4**self.kmer_length
        if self.means.shape != (size,) or self.stds.shape != (size,):
            msg = f"Pore model tables must have {size} entries for k={self.kmer_length}"
            raise ValueError(msg)
        if np.any(self.stds <= 0):
            msg = "Pore model standard deviations must be positive"
            raise ValueError(msg)

    def kmer_indices(self, seq: str) -> np.ndarray:
        """Base-4 index of every k-mer window of ``seq``."""
        k = self.kmer_length
        if len(seq) < k:
            msg = f"Sequence of length {len(seq)} is shorter than k={k}"
            raise ValueError(msg)
        codes = _CODES[np.frombuffer(seq.encode("ascii"), dtype=np.uint8)]
        if np.any(codes < 0):
            msg = "Sequence contains non-nucleotide symbols"
            raise ValueError(msg)
        n = len(seq) - k + 1
        index = np.zeros(n, dtype=np.int64)
        for offset in range(k):
            index = index * 4 + codes[offset : offset + n]
        return index

    def levels(self, seq: str) -> np.ndarray:
        return self.means[self.kmer_indices(seq)]

    def level_stds(self, seq: str) -> np.ndarray:
        return self.stds[self.kmer_indices(seq)]

    def table(self) -> dict[str, tuple[float, float]]:
        """k-mer string -> (mean, std)."""
        k = self.kmer_length
        out: dict[str, tuple[float, float]] = {}
        for index in range(4**k):
            kmer = "".join(BASES[(index >> (2 * (k - 1 - p))) & 3] for p in range(k))
            out[kmer] = (float(self.means[index]), float(self.stds[index]))
        return out


@dataclass(frozen=True, eq=False)
class Squiggle:
    """Raw current trace; ``truth`` maps each sample to its k-mer window index (simulation only)."""

    read_id: str
    samples: np.ndarray
    truth: np.ndarray | None = field(default=None)

    def __len__(self) -> int:
        return int(self.samples.shape[0])


def oligo_sequence(library: MotifLibrary, chosen_motifs: Sequence[int]) -> str:
    """Interleave position-specific spacers with the chosen slot motifs."""
    if len(chosen_motifs) + 1 > library.n_spacers:
        msg = f"{len(chosen_motifs)} slots need {len(chosen_motifs) + 1} spacers, library has {library.n_spacers}"
        raise ValueError(msg)
    parts = [library.spacers[0]]
    for slot, motif_id in enumerate(chosen_motifs):
        parts.append(library.motifs[motif_id])
        parts.append(library.spacers[slot + 1])
    return "".join(parts)


def assemble(
    block: Block,
    library: MotifLibrary,
    layout: BlockLayout,
    seed: Seed,
    n_draws: int = 1,
) -> list[Molecule]:
    """Draw molecules from a block's mixture: each payload slot picks one motif of its subset uniformly."""
    block.check(layout)
    rng = np.random.default_rng(seed)
    molecules = []
    for _ in range(n_draws):
        picks = rng.integers(0, layout.k, size=layout.n_payload_slots)
        chosen = block.address + tuple(p.subset[i] for p, i in zip(block.payloads, picks, strict=True))
        sequence = oligo_sequence(library, chosen)
        molecules.append(Molecule(block_id=block.block_id, chosen_motifs=chosen, sequence=sequence))
    return molecules


def corrupt(molecule: Molecule, params: ChannelParams, seed: Seed, read_id: str = "") -> Read:
    """Apply deletion/substitution per base, random insertions after bases, then an orientation flip."""
    rng = np.random.default_rng(seed)
    n = len(molecule.sequence)
    u = rng.random(n)
    shift = rng.integers(1, 4, size=n)
    inserted = rng.random(n) < params.p_ins
    insert_base = rng.integers(0, 4, size=n)
    flip = rng.random() < params.p_reverse

    out: list[str] = []
    n_sub = n_ins = n_del = 0
    for i, base in enumerate(molecule.sequence):
        if u[i] < params.p_del:
            n_del += 1
        elif u[i] < params.p_del + params.p_sub:
            out.append(BASES[(BASES.index(base) + shift[i]) % 4])
            n_sub += 1
        else:
            out.append(base)
        if inserted[i]:
            out.append(BASES[insert_base[i]])
            n_ins += 1

    bases = "".join(out)
    orientation = Orientation.FORWARD
    if flip:
        bases = complement_reverse(bases)
        orientation = Orientation.REVERSE
    return Read(
        read_id=read_id,
        block_id=molecule.block_id,
        orientation=orientation,
        bases=bases,
        truth_motifs=molecule.chosen_motifs,
        edits=(n_sub, n_ins, n_del),
    )


def generate_pore_model(kmer_length: int, seed: Seed, std: float = 1.5) -> PoreModel:
    """Uniform [60, 120] pA mean current per k-mer with a fixed standard deviation."""
    if not 1 <= kmer_length <= 8:
        msg = f"kmer_length must be in [1, 8], got {kmer_length}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    size = 4**kmer_length
    return PoreModel(
        kmer_length=kmer_length,
        means=rng.uniform(60.0, 120.0, size=size),
        stds=np.full(size, float(std)),
    )


def render_squiggle(
    seq: str,
    pore: PoreModel,
    dwell_mean: float,
    noise_std: float,
    seed: Seed,
    read_id: str = "",
) -> Squiggle:
    """Emit a geometric number of samples (>= 1) per k-mer window at its mean level plus Gaussian noise."""
    if dwell_mean < 1.0:
        msg = f"dwell_mean must be >= 1 sample per base, got {dwell_mean}"
        raise ValueError(msg)
    levels = pore.levels(seq)
    rng = np.random.default_rng(seed)
    dwell = rng.geometric(1.0 / dwell_mean, size=levels.shape[0])
    samples = np.repeat(levels, dwell)
    if noise_std > 0:
        samples = samples + rng.normal(0.0, noise_std, size=samples.shape[0])
    truth = np.repeat(np.arange(levels.shape[0]), dwell)
    return Squiggle(read_id=read_id, samples=samples, truth=truth)


def oriented_sequence(molecule: Molecule, orientation: Orientation) -> str:
    """The molecule as it passes the pore for a given orientation."""
    if orientation is Orientation.REVERSE:
        return complement_reverse(molecule.sequence)
    return molecule.sequence


def reads_per_block(params: ChannelParams, seed: Seed) -> int:
    """Number of reads drawn for one block under the configured coverage model."""
    if params.coverage_model is CoverageModel.POISSON:
        return int(np.random.default_rng(seed).poisson(params.coverage))
    return int(round(params.coverage))
