"""Tests for motifstore.data.synthsim."""

from __future__ import annotations

import numpy as np
import pytest

from motifstore.core.motifs import Block, BlockLayout, CompositeSymbol, MotifLibrary, complement_reverse
from motifstore.data.schemas import CoverageModel, Orientation
from motifstore.data.synthsim import (
    ChannelParams,
    Molecule,
    PoreModel,
    assemble,
    corrupt,
    generate_pore_model,
    oligo_sequence,
    oriented_sequence,
    reads_per_block,
    render_squiggle,
)

CLEAN = ChannelParams(p_sub=0.0, p_ins=0.0, p_del=0.0, p_reverse=0.0)


def _block(layout: BlockLayout) -> Block:
    return Block(
        block_id=2,
        address=(2,),
        payloads=tuple(CompositeSymbol((1, 3, 5, 7)) for _ in range(layout.n_payload_slots)),
    )


class TestAssemble:
    def test_structure(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecule = assemble(_block(layout), library, layout, seed=(1, 2))[0]
        assert molecule.chosen_motifs[0] == 2
        assert all(m in (1, 3, 5, 7) for m in molecule.chosen_motifs[1:])
        assert len(molecule.sequence) == layout.oligo_length(library.motif_length)
        assert molecule.sequence.startswith(library.spacers[0] + library.motifs[2] + library.spacers[1])

    def test_deterministic(self, library: MotifLibrary, layout: BlockLayout) -> None:
        first = assemble(_block(layout), library, layout, seed=5, n_draws=20)
        second = assemble(_block(layout), library, layout, seed=5, n_draws=20)
        assert first == second

    def test_draws_cover_the_mixture(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecules = assemble(_block(layout), library, layout, seed=0, n_draws=200)
        assert {m.chosen_motifs[1] for m in molecules} == {1, 3, 5, 7}

    def test_invalid_block(self, library: MotifLibrary, layout: BlockLayout) -> None:
        bad = Block(block_id=0, address=(), payloads=_block(layout).payloads)
        with pytest.raises(ValueError, match="address"):
            assemble(bad, library, layout, seed=0)

    def test_too_few_spacers(self, library: MotifLibrary) -> None:
        with pytest.raises(ValueError, match="spacers"):
            oligo_sequence(library, [0] * library.n_spacers)


class TestCorrupt:
    def _molecule(self, library: MotifLibrary, layout: BlockLayout) -> Molecule:
        return assemble(_block(layout), library, layout, seed=3)[0]

    def test_clean_channel_is_identity(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecule = self._molecule(library, layout)
        read = corrupt(molecule, CLEAN, seed=1, read_id="r")
        assert read.bases == molecule.sequence
        assert read.orientation is Orientation.FORWARD
        assert read.edits == (0, 0, 0)

    def test_reverse_flip(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecule = self._molecule(library, layout)
        params = ChannelParams(p_sub=0.0, p_ins=0.0, p_del=0.0, p_reverse=1.0)
        read = corrupt(molecule, params, seed=1)
        assert read.orientation is Orientation.REVERSE
        assert read.bases == complement_reverse(molecule.sequence)
        assert oriented_sequence(molecule, read.orientation) == read.bases

    def test_error_counts_match_length(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecule = self._molecule(library, layout)
        read = corrupt(molecule, ChannelParams(p_reverse=0.0), seed=9)
        n_sub, n_ins, n_del = read.edits
        assert len(read.bases) == len(molecule.sequence) + n_ins - n_del
        assert read.truth_motifs == molecule.chosen_motifs

    def test_deterministic(self, library: MotifLibrary, layout: BlockLayout) -> None:
        molecule = self._molecule(library, layout)
        assert corrupt(molecule, ChannelParams(), seed=(4, 2)) == corrupt(molecule, ChannelParams(), seed=(4, 2))

    @pytest.mark.parametrize(
        "kwargs",
        [{"p_sub": -0.1}, {"p_del": 1.5}, {"p_sub": 0.6, "p_del": 0.6}, {"coverage": -1.0}],
    )
    def test_rejects_bad_params(self, kwargs: dict[str, float]) -> None:
        with pytest.raises(ValueError):
            ChannelParams(**kwargs)  # type: ignore[arg-type]


class TestPoreModel:
    def test_table_size_and_range(self) -> None:
        pore = generate_pore_model(4, seed=0)
        table = pore.table()
        assert len(table) == 256
        assert all(60.0 <= mean <= 120.0 for mean, _ in table.values())
        assert table["AAAA"] == (float(pore.means[0]), float(pore.stds[0]))
        assert table["TTTT"] == (float(pore.means[255]), float(pore.stds[255]))

    def test_kmer_indices(self) -> None:
        pore = generate_pore_model(2, seed=0)
        assert pore.kmer_indices("ACGT").tolist() == [1, 6, 11]

    def test_short_sequence(self) -> None:
        with pytest.raises(ValueError, match="shorter"):
            generate_pore_model(6, seed=0).levels("ACG")

    def test_rejects_bad_std(self) -> None:
        with pytest.raises(ValueError, match="positive"):
            PoreModel(kmer_length=1, means=np.ones(4), stds=np.zeros(4))


class TestRenderSquiggle:
    def test_noiseless_unit_dwell(self, pore: PoreModel) -> None:
        seq = "ACGTACGGTTCAGT"
        squiggle = render_squiggle(seq, pore, dwell_mean=1.0, noise_std=0.0, seed=0)
        np.testing.assert_array_equal(squiggle.samples, pore.levels(seq))

    def test_truth_maps_samples_to_kmers(self, pore: PoreModel) -> None:
        seq = "ACGTACGGTTCAGTTGCA"
        squiggle = render_squiggle(seq, pore, dwell_mean=10.0, noise_std=0.0, seed=1)
        assert squiggle.truth is not None
        np.testing.assert_array_equal(squiggle.samples, pore.levels(seq)[squiggle.truth])
        assert set(squiggle.truth.tolist()) == set(range(len(seq) - pore.kmer_length + 1))

    def test_deterministic(self, pore: PoreModel) -> None:
        a = render_squiggle("ACGTACGGTTCAGT", pore, 10.0, 2.0, seed=(1, 2, 3))
        b = render_squiggle("ACGTACGGTTCAGT", pore, 10.0, 2.0, seed=(1, 2, 3))
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_rejects_short_dwell(self, pore: PoreModel) -> None:
        with pytest.raises(ValueError, match="dwell_mean"):
            render_squiggle("ACGTACGGTT", pore, 0.5, 0.0, seed=0)


class TestReadsPerBlock:
    def test_fixed(self) -> None:
        assert reads_per_block(ChannelParams(coverage=7.4), seed=0) == 7

    def test_poisson_is_seeded(self) -> None:
        params = ChannelParams(coverage=7.0, coverage_model=CoverageModel.POISSON)
        assert reads_per_block(params, seed=(1, 2)) == reads_per_block(params, seed=(1, 2))

    def test_poisson_mean(self) -> None:
        params = ChannelParams(coverage=7.0, coverage_model=CoverageModel.POISSON)
        draws = [reads_per_block(params, seed=i) for i in range(2000)]
        assert np.mean(draws) == pytest.approx(7.0, abs=0.3)
