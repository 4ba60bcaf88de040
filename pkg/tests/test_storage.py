"""Tests for motifstore.data.storage."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from motifstore.core.motifs import Block, BlockLayout, MotifLibrary
from motifstore.data.schemas import (
    CodecMode,
    FilterStatus,
    Orientation,
    PipelineName,
    make_call_record,
    make_calls_header,
    make_truth_record,
)
from motifstore.data.storage import (
    BlocksDocument,
    CorpusMismatchError,
    FormatError,
    LibraryDocument,
    PoreModelDocument,
    blocks_digest,
    content_digest,
    library_digest,
    load_blocks,
    load_library,
    load_pore,
    pore_digest,
    read_calls,
    read_csv,
    read_emissions,
    read_reads,
    read_squiggles,
    read_truth,
    save_document,
    verify_digest,
    write_calls,
    write_csv,
    write_emissions,
    write_jsonl,
    write_reads,
    write_squiggles,
)
from motifstore.data.synthsim import PoreModel, Read, Squiggle
from motifstore.decoders.ctc import EmissionMatrix


class TestDigests:
    def test_key_order_does_not_matter(self) -> None:
        assert content_digest({"a": 1, "b": [1, 2]}) == content_digest({"b": [1, 2], "a": 1})
        assert content_digest({"a": 1}) != content_digest({"a": 2})
        assert len(content_digest({})) == 16

    def test_verify_digest(self, tmp_path: Path) -> None:
        verify_digest("abc", "abc", "library", tmp_path)
        with pytest.raises(CorpusMismatchError, match="library digest"):
            verify_digest("abc", "abd", "library", tmp_path)


class TestDocuments:
    def test_library(self, tmp_path: Path, library: MotifLibrary) -> None:
        path = tmp_path / "library.json"
        save_document(path, LibraryDocument.from_library(library))
        assert load_library(path) == library
        assert library_digest(load_library(path)) == library_digest(library)

    def test_blocks(self, tmp_path: Path, blocks: list[Block], layout: BlockLayout) -> None:
        path = tmp_path / "blocks.json"
        document = BlocksDocument.build(blocks, layout, CodecMode.PER_SYMBOL_FLOOR, padding_bits=0)
        save_document(path, document)
        loaded = load_blocks(path)
        assert loaded.to_blocks() == blocks
        assert loaded.layout.to_layout() == layout
        assert blocks_digest(loaded) == blocks_digest(document)

    def test_invalid_block_names_record(self, tmp_path: Path, blocks: list[Block], layout: BlockLayout) -> None:
        path = tmp_path / "blocks.json"
        data = BlocksDocument.build(blocks, layout, CodecMode.PER_SYMBOL_FLOOR, 0).model_dump(mode="json")
        data["blocks"][2]["payload_subsets"][0] = [0, 1, 2, 99]
        path.write_text(json.dumps(data))
        with pytest.raises(FormatError, match="record 2") as info:
            load_blocks(path)
        assert info.value.index == 2

    def test_pore(self, tmp_path: Path, pore: PoreModel) -> None:
        path = tmp_path / "pore_model.json"
        save_document(path, PoreModelDocument.from_pore(pore))
        loaded = load_pore(path)
        np.testing.assert_array_equal(loaded.means, pore.means)
        assert pore_digest(loaded) == pore_digest(pore)

    def test_incomplete_pore_table(self, tmp_path: Path) -> None:
        path = tmp_path / "pore_model.json"
        path.write_text(json.dumps({"kmer_length": 1, "table": {"A": [80.0, 1.0]}}))
        with pytest.raises(FormatError, match="expected 4"):
            load_pore(path)

    def test_invalid_json(self, tmp_path: Path) -> None:
        path = tmp_path / "library.json"
        path.write_text("{not json")
        with pytest.raises(FormatError, match="invalid JSON"):
            load_library(path)

    def test_library_validation_error(self, tmp_path: Path) -> None:
        path = tmp_path / "library.json"
        path.write_text(json.dumps({"motif_length": 2, "spacer_length": 2, "motifs": ["AC", "AC"], "spacers": []}))
        with pytest.raises(FormatError, match="distinct"):
            load_library(path)


class TestReads:
    def test_roundtrip(self, tmp_path: Path) -> None:
        reads = [
            Read(read_id="r000000", block_id=0, orientation=Orientation.FORWARD, bases="ACGT"),
            Read(read_id="r000001", block_id=4, orientation=Orientation.REVERSE, bases=""),
        ]
        path = tmp_path / "reads.fasta"
        write_reads(path, reads)
        assert path.read_text().splitlines()[0] == ">r000000 block_id=0 orientation=forward"
        loaded = read_reads(path)
        assert [(r.read_id, r.block_id, r.orientation, r.bases) for r in loaded] == [
            ("r000000", 0, Orientation.FORWARD, "ACGT"),
            ("r000001", 4, Orientation.REVERSE, ""),
        ]

    def test_long_read_is_wrapped(self, tmp_path: Path) -> None:
        bases = "ACGTTGCA" * 20
        path = tmp_path / "reads.fasta"
        write_reads(path, [Read(read_id="r7", block_id=1, orientation=Orientation.FORWARD, bases=bases)])
        lines = path.read_text().splitlines()
        assert len(lines) > 2
        assert max(len(line) for line in lines[1:]) <= 60
        assert read_reads(path)[0].bases == bases

    def test_wrapped_sequence(self, tmp_path: Path) -> None:
        path = tmp_path / "reads.fasta"
        path.write_text(">r1 block_id=2 orientation=forward\nACG\nTTA\n")
        assert read_reads(path)[0].bases == "ACGTTA"

    def test_bad_header(self, tmp_path: Path) -> None:
        path = tmp_path / "reads.fasta"
        path.write_text(">r1 block_id=2\nACG\n")
        with pytest.raises(FormatError, match="r1"):
            read_reads(path)

    def test_sequence_before_header(self, tmp_path: Path) -> None:
        path = tmp_path / "reads.fasta"
        path.write_text("ACGT\n")
        with pytest.raises(FormatError, match="before the first header"):
            read_reads(path)

    def test_truth(self, tmp_path: Path) -> None:
        path = tmp_path / "truth.jsonl"
        write_jsonl(path, [make_truth_record("r1", 2, Orientation.FORWARD, [2, 5, 6], (1, 0, 2))])
        truth = read_truth(path)
        assert truth["r1"]["truth_motifs"] == [2, 5, 6]
        assert truth["r1"]["edits"] == [1, 0, 2]


class TestSignalFormats:
    def test_squiggles(self, tmp_path: Path) -> None:
        squiggles = [
            Squiggle(read_id="r1", samples=np.array([80.5, 91.25, 100.0])),
            Squiggle(read_id="r2", samples=np.zeros(0)),
        ]
        path = tmp_path / "squiggles.sqg"
        write_squiggles(path, squiggles)
        loaded = read_squiggles(path)
        assert [s.read_id for s in loaded] == ["r1", "r2"]
        np.testing.assert_array_equal(loaded[0].samples, [80.5, 91.25, 100.0])
        assert loaded[0].samples.dtype == np.float64
        assert len(loaded[1]) == 0

    def test_squiggle_bad_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.sqg"
        path.write_bytes(b"XXXX")
        with pytest.raises(FormatError, match="magic"):
            read_squiggles(path)

    def test_truncated_squiggle(self, tmp_path: Path) -> None:
        path = tmp_path / "cut.sqg"
        write_squiggles(path, [Squiggle(read_id="r1", samples=np.ones(10))])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="past end of file"):
            read_squiggles(path)

    def test_emissions(self, tmp_path: Path) -> None:
        emissions = EmissionMatrix(np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]))
        path = tmp_path / "r1.emx"
        write_emissions(path, emissions)
        loaded = read_emissions(path)
        np.testing.assert_allclose(loaded.probs, emissions.probs, atol=1e-7)
        np.testing.assert_allclose(loaded.probs.sum(axis=1), 1.0)

    def test_emissions_size_mismatch(self, tmp_path: Path) -> None:
        path = tmp_path / "r1.emx"
        write_emissions(path, EmissionMatrix(np.array([[0.5, 0.5]])))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="does not match"):
            read_emissions(path)


class TestCalls:
    def test_roundtrip_sorted(self, tmp_path: Path) -> None:
        header = make_calls_header(PipelineName.AM, "a" * 16, "b" * 16, "c" * 16)
        records = [
            make_call_record("r2", PipelineName.AM, FilterStatus.RETAINED, [1, None]),
            make_call_record("r1", PipelineName.AM, FilterStatus.RETAINED, [0, 3]),
        ]
        path = tmp_path / "calls_am.jsonl"
        write_calls(path, header, records)
        loaded_header, loaded = read_calls(path)
        assert loaded_header == header
        assert [r["read_id"] for r in loaded] == ["r1", "r2"]
        assert loaded[1]["slots"] == [1, None]

    def test_missing_header(self, tmp_path: Path) -> None:
        path = tmp_path / "calls.jsonl"
        write_jsonl(path, [{"read_id": "r1", "slots": []}])
        with pytest.raises(FormatError, match="header"):
            read_calls(path)


class TestTables:
    def test_csv(self, tmp_path: Path) -> None:
        path = tmp_path / "curve.csv"
        write_csv(path, ["n", "value"], [{"n": 1, "value": 0.5}, {"n": 2, "value": None}])
        assert path.read_text() == "n,value\n1,0.5\n2,\n"
        assert read_csv(path) == [{"n": "1", "value": "0.5"}, {"n": "2", "value": ""}]

    def test_no_partial_files_left(self, tmp_path: Path) -> None:
        write_csv(tmp_path / "a.csv", ["x"], [{"x": 1}])
        write_jsonl(tmp_path / "b.jsonl", [{}])
        write_squiggles(tmp_path / "c.sqg", [])
        assert not list(tmp_path.glob("*.partial"))
