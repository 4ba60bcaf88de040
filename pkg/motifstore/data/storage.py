"""On-disk formats: library, blocks, pore model, reads, truth, squiggles, emissions, calls and tables.

Structured documents are validated with pydantic on load. Every primary output
goes through a ``.partial`` file that is renamed into place once complete.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import struct
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from Bio import SeqIO
from Bio.Seq import Seq
from Bio.SeqRecord import SeqRecord
from pydantic import BaseModel, ValidationError, model_validator

from motifstore.core.motifs import Block, BlockLayout, CompositeSymbol, MotifLibrary
from motifstore.data.schemas import (
    CALLS_FORMAT,
    CallRecord,
    CallsHeader,
    CodecMode,
    Orientation,
    TruthRecord,
)
from motifstore.data.synthsim import PoreModel, Read, Squiggle
from motifstore.decoders.ctc import EmissionMatrix

logger = logging.getLogger(__name__)

SQUIGGLE_MAGIC = b"SQG1"
EMISSION_MAGIC = b"EMX1"
MANIFEST_FORMAT = "motifstore-manifest/1"
PARTIAL_SUFFIX = ".partial"


class FormatError(ValueError):
    """A file could not be parsed; names the path and, when known, the record index."""

    def __init__(self, path: Path, detail: str, index: int | None = None) -> None:
        self.path = path
        self.index = index
        where = f"{path}" if index is None else f"{path} (record {index})"
        super().__init__(f"{where}: {detail}")


class CorpusMismatchError(ValueError):
    """Files that must describe the same corpus carry different content digests."""


# ---------------------------------------------------------------------------
# Digests and atomic writes
# ---------------------------------------------------------------------------


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_digest(obj: Any) -> str:
    """64-bit BLAKE2b of the canonical JSON form, hex-encoded."""
    return hashlib.blake2b(canonical_json(obj).encode("utf-8"), digest_size=8).hexdigest()


def partial_path(path: Path) -> Path:
    return path.with_name(path.name + PARTIAL_SUFFIX)


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = partial_path(path)
    tmp.write_bytes(data)
    tmp.replace(path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _read_json(path: Path) -> Any:
    try:
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _validate[M: BaseModel](model: type[M], path: Path, data: Any) -> M:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise FormatError(path, str(exc)) from exc


# ---------------------------------------------------------------------------
# Structured documents
# ---------------------------------------------------------------------------


class LibraryDocument(BaseModel):
    motif_length: int
    spacer_length: int
    motifs: list[str]
    spacers: list[str]

    @classmethod
    def from_library(cls, library: MotifLibrary) -> LibraryDocument:
        return cls(
            motif_length=library.motif_length,
            spacer_length=library.spacer_length,
            motifs=list(library.motifs),
            spacers=list(library.spacers),
        )

    def to_library(self) -> MotifLibrary:
        return MotifLibrary(
            motifs=tuple(self.motifs),
            spacers=tuple(self.spacers),
            motif_length=self.motif_length,
            spacer_length=self.spacer_length,
        )


class LayoutDocument(BaseModel):
    n_address_slots: int
    n_payload_slots: int
    k: int
    library_size: int
    spacer_length: int

    @classmethod
    def from_layout(cls, layout: BlockLayout) -> LayoutDocument:
        return cls(
            n_address_slots=layout.n_address_slots,
            n_payload_slots=layout.n_payload_slots,
            k=layout.k,
            library_size=layout.library_size,
            spacer_length=layout.spacer_length,
        )

    def to_layout(self) -> BlockLayout:
        return BlockLayout(**self.model_dump())


class BlockEntry(BaseModel):
    block_id: int
    address: list[int]
    payload_subsets: list[list[int]]

    def to_block(self) -> Block:
        return Block(
            block_id=self.block_id,
            address=tuple(self.address),
            payloads=tuple(CompositeSymbol(tuple(s)) for s in self.payload_subsets),
        )


class BlocksDocument(BaseModel):
    layout: LayoutDocument
    codec_mode: CodecMode
    padding_bits: int
    blocks: list[BlockEntry]

    @classmethod
    def build(
        cls, blocks: Sequence[Block], layout: BlockLayout, codec_mode: CodecMode, padding_bits: int
    ) -> BlocksDocument:
        return cls(
            layout=LayoutDocument.from_layout(layout),
            codec_mode=codec_mode,
            padding_bits=padding_bits,
            blocks=[
                BlockEntry(
                    block_id=b.block_id,
                    address=list(b.address),
                    payload_subsets=[list(p.subset) for p in b.payloads],
                )
                for b in blocks
            ],
        )

    def to_blocks(self) -> list[Block]:
        return [entry.to_block() for entry in self.blocks]


class PoreModelDocument(BaseModel):
    kmer_length: int
    table: dict[str, tuple[float, float]]  # k-mer -> (mean pA, std pA)

    @model_validator(mode="after")
    def _complete(self) -> PoreModelDocument:
        if len(self.table) != 4**self.kmer_length:
            msg = f"pore table has {len(self.table)} k-mers, expected {4**self.kmer_length}"
            raise ValueError(msg)
        return self

    @classmethod
    def from_pore(cls, pore: PoreModel) -> PoreModelDocument:
        return cls(kmer_length=pore.kmer_length, table=pore.table())

    def to_pore(self) -> PoreModel:
        # base-4 index order is lexicographic order over ACGT
        rows = [self.table[kmer] for kmer in sorted(self.table)]
        return PoreModel(
            kmer_length=self.kmer_length,
            means=np.array([r[0] for r in rows], dtype=np.float64),
            stds=np.array([r[1] for r in rows], dtype=np.float64),
        )


class ManifestDocument(BaseModel):
    format: str = MANIFEST_FORMAT
    library_digest: str
    pore_digest: str
    blocks_digest: str
    n_blocks: int
    n_reads: int
    layout: LayoutDocument


class ToyModelDocument(BaseModel):
    window: int
    stride: int
    n_tokens: int
    features: list[str]
    weights: list[list[float]]
    bias: list[float]
    feature_mean: list[float]
    feature_std: list[float]

    @model_validator(mode="after")
    def _shapes(self) -> ToyModelDocument:
        n_features = len(self.features)
        if len(self.weights) != self.n_tokens or any(len(row) != n_features for row in self.weights):
            msg = f"weights must be {self.n_tokens} x {n_features}"
            raise ValueError(msg)
        if len(self.bias) != self.n_tokens:
            msg = f"bias must have {self.n_tokens} entries"
            raise ValueError(msg)
        if len(self.feature_mean) != n_features or len(self.feature_std) != n_features:
            msg = f"feature statistics must have {n_features} entries"
            raise ValueError(msg)
        return self


def library_digest(library: MotifLibrary) -> str:
    return content_digest(LibraryDocument.from_library(library).model_dump(mode="json"))


def pore_digest(pore: PoreModel) -> str:
    return content_digest(PoreModelDocument.from_pore(pore).model_dump(mode="json"))


def blocks_digest(document: BlocksDocument) -> str:
    return content_digest(document.model_dump(mode="json"))


def save_document(path: Path, document: BaseModel) -> None:
    write_json(path, document.model_dump(mode="json"))


def load_library(path: Path) -> MotifLibrary:
    document = _validate(LibraryDocument, path, _read_json(path))
    try:
        return document.to_library()
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


def load_blocks(path: Path) -> BlocksDocument:
    document = _validate(BlocksDocument, path, _read_json(path))
    layout = document.layout.to_layout()
    for index, entry in enumerate(document.blocks):
        try:
            entry.to_block().check(layout)
        except ValueError as exc:
            raise FormatError(path, str(exc), index) from exc
    return document


def load_pore(path: Path) -> PoreModel:
    return _validate(PoreModelDocument, path, _read_json(path)).to_pore()


def load_manifest(path: Path) -> ManifestDocument:
    return _validate(ManifestDocument, path, _read_json(path))


def load_toy_model(path: Path) -> ToyModelDocument:
    return _validate(ToyModelDocument, path, _read_json(path))


def verify_digest(expected: str, actual: str, what: str, path: Path) -> None:
    if expected != actual:
        msg = f"{path}: {what} digest {actual} does not match manifest {expected}"
        raise CorpusMismatchError(msg)


# ---------------------------------------------------------------------------
# Reads and truth
# ---------------------------------------------------------------------------


def _to_record(read: Read) -> SeqRecord:
    return SeqRecord(
        Seq(read.bases),
        id=read.read_id,
        description=f"block_id={read.block_id} orientation={read.orientation}",
    )


def format_reads(reads: Iterable[Read]) -> str:
    buffer = io.StringIO()
    SeqIO.write((_to_record(read) for read in reads), buffer, "fasta")
    return buffer.getvalue()


def write_reads(path: Path, reads: Iterable[Read]) -> None:
    atomic_write_text(path, format_reads(reads))


def read_reads(path: Path) -> list[Read]:
    """Parse a FASTA reads file whose descriptions carry block_id and orientation."""
    text = path.read_text(encoding="utf-8")
    if text.strip() and not text.lstrip().startswith(">"):
        raise FormatError(path, "sequence line before the first header", 0)
    try:
        records = list(SeqIO.parse(io.StringIO(text), "fasta"))
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc

    reads: list[Read] = []
    for index, record in enumerate(records):
        if not record.id:
            raise FormatError(path, "empty header", index)
        fields = dict(field.split("=", 1) for field in record.description.split()[1:] if "=" in field)
        try:
            reads.append(
                Read(
                    read_id=record.id,
                    block_id=int(fields["block_id"]),
                    orientation=Orientation(fields["orientation"]),
                    bases=str(record.seq),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(path, f"bad header for {record.id!r}: {exc}", index) from exc
    logger.debug("Read %d reads from %s", len(reads), path)
    return reads


def write_jsonl(path: Path, records: Iterable[Any]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def read_jsonl(path: Path) -> list[Any]:
    records = []
    with path.open("r", encoding="utf-8") as f:
        for index, line in enumerate(f):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(path, f"invalid JSON ({exc.msg})", index) from exc
    return records


def read_truth(path: Path) -> dict[str, TruthRecord]:
    truth: dict[str, TruthRecord] = {}
    for index, record in enumerate(read_jsonl(path)):
        if not isinstance(record, dict) or "read_id" not in record or "truth_motifs" not in record:
            raise FormatError(path, "truth record needs read_id and truth_motifs", index)
        truth[record["read_id"]] = TruthRecord(**record)  # type: ignore[typeddict-item]
    return truth


# ---------------------------------------------------------------------------
# Binary signal formats
# ---------------------------------------------------------------------------


def encode_squiggles(squiggles: Iterable[Squiggle]) -> bytes:
    buffer = io.BytesIO()
    buffer.write(SQUIGGLE_MAGIC)
    for squiggle in squiggles:
        name = squiggle.read_id.encode("utf-8")
        buffer.write(struct.pack("<H", len(name)))
        buffer.write(name)
        samples = np.asarray(squiggle.samples, dtype="<f4")
        buffer.write(struct.pack("<I", samples.shape[0]))
        buffer.write(samples.tobytes())
    return buffer.getvalue()


def write_squiggles(path: Path, squiggles: Iterable[Squiggle]) -> None:
    atomic_write_bytes(path, encode_squiggles(squiggles))


def read_squiggles(path: Path) -> list[Squiggle]:
    """Parse an SQG1 file; samples come back as float64."""
    data = path.read_bytes()
    if data[:4] != SQUIGGLE_MAGIC:
        raise FormatError(path, f"bad magic {data[:4]!r}, expected {SQUIGGLE_MAGIC!r}")
    squiggles: list[Squiggle] = []
    offset = 4
    while offset < len(data):
        index = len(squiggles)
        try:
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            read_id = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (count,) = struct.unpack_from("<I", data, offset)
            offset += 4
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(path, f"truncated record header: {exc}", index) from exc
        end = offset + 4 * count
        if end > len(data):
            raise FormatError(path, f"record {read_id!r} declares {count} samples past end of file", index)
        samples = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64)
        squiggles.append(Squiggle(read_id=read_id, samples=samples))
        offset = end
    return squiggles


def encode_emissions(emissions: EmissionMatrix) -> bytes:
    rows, cols = emissions.probs.shape
    return EMISSION_MAGIC + struct.pack("<II", rows, cols) + np.asarray(emissions.probs, dtype="<f4").tobytes()


def write_emissions(path: Path, emissions: EmissionMatrix) -> None:
    atomic_write_bytes(path, encode_emissions(emissions))


def read_emissions(path: Path) -> EmissionMatrix:
    """Parse an EMX1 file; rows are renormalized in float64 after the 32-bit round trip."""
    data = path.read_bytes()
    if data[:4] != EMISSION_MAGIC:
        raise FormatError(path, f"bad magic {data[:4]!r}, expected {EMISSION_MAGIC!r}")
    if len(data) < 12:
        raise FormatError(path, "missing dimensions")
    rows, cols = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * rows * cols:
        raise FormatError(path, f"{rows}x{cols} matrix does not match payload of {len(data) - 12} bytes")
    probs = np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64).reshape(rows, cols)
    try:
        return EmissionMatrix.from_unnormalized(probs)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


# ---------------------------------------------------------------------------
# Calls files and tables
# ---------------------------------------------------------------------------


def write_calls(path: Path, header: CallsHeader, records: Iterable[CallRecord]) -> None:
    """Header line, then one record per read sorted by read_id."""
    ordered = sorted(records, key=lambda r: r["read_id"])
    write_jsonl(path, [header, *ordered])


def read_calls(path: Path) -> tuple[CallsHeader, list[CallRecord]]:
    lines = read_jsonl(path)
    if not lines or not isinstance(lines[0], dict) or lines[0].get("format") != CALLS_FORMAT:
        raise FormatError(path, f"missing {CALLS_FORMAT} header", 0)
    header = CallsHeader(**lines[0])  # type: ignore[typeddict-item]
    records: list[CallRecord] = []
    for index, record in enumerate(lines[1:], start=1):
        if not isinstance(record, dict) or "read_id" not in record or "slots" not in record:
            raise FormatError(path, "call record needs read_id and slots", index)
        records.append(CallRecord(**record))  # type: ignore[typeddict-item]
    return header, records


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    atomic_write_text(path, buffer.getvalue())


def read_csv(path: Path) -> list[dict[str, Any]]:
    with path.open("r", encoding="utf-8") as f:
        return [dict(row) for row in csv.DictReader(f)]

