"""Command-line entry point: ``motifstore <subcommand>``.

Every subcommand writes ``config.json`` (the resolved experiment config) and
appends to ``run_log.jsonl`` in its output directory. Exit code 0 on success,
1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import textwrap
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from motifstore.core.config import ExperimentConfig, load_config
from motifstore.core.motifs import Block, CompositeSymbol
from motifstore.core.orchestrator import (
    Corpus,
    build_library,
    build_pore,
    build_training_set,
    decode_corpus,
    evaluate_toy_model,
    outcomes_from_records,
    run_dilution,
    run_quality_sweep,
    simulate_corpus,
    to_call_record,
)
from motifstore.core.registry import get_pipeline
from motifstore.data.audit import record_run, start_run_log
from motifstore.data.codec import CodecConfig, bits_to_bytes, bytes_to_bits, decode, encode
from motifstore.data.recovery import RecoveryReport, recovery_curve
from motifstore.data.schemas import (
    CallRecord,
    CoverageModel,
    FilterStatus,
    PipelineName,
    make_calls_header,
    make_toy_call_record,
)
from motifstore.data.storage import (
    BlocksDocument,
    CorpusMismatchError,
    LibraryDocument,
    ManifestDocument,
    PoreModelDocument,
    ToyModelDocument,
    atomic_write_bytes,
    atomic_write_text,
    blocks_digest,
    library_digest,
    load_blocks,
    load_library,
    load_manifest,
    load_pore,
    load_toy_model,
    pore_digest,
    read_calls,
    read_reads,
    read_squiggles,
    read_truth,
    save_document,
    verify_digest,
    write_calls,
    write_csv,
    write_emissions,
    write_json,
    write_jsonl,
    write_reads,
    write_squiggles,
)
from motifstore.decoders.base import DecodeResult
from motifstore.decoders.ctc import TokenAlphabet
from motifstore.decoders.toy_model import ToyModelParams, train_toy_caller
from motifstore.selftest import run_selftest

logger = logging.getLogger(__name__)

BLOCKS_FILE = "blocks.json"
LIBRARY_FILE = "library.json"
PORE_FILE = "pore_model.json"
READS_FILE = "reads.fasta"
TRUTH_FILE = "truth.jsonl"
SQUIGGLES_FILE = "squiggles.sqg"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.json"
TOY_MODEL_FILE = "toy_model.json"


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------


@dataclass
class LoadedCorpus:
    """A simulated corpus read back from disk, digests checked against its manifest."""

    directory: Path
    manifest: ManifestDocument
    blocks_document: BlocksDocument
    corpus: Corpus


def load_corpus(directory: Path, with_squiggles: bool) -> LoadedCorpus:
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        msg = f"No corpus manifest at {manifest_path}"
        raise FileNotFoundError(msg)
    manifest = load_manifest(manifest_path)
    library = load_library(directory / LIBRARY_FILE)
    pore = load_pore(directory / PORE_FILE)
    blocks_document = load_blocks(directory / BLOCKS_FILE)
    verify_digest(manifest.library_digest, library_digest(library), "library", directory / LIBRARY_FILE)
    verify_digest(manifest.pore_digest, pore_digest(pore), "pore model", directory / PORE_FILE)
    verify_digest(manifest.blocks_digest, blocks_digest(blocks_document), "blocks", directory / BLOCKS_FILE)

    corpus = Corpus(
        library=library,
        layout=manifest.layout.to_layout(),
        pore=pore,
        blocks=blocks_document.to_blocks(),
        reads=read_reads(directory / READS_FILE),
        truth=read_truth(directory / TRUTH_FILE),
    )
    if with_squiggles:
        squiggle_path = directory / SQUIGGLES_FILE
        if not squiggle_path.exists():
            msg = f"Squiggle file not found: {squiggle_path}"
            raise FileNotFoundError(msg)
        corpus.squiggles = {s.read_id: s for s in read_squiggles(squiggle_path)}
    if len(corpus.reads) != manifest.n_reads:
        msg = f"{directory / READS_FILE}: {len(corpus.reads)} reads, manifest lists {manifest.n_reads}"
        raise CorpusMismatchError(msg)
    return LoadedCorpus(directory=directory, manifest=manifest, blocks_document=blocks_document, corpus=corpus)


def _prepare_out(config: ExperimentConfig) -> Path:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / CONFIG_FILE, config.experiment_dump())
    start_run_log(out)
    return out


def _relative(path: Path, out: Path) -> str:
    """``path`` as seen from the output directory, for run-log entries."""
    return os.path.relpath(path.resolve(), out.resolve())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_encode(args: argparse.Namespace, config: ExperimentConfig) -> int:
    source = Path(args.input)
    data = source.read_bytes()
    layout = config.block_layout()
    encoded = encode(bytes_to_bits(data), layout, CodecConfig(config.codec_mode))
    out = _prepare_out(config)
    document = BlocksDocument.build(encoded.blocks, layout, config.codec_mode, encoded.padding_bits)
    save_document(out / BLOCKS_FILE, document)
    record_run(
        out,
        "encode",
        input=_relative(source, out),
        bytes=len(data),
        blocks=len(encoded.blocks),
        padding_bits=encoded.padding_bits,
        blocks_digest=blocks_digest(document),
    )
    logger.info("Wrote %d blocks to %s", len(encoded.blocks), out / BLOCKS_FILE)
    return 0


def cmd_simulate(args: argparse.Namespace, config: ExperimentConfig) -> int:
    blocks_path = Path(args.blocks)
    document = load_blocks(blocks_path)
    layout = config.block_layout()
    if document.layout.to_layout() != layout:
        msg = f"{blocks_path}: block layout {document.layout.model_dump()} differs from the configured layout"
        raise CorpusMismatchError(msg)
    library = build_library(config)
    pore = build_pore(config)
    corpus = simulate_corpus(document.to_blocks(), config, library, pore)

    out = _prepare_out(config)
    save_document(out / LIBRARY_FILE, LibraryDocument.from_library(library))
    save_document(out / PORE_FILE, PoreModelDocument.from_pore(pore))
    save_document(out / BLOCKS_FILE, document)
    write_reads(out / READS_FILE, corpus.reads)
    write_jsonl(out / TRUTH_FILE, [corpus.truth[r.read_id] for r in corpus.reads])
    write_squiggles(out / SQUIGGLES_FILE, [corpus.squiggles[r.read_id] for r in corpus.reads])
    manifest = ManifestDocument(
        library_digest=library_digest(library),
        pore_digest=pore_digest(pore),
        blocks_digest=blocks_digest(document),
        n_blocks=len(corpus.blocks),
        n_reads=len(corpus.reads),
        layout=document.layout,
    )
    save_document(out / MANIFEST_FILE, manifest)
    record_run(
        out,
        "simulate",
        blocks=_relative(blocks_path, out),
        reads=len(corpus.reads),
        library_digest=manifest.library_digest,
        pore_digest=manifest.pore_digest,
    )
    return 0


def _write_pipeline_calls(
    loaded: LoadedCorpus,
    pipeline: str,
    config: ExperimentConfig,
    out: Path,
) -> list[DecodeResult]:
    results = decode_corpus(loaded.corpus, pipeline, config)
    records = [to_call_record(r, pipeline) for r in results]
    header = make_calls_header(
        PipelineName(pipeline),
        loaded.manifest.library_digest,
        loaded.manifest.pore_digest,
        loaded.manifest.blocks_digest,
    )
    write_calls(out / f"calls_{pipeline}.jsonl", header, records)
    counts = {str(s): sum(r["status"] == s for r in records) for s in FilterStatus}
    record_run(out, "decode", pipeline=pipeline, corpus=_relative(loaded.directory, out), reads=len(records), **counts)
    logger.info("%s calls: %s", pipeline, counts)
    return results


def cmd_call(args: argparse.Namespace, config: ExperimentConfig) -> int:
    method = args.method or PipelineName.CALLER
    if not get_pipeline(method)["requires_squiggles"]:
        msg = f"Pipeline {method!r} is a search pipeline; use the search subcommand"
        raise ValueError(msg)
    loaded = load_corpus(Path(args.corpus), with_squiggles=True)
    out = _prepare_out(config)
    results = _write_pipeline_calls(loaded, method, config, out)
    if args.emissions:
        for result in results:
            if result.emissions is None:
                logger.warning("No emissions for %s (%s)", result.read_id, result.status)
                continue
            write_emissions(out / "emissions" / f"{result.read_id}.emx", result.emissions)
    return 0


def cmd_search(args: argparse.Namespace, config: ExperimentConfig) -> int:
    method = args.method or PipelineName.AM
    if get_pipeline(method)["requires_squiggles"]:
        msg = f"Pipeline {method!r} needs squiggles; use the call subcommand"
        raise ValueError(msg)
    loaded = load_corpus(Path(args.corpus), with_squiggles=False)
    out = _prepare_out(config)
    _write_pipeline_calls(loaded, method, config, out)
    return 0


def _load_calls(path: Path, loaded: LoadedCorpus) -> tuple[str, list[CallRecord]]:
    header, records = read_calls(path)
    manifest = loaded.manifest
    verify_digest(manifest.library_digest, header["library_digest"], "library", path)
    verify_digest(manifest.pore_digest, header["pore_digest"], "pore model", path)
    verify_digest(manifest.blocks_digest, header["blocks_digest"], "blocks", path)
    return header["pipeline"], records


def _recovered_blocks(report: RecoveryReport) -> list[Block] | None:
    blocks = []
    for outcome in report.blocks:
        if any(a is None for a in outcome.address) or any(p is None for p in outcome.payload):
            return None
        blocks.append(
            Block(
                block_id=outcome.block_id,
                address=tuple(a for a in outcome.address if a is not None),
                payloads=tuple(CompositeSymbol(p) for p in outcome.payload if p is not None),
            )
        )
    return blocks


def _write_recovery(pipeline: str, report: RecoveryReport, loaded: LoadedCorpus, out: Path) -> None:
    write_json(out / f"recovery_{pipeline}.json", {"pipeline": pipeline, **report.as_dict()})
    write_csv(
        out / f"curve_{pipeline}.csv",
        ["reads_per_block", "mean_reads", "slot_fraction", "block_fraction"],
        [
            {
                "reads_per_block": p.reads_per_block,
                "mean_reads": round(p.mean_reads, 6),
                "slot_fraction": round(p.slot_fraction, 6),
                "block_fraction": round(p.block_fraction, 6),
            }
            for p in report.curve
        ],
    )
    write_csv(
        out / f"blocks_{pipeline}.csv",
        ["block_id", "reads", "recovered", "address", "payload"],
        [
            {
                "block_id": b.block_id,
                "reads": b.reads,
                "recovered": int(b.recovered),
                "address": " ".join("-" if a is None else str(a) for a in b.address),
                "payload": " ".join("-" if s is None else ",".join(map(str, s)) for s in b.payload),
            }
            for b in report.blocks
        ],
    )
    recovered = _recovered_blocks(report)
    if recovered is None:
        logger.warning("%s: some blocks undecided, skipping payload decode", pipeline)
        return
    document = loaded.blocks_document
    layout = document.layout.to_layout()
    save_document(
        out / f"recovered_{pipeline}.json",
        BlocksDocument.build(recovered, layout, document.codec_mode, document.padding_bits),
    )
    try:
        bits = decode(recovered, layout, CodecConfig(document.codec_mode), document.padding_bits)
        atomic_write_bytes(out / f"decoded_{pipeline}.bin", bits_to_bytes(bits))
    except ValueError as exc:
        logger.warning("%s: recovered blocks do not decode: %s", pipeline, exc)


def _reports(args: argparse.Namespace, config: ExperimentConfig) -> tuple[LoadedCorpus, dict[str, Any]]:
    loaded = load_corpus(Path(args.corpus), with_squiggles=False)
    corpus = loaded.corpus
    reports: dict[str, Any] = {}
    for calls_path in map(Path, args.calls):
        pipeline, records = _load_calls(calls_path, loaded)
        outcomes = outcomes_from_records(records, corpus.truth)
        report = recovery_curve(outcomes, corpus.blocks, corpus.layout, config.recovery.threshold)
        reports[pipeline] = (report, outcomes)
    return loaded, reports


def cmd_recover(args: argparse.Namespace, config: ExperimentConfig) -> int:
    loaded, reports = _reports(args, config)
    out = _prepare_out(config)
    corpus = loaded.corpus
    for pipeline, (report, outcomes) in reports.items():
        _write_recovery(pipeline, report, loaded, out)
        if args.quality_sweep:
            rows = run_quality_sweep(outcomes, corpus.blocks, corpus.layout, config)
            write_csv(
                out / f"quality_{pipeline}.csv",
                ["threshold", "retained_fraction", "detected", "error", "defined"],
                [
                    {
                        "threshold": r.threshold,
                        "retained_fraction": round(r.retained_fraction, 6),
                        "detected": None if r.detected is None else round(r.detected, 6),
                        "error": None if r.error is None else round(r.error, 6),
                        "defined": int(r.defined),
                    }
                    for r in rows
                ],
            )
        record_run(
            out,
            "recover",
            pipeline=pipeline,
            coverage_to_threshold=report.coverage_to_threshold,
            recovered_fraction=round(report.recovered_fraction, 6),
        )
    if args.dilution:
        rows = run_dilution(
            corpus.blocks,
            config,
            pipelines=list(reports) or None,
            library=corpus.library,
            pore=corpus.pore,
        )
        write_csv(
            out / "dilution.csv",
            ["pipeline", "coverage", "accuracy", "reads"],
            [
                {"pipeline": r.pipeline, "coverage": r.coverage, "accuracy": round(r.accuracy, 6), "reads": r.reads}
                for r in rows
            ],
        )
        record_run(out, "dilution", coverages=config.recovery.dilution_coverages, rows=len(rows))
    return 0


def cmd_report(args: argparse.Namespace, config: ExperimentConfig) -> int:
    _, reports = _reports(args, config)
    out = _prepare_out(config)
    comparison = []
    orientation_rows = []
    for pipeline, (report, _) in reports.items():
        comparison.append(
            {
                "pipeline": pipeline,
                "coverage_to_threshold": _fmt(report.coverage_to_threshold),
                "full_convergence_coverage": _fmt(report.full_convergence_coverage),
                "recovered_fraction": round(report.recovered_fraction, 6),
                "retained_fraction": round(report.retained_fraction, 6),
                "mean_detected": _fmt(report.metrics.detected),
                "mean_error": _fmt(report.metrics.error),
            }
        )
        for name, metrics in report.by_orientation.items():
            orientation_rows.append(
                {
                    "pipeline": pipeline,
                    "orientation": name,
                    "reads": metrics.reads,
                    "mean_detected": _fmt(metrics.detected),
                    "mean_error": _fmt(metrics.error),
                }
            )
    write_csv(out / "comparison.csv", list(comparison[0]) if comparison else ["pipeline"], comparison)
    write_csv(
        out / "orientation.csv", ["pipeline", "orientation", "reads", "mean_detected", "mean_error"], orientation_rows
    )
    record_run(out, "report", pipelines=list(reports))
    for row in comparison:
        print(
            f"{row['pipeline']:>8}  coverage@{config.recovery.threshold:.0%}={row['coverage_to_threshold'] or '-':>10}"
            f"  detected={row['mean_detected'] or '-'}  error={row['mean_error'] or '-'}"
        )
    return 0


def _fmt(value: float | None) -> float | None:
    return None if value is None else round(value, 6)


def cmd_selftest(args: argparse.Namespace, config: ExperimentConfig) -> int:
    results = run_selftest()
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'}  {result.name}  ({result.detail})")
    return 0 if all(r.passed for r in results) else 1


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> int:
    loaded = load_corpus(Path(args.corpus), with_squiggles=True)
    corpus = loaded.corpus
    training = build_training_set(corpus, config)
    n_tokens = TokenAlphabet(corpus.library.n_motifs).size
    init = None
    if args.init:
        init = ToyModelParams.from_dict(load_toy_model(Path(args.init)).model_dump())
    result = train_toy_caller(
        training,
        n_tokens=n_tokens,
        init=init,
        epochs=config.training.epochs,
        learning_rate=config.training.learning_rate,
        window=config.training.window,
        stride=config.training.stride,
        seed=config.seed,
    )
    out = _prepare_out(config)
    save_document(out / TOY_MODEL_FILE, ToyModelDocument(**result.params.as_dict()))
    write_csv(
        out / "training_loss.csv",
        ["epoch", "loss"],
        [{"epoch": i, "loss": round(loss, 9)} for i, loss in enumerate(result.history)],
    )
    summary: dict[str, Any] = {}
    if args.evaluate:
        trained_on = {squiggle.read_id for squiggle, _ in training}
        evaluation = evaluate_toy_model(result.params, corpus, exclude=trained_on)
        write_jsonl(
            out / "toy_calls.jsonl",
            [
                make_toy_call_record(call.read_id, call.tokens, labels, distance, call.read_q)
                for call, labels, distance in zip(
                    evaluation.calls, evaluation.labels, evaluation.distances, strict=True
                )
            ],
        )
        summary = {
            "held_out": evaluation.n_reads,
            "token_error_rate": round(evaluation.token_error_rate, 9),
            "exact_fraction": round(evaluation.exact_fraction, 9),
            "mean_read_q": round(evaluation.mean_read_q, 6),
        }
        write_json(out / "toy_evaluation.json", summary)
    record_run(
        out,
        "train",
        corpus=_relative(loaded.directory, out),
        samples=len(training),
        skipped=result.skipped,
        initial_loss=round(result.history[0], 9) if result.history else None,
        final_loss=round(result.history[-1], 9) if result.history else None,
        **summary,
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

Handler = Callable[[argparse.Namespace, ExperimentConfig], int]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-level", help="logging level (default: INFO)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motifstore",
        description="Motif-based DNA storage: encode, simulate, decode and recover.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=textwrap.dedent("""\
            examples:
              motifstore encode data.bin --out run/enc
              motifstore simulate run/enc/blocks.json --out run/sim --coverage 30
              motifstore search run/sim --method am --out run/dec
              motifstore call run/sim --out run/dec
              motifstore report run/sim run/dec/calls_ze.jsonl run/dec/calls_am.jsonl \\
                  run/dec/calls_caller.jsonl --out run/report
        """),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="pack a file into composite-motif blocks")
    p.add_argument("input")
    _common(p)
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("simulate", help="synthesize, sequence and render squiggles for a blocks file")
    p.add_argument("blocks")
    p.add_argument("--coverage", type=float, help="mean reads per block")
    p.add_argument("--coverage-model", choices=[m.value for m in CoverageModel])
    _common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("call", help="decode squiggles with the caller (or the hybrid pipeline)")
    p.add_argument("corpus")
    p.add_argument("--method", choices=[PipelineName.CALLER.value, PipelineName.HYBRID.value])
    p.add_argument("--emissions", action="store_true", help="also write EMX1 emission matrices")
    _common(p)
    p.set_defaults(handler=cmd_call)

    p = sub.add_parser("search", help="decode base-level reads with a search pipeline")
    p.add_argument("corpus")
    p.add_argument("--method", choices=[PipelineName.ZE.value, PipelineName.AM.value])
    _common(p)
    p.set_defaults(handler=cmd_search)

    for name, handler, help_text in (
        ("recover", cmd_recover, "majority-vote recovery per calls file"),
        ("report", cmd_report, "compare pipelines from their calls files"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("corpus")
        p.add_argument("calls", nargs="+")
        if name == "recover":
            p.add_argument("--quality-sweep", action="store_true", help="retention vs read-quality threshold table")
            p.add_argument("--dilution", action="store_true", help="re-simulate at the configured dilution coverages")
        _common(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("train", help="train the toy CTC model on AM-bootstrapped labels")
    p.add_argument("corpus")
    p.add_argument("--init", help="toy model to continue training from")
    p.add_argument("--epochs", type=int)
    p.add_argument("--evaluate", action="store_true", help="call the held-out squiggles with the trained model")
    _common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("selftest", help="run the brute-force oracle checks")
    _common(p)
    p.set_defaults(handler=cmd_selftest)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.log_level is not None:
        overrides["log_level"] = args.log_level
    channel: dict[str, Any] = {}
    if getattr(args, "coverage", None) is not None:
        channel["coverage"] = args.coverage
    if getattr(args, "coverage_model", None) is not None:
        channel["coverage_model"] = args.coverage_model
    if channel:
        overrides["channel"] = channel
    if getattr(args, "epochs", None) is not None:
        overrides["training"] = {"epochs": args.epochs}
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(Path(args.config) if args.config else None, _overrides(args))
        logging.getLogger().setLevel(config.log_level.upper())
        handler: Handler = args.handler
        return handler(args, config)
    except Exception as exc:
        logger.exception("motifstore %s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
