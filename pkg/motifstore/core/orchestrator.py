"""Experiment orchestration: corpus simulation, batch decoding, pipeline comparison and the toy model.

Every random draw is seeded from (master seed, block id, read index, purpose tag),
so results do not depend on the number of worker threads or on execution order.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from motifstore.core.align import edit_distance
from motifstore.core.config import ExperimentConfig
from motifstore.core.motifs import Block, BlockLayout, MotifLibrary, generate_library
from motifstore.core.registry import DecoderContext, build_decoder, get_pipeline
from motifstore.data.recovery import (
    DilutionRow,
    ReadOutcome,
    RecoveryReport,
    SweepRow,
    decoding_accuracy,
    quality_sweep,
    recovery_curve,
)
from motifstore.data.schemas import (
    CallRecord,
    CoverageModel,
    FilterStatus,
    Orientation,
    PipelineName,
    SquiggleSource,
    TruthRecord,
    make_call_record,
    make_truth_record,
)
from motifstore.data.synthsim import (
    ChannelParams,
    PoreModel,
    Read,
    Squiggle,
    assemble,
    corrupt,
    generate_pore_model,
    oriented_sequence,
    reads_per_block,
    render_squiggle,
)
from motifstore.decoders.base import DecodeResult, MotifDecoder, SlotCalls
from motifstore.decoders.search import score_read_vs_truth
from motifstore.decoders.toy_model import BootstrapCandidate, ToyCall, ToyModelParams, label_bootstrap, toy_call

logger = logging.getLogger(__name__)

TAG_ASSEMBLE = 0
TAG_CHANNEL = 1
TAG_SQUIGGLE = 2
TAG_COVERAGE = 3
TAG_PORE = 11


def read_name(block_id: int, index: int) -> str:
    return f"b{block_id:06d}_r{index:04d}"


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class Corpus:
    """Simulated reads with their squiggles and truth, ordered by read_id."""

    library: MotifLibrary
    layout: BlockLayout
    pore: PoreModel
    blocks: list[Block]
    reads: list[Read] = field(default_factory=list)
    squiggles: dict[str, Squiggle] = field(default_factory=dict)
    truth: dict[str, TruthRecord] = field(default_factory=dict)


def build_library(config: ExperimentConfig) -> MotifLibrary:
    lib = config.library
    return generate_library(
        n_motifs=lib.n_motifs,
        motif_length=lib.motif_length,
        n_spacers=config.n_spacers,
        spacer_length=lib.spacer_length,
        min_distance=lib.min_distance,
        seed=config.seed,
        max_attempts=lib.max_attempts,
    )


def build_pore(config: ExperimentConfig) -> PoreModel:
    sq = config.squiggle
    return generate_pore_model(sq.kmer_length, (config.seed, TAG_PORE), std=sq.pore_std)


def _simulate_block(
    block: Block,
    library: MotifLibrary,
    layout: BlockLayout,
    pore: PoreModel,
    params: ChannelParams,
    config: ExperimentConfig,
    with_squiggles: bool,
) -> list[tuple[Read, Squiggle | None, TruthRecord]]:
    seed = config.seed
    n_reads = reads_per_block(params, (seed, block.block_id, 0, TAG_COVERAGE))
    out: list[tuple[Read, Squiggle | None, TruthRecord]] = []
    for index in range(n_reads):
        read_id = read_name(block.block_id, index)
        molecule = assemble(block, library, layout, (seed, block.block_id, index, TAG_ASSEMBLE))[0]
        read = corrupt(molecule, params, (seed, block.block_id, index, TAG_CHANNEL), read_id=read_id)
        squiggle = None
        if with_squiggles:
            if config.squiggle.source is SquiggleSource.READ:
                rendered = read.bases
            else:
                rendered = oriented_sequence(molecule, read.orientation)
            squiggle = render_squiggle(
                rendered,
                pore,
                config.squiggle.dwell_mean,
                config.squiggle.noise_std,
                (seed, block.block_id, index, TAG_SQUIGGLE),
                read_id=read_id,
            )
        truth = make_truth_record(read_id, block.block_id, read.orientation, list(molecule.chosen_motifs), read.edits)
        out.append((read, squiggle, truth))
    return out


def simulate_corpus(
    blocks: Sequence[Block],
    config: ExperimentConfig,
    library: MotifLibrary | None = None,
    pore: PoreModel | None = None,
    coverage: float | None = None,
    coverage_model: CoverageModel | None = None,
    with_squiggles: bool = True,
    threads: int | None = None,
) -> Corpus:
    """Assemble, corrupt and render reads for every block."""
    layout = config.block_layout()
    library = library or build_library(config)
    pore = pore or build_pore(config)
    params = config.channel_params(coverage, coverage_model)
    corpus = Corpus(library=library, layout=layout, pore=pore, blocks=sorted(blocks, key=lambda b: b.block_id))

    def work(block: Block) -> list[tuple[Read, Squiggle | None, TruthRecord]]:
        return _simulate_block(block, library, layout, pore, params, config, with_squiggles)

    with ThreadPoolExecutor(max_workers=max(1, threads or config.threads)) as pool:
        per_block = list(pool.map(work, corpus.blocks))

    for items in per_block:
        for read, squiggle, truth in items:
            corpus.reads.append(read)
            corpus.truth[read.read_id] = truth
            if squiggle is not None:
                corpus.squiggles[read.read_id] = squiggle
    corpus.reads.sort(key=lambda r: r.read_id)
    logger.info(
        "Simulated %d reads over %d blocks (coverage %.2f, %s)",
        len(corpus.reads),
        len(corpus.blocks),
        params.coverage,
        params.coverage_model,
    )
    return corpus


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def decoder_context(corpus: Corpus, config: ExperimentConfig) -> DecoderContext:
    return DecoderContext(library=corpus.library, layout=corpus.layout, config=config, pore=corpus.pore)


def decode_reads(
    decoder: MotifDecoder,
    read_ids: Sequence[str],
    reads: Mapping[str, Read],
    squiggles: Mapping[str, Squiggle],
    threads: int = 1,
) -> list[DecodeResult]:
    """Decode every read id; failures become unmappable results and are counted."""

    def work(read_id: str) -> tuple[DecodeResult, bool]:
        try:
            return decoder.decode(reads.get(read_id), squiggles.get(read_id)), False
        except ValueError as exc:
            logger.warning("Read %s could not be decoded by %s: %s", read_id, decoder.name, exc)
            return DecodeResult(read_id=read_id, status=FilterStatus.UNMAPPABLE, calls=None), True

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        done = list(pool.map(work, sorted(read_ids)))
    results = [r for r, _ in done]
    failures = sum(failed for _, failed in done)
    retained = sum(r.retained for r in results)
    logger.info(
        "%s: %d reads, %d retained, %d filtered/unmappable, %d failed",
        decoder.name,
        len(results),
        retained,
        len(results) - retained,
        failures,
    )
    return results


def decode_corpus(
    corpus: Corpus,
    pipeline: str,
    config: ExperimentConfig,
    ctx: DecoderContext | None = None,
) -> list[DecodeResult]:
    entry = get_pipeline(pipeline)
    if entry["requires_squiggles"] and not corpus.squiggles:
        msg = f"Pipeline {pipeline} needs squiggles but the corpus has none"
        raise ValueError(msg)
    decoder = build_decoder(pipeline, ctx or decoder_context(corpus, config))
    reads = {r.read_id: r for r in corpus.reads}
    return decode_reads(decoder, list(reads), reads, corpus.squiggles, config.threads)


def to_call_record(result: DecodeResult, pipeline: PipelineName | str) -> CallRecord:
    calls = result.calls
    return make_call_record(
        read_id=result.read_id,
        pipeline=PipelineName(pipeline),
        status=result.status,
        slots=list(calls.slots) if calls is not None else [],
        orientation=calls.orientation if calls is not None else None,
        tokens=list(result.tokens),
        read_q=result.read_q,
        score=calls.score if calls is not None else 0.0,
    )


def outcomes_from_results(results: Iterable[DecodeResult], truth: Mapping[str, TruthRecord]) -> list[ReadOutcome]:
    return [
        ReadOutcome(
            read_id=r.read_id,
            block_id=truth[r.read_id]["block_id"],
            orientation=Orientation(truth[r.read_id]["orientation"]),
            status=r.status,
            calls=r.calls,
            read_q=r.read_q,
        )
        for r in results
    ]


def outcomes_from_records(records: Iterable[CallRecord], truth: Mapping[str, TruthRecord]) -> list[ReadOutcome]:
    """Rebuild per-read outcomes from a calls file joined with the truth sidecar."""
    outcomes = []
    for record in records:
        if record["read_id"] not in truth:
            msg = f"Call for unknown read {record['read_id']!r}"
            raise ValueError(msg)
        calls = None
        if record["slots"]:
            calls = SlotCalls(
                read_id=record["read_id"],
                slots=tuple(record["slots"]),
                orientation=Orientation(record["orientation"]) if record["orientation"] else None,
                score=record["score"],
            )
        t = truth[record["read_id"]]
        outcomes.append(
            ReadOutcome(
                read_id=record["read_id"],
                block_id=t["block_id"],
                orientation=Orientation(t["orientation"]),
                status=FilterStatus(record["status"]),
                calls=calls,
                read_q=record["read_q"],
            )
        )
    return outcomes


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def compare_pipelines(
    corpus: Corpus,
    config: ExperimentConfig,
    pipelines: Sequence[str] | None = None,
) -> dict[str, RecoveryReport]:
    """Recovery report per pipeline on one corpus."""
    ctx = decoder_context(corpus, config)
    reports: dict[str, RecoveryReport] = {}
    for pipeline in pipelines or [str(p) for p in config.recovery.pipelines]:
        results = decode_corpus(corpus, pipeline, config, ctx)
        outcomes = outcomes_from_results(results, corpus.truth)
        reports[str(pipeline)] = recovery_curve(outcomes, corpus.blocks, corpus.layout, config.recovery.threshold)
    return reports


def run_dilution(
    blocks: Sequence[Block],
    config: ExperimentConfig,
    coverages: Sequence[float] | None = None,
    pipelines: Sequence[str] | None = None,
    library: MotifLibrary | None = None,
    pore: PoreModel | None = None,
) -> list[DilutionRow]:
    """Decoding accuracy per pipeline on Poisson-coverage corpora at each mean coverage."""
    library = library or build_library(config)
    pore = pore or build_pore(config)
    pipelines = pipelines or [str(p) for p in config.recovery.pipelines]
    needs_squiggles = any(get_pipeline(p)["requires_squiggles"] for p in pipelines)
    rows: list[DilutionRow] = []
    for coverage in coverages or config.recovery.dilution_coverages:
        corpus = simulate_corpus(
            blocks, config, library, pore, coverage, CoverageModel.POISSON, with_squiggles=needs_squiggles
        )
        ctx = decoder_context(corpus, config)
        for pipeline in pipelines:
            outcomes = outcomes_from_results(decode_corpus(corpus, pipeline, config, ctx), corpus.truth)
            accuracy = decoding_accuracy(outcomes, corpus.blocks, corpus.layout)
            rows.append(DilutionRow(pipeline=str(pipeline), coverage=coverage, accuracy=accuracy, reads=len(outcomes)))
            logger.info("Dilution %.2f reads/block, %s: accuracy %.4f", coverage, pipeline, accuracy)
    rows.sort(key=lambda r: (r.pipeline, -r.coverage))
    return rows


def run_quality_sweep(
    outcomes: Sequence[ReadOutcome],
    blocks: Sequence[Block],
    layout: BlockLayout,
    config: ExperimentConfig,
) -> list[SweepRow]:
    return quality_sweep(outcomes, blocks, layout, config.recovery.quality_thresholds)


def bootstrap_candidates(
    results: Iterable[DecodeResult],
    blocks: Sequence[Block],
    truth: Mapping[str, TruthRecord],
    layout: BlockLayout,
) -> list[BootstrapCandidate]:
    """AM calls as label candidates, scored against the pre-synthesis block truth.

    Labels are the called motif ids in the order the pore reads them; uncalled slots are skipped.
    """
    by_id = {b.block_id: b for b in blocks}
    candidates = []
    for result in results:
        if result.calls is None or not result.retained:
            continue
        block = by_id[truth[result.read_id]["block_id"]]
        score = score_read_vs_truth(result.calls, block.slot_sets(), layout)
        called = [m for m in result.calls.slots if m is not None]
        if result.calls.orientation is Orientation.REVERSE:
            called.reverse()
        if called:
            candidates.append(BootstrapCandidate(result.read_id, tuple(called), score.detected))
    return candidates


def build_training_set(
    corpus: Corpus,
    config: ExperimentConfig,
    am_results: Iterable[DecodeResult] | None = None,
) -> list[tuple[Squiggle, tuple[int, ...]]]:
    """Top fraction of AM-labelled reads paired with their squiggles."""
    if am_results is None:
        am_results = decode_corpus(corpus, PipelineName.AM, config)
    candidates = bootstrap_candidates(am_results, corpus.blocks, corpus.truth, corpus.layout)
    selected = label_bootstrap(candidates, config.training.top_fraction)
    training = [(corpus.squiggles[c.read_id], c.tokens) for c in selected if c.read_id in corpus.squiggles]
    logger.info("Bootstrapped %d training reads from %d AM candidates", len(training), len(candidates))
    return training


def truth_labels(truth: TruthRecord) -> tuple[int, ...]:
    """True motif ids of a read's molecule in the order the pore reads them."""
    labels = list(truth["truth_motifs"])
    if truth["orientation"] == Orientation.REVERSE:
        labels.reverse()
    return tuple(labels)


@dataclass(frozen=True)
class ToyEvaluation:
    """Greedy toy-model calls on held-out squiggles, scored against their truth labels."""

    calls: tuple[ToyCall, ...]
    labels: tuple[tuple[int, ...], ...]
    distances: tuple[int, ...]

    @property
    def n_reads(self) -> int:
        return len(self.calls)

    @property
    def token_error_rate(self) -> float:
        """Token edit distance summed over reads, per true label."""
        total = sum(len(labels) for labels in self.labels)
        return sum(self.distances) / total if total else 0.0

    @property
    def exact_fraction(self) -> float:
        return sum(d == 0 for d in self.distances) / self.n_reads if self.n_reads else 0.0

    @property
    def mean_read_q(self) -> float:
        return sum(c.read_q for c in self.calls) / self.n_reads if self.n_reads else 0.0


def evaluate_toy_model(params: ToyModelParams, corpus: Corpus, exclude: Iterable[str] = ()) -> ToyEvaluation:
    """Call every squiggle not in ``exclude`` (usually the training reads) with the toy model."""
    skip = set(exclude)
    held_out = sorted(read_id for read_id in corpus.squiggles if read_id not in skip)
    calls = tuple(toy_call(params, corpus.squiggles[read_id]) for read_id in held_out)
    labels = tuple(truth_labels(corpus.truth[read_id]) for read_id in held_out)
    distances = tuple(edit_distance(call.tokens, truth) for call, truth in zip(calls, labels, strict=True))
    evaluation = ToyEvaluation(calls=calls, labels=labels, distances=distances)
    if not held_out:
        logger.warning("No held-out squiggles to evaluate the toy model on")
    else:
        logger.info(
            "Toy model on %d held-out reads: token error rate %.4f, exact %.3f, mean Q %.2f",
            evaluation.n_reads,
            evaluation.token_error_rate,
            evaluation.exact_fraction,
            evaluation.mean_read_q,
        )
    return evaluation
