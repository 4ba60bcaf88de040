"""Brute-force oracle checks runnable without pytest (``motifstore selftest``)."""

from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from motifstore.data.codec import choose, subset_rank, subset_unrank
from motifstore.decoders.ctc import (
    EmissionMatrix,
    beam_decode,
    collapse,
    ctc_forward,
    ctc_gradient,
    log_softmax,
    quality,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_emissions(rng: np.random.Generator, n_windows: int, n_tokens: int) -> np.ndarray:
    return log_softmax(rng.normal(0.0, 1.5, size=(n_windows, n_tokens)))


def labelling_probabilities(log_probs: np.ndarray) -> dict[tuple[int, ...], float]:
    """Exact probability of every collapsed labelling by enumerating all paths."""
    n_windows, n_tokens = log_probs.shape
    blank = n_tokens - 1
    probs = np.exp(log_probs)
    totals: dict[tuple[int, ...], float] = defaultdict(float)
    for path in itertools.product(range(n_tokens), repeat=n_windows):
        p = math.prod(probs[t, s] for t, s in enumerate(path))
        totals[tuple(collapse(path, blank))] += p
    return dict(totals)


def check_ctc_enumeration(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n_windows, n_tokens in ((3, 2), (4, 3), (5, 3)):
        log_probs = _random_emissions(rng, n_windows, n_tokens)
        for labelling, p in labelling_probabilities(log_probs).items():
            if not labelling:
                continue
            worst = max(worst, abs(ctc_forward(log_probs, labelling) + math.log(p)))
    return CheckResult("ctc_forward vs path enumeration", worst < 1e-9, f"max abs. error {worst:.2e}")


def check_ctc_gradient(seed: int = 1, eps: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    logits = rng.normal(0.0, 1.0, size=(6, 4))
    target = [0, 2, 2]

    def loss(x: np.ndarray) -> float:
        return ctc_forward(log_softmax(x), target)

    analytic = ctc_gradient(log_softmax(logits), target)
    numeric = np.zeros_like(logits)
    for index in np.ndindex(*logits.shape):
        up, down = logits.copy(), logits.copy()
        up[index] += eps
        down[index] -= eps
        numeric[index] = (loss(up) - loss(down)) / (2 * eps)
    error = float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12))
    return CheckResult("ctc_gradient vs finite differences", error < 1e-4, f"rel. error {error:.2e}")


def check_beam_exhaustive(seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(5):
        log_probs = _random_emissions(rng, 5, 3)
        totals = labelling_probabilities(log_probs)
        best = max(totals.items(), key=lambda item: (item[1], tuple(-x for x in item[0])))[0]
        decoded, _ = beam_decode(EmissionMatrix(np.exp(log_probs)), beam_width=64)
        mismatches += tuple(decoded) != best
    return CheckResult("beam_decode (wide beam) vs exhaustive best labelling", mismatches == 0, f"{mismatches} of 5")


def check_subset_bijection(max_m: int = 10) -> CheckResult:
    failures = []
    for M in range(1, max_m + 1):
        for k in range(0, M + 1):
            subsets = list(itertools.combinations(range(M), k))
            if len(subsets) != choose(M, k):
                failures.append((M, k))
                continue
            for rank, subset in enumerate(subsets):
                if subset_rank(subset, M, k) != rank or subset_unrank(rank, M, k).subset != subset:
                    failures.append((M, k))
                    break
    detail = "all (M, k) pairs" if not failures else f"failed: {failures[:5]}"
    return CheckResult(f"subset rank/unrank bijection, M <= {max_m}", not failures, detail)


def check_collapse() -> CheckResult:
    a, g, blank = 0, 2, 3
    out = collapse([a, blank, a, a, blank, g, g], blank)
    return CheckResult("collapse merges repeats and drops blanks", out == [a, a, g], f"got {out}")


def check_quality() -> CheckResult:
    values = (quality(0.9), quality(0.99), quality(0.999))
    ok = all(math.isclose(v, q) for v, q in zip(values, (10.0, 20.0, 30.0), strict=True))
    return CheckResult("quality = -10 log10(1 - P)", ok, ", ".join(f"{v:.4f}" for v in values))


CHECKS: list[Callable[[], CheckResult]] = [
    check_ctc_enumeration,
    check_ctc_gradient,
    check_beam_exhaustive,
    check_subset_bijection,
    check_collapse,
    check_quality,
]


def run_selftest() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        result = check()
        logger.info("%s %s (%s)", "PASS" if result.passed else "FAIL", result.name, result.detail)
        results.append(result)
    return results
