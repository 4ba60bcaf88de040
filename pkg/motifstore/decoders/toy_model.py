"""Windowed-feature affine-softmax model trained with the CTC objective.

Each window of raw samples is summarized by five statistics, standardized, and
mapped to token logits by one affine layer. Training minimizes the mean
per-window CTC loss of the label sequences by full-batch gradient descent.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from motifstore.data.synthsim import Seed, Squiggle
from motifstore.decoders.ctc import (
    CTCInfeasibleError,
    EmissionMatrix,
    ctc_forward,
    ctc_gradient,
    greedy_spans,
    log_softmax,
    min_windows,
    read_quality,
)

logger = logging.getLogger(__name__)

N_FEATURES = 5
FEATURE_NAMES = ("mean", "std", "min", "max", "diff_mean")


@dataclass(frozen=True, eq=False)
class ToyModelParams:
    """Affine map from standardized window features to logits over motifs plus blank (last)."""

    window: int
    stride: int
    weights: np.ndarray  # (n_tokens, N_FEATURES)
    bias: np.ndarray  # (n_tokens,)
    feature_mean: np.ndarray  # (N_FEATURES,)
    feature_std: np.ndarray  # (N_FEATURES,)

    def __post_init__(self) -> None:
        if self.window < 1 or self.stride < 1:
            msg = f"window and stride must be positive, got {self.window}/{self.stride}"
            raise ValueError(msg)
        n_tokens = self.weights.shape[0]
        if self.weights.shape != (n_tokens, N_FEATURES) or self.bias.shape != (n_tokens,):
            msg = f"weights {self.weights.shape} and bias {self.bias.shape} disagree on {n_tokens} tokens"
            raise ValueError(msg)
        if n_tokens < 2:
            msg = "Toy model needs at least one motif token plus blank"
            raise ValueError(msg)

    @property
    def n_tokens(self) -> int:
        return int(self.weights.shape[0])

    @property
    def blank(self) -> int:
        return self.n_tokens - 1

    def as_dict(self) -> dict[str, Any]:
        return {
            "window": self.window,
            "stride": self.stride,
            "n_tokens": self.n_tokens,
            "features": list(FEATURE_NAMES),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ToyModelParams:
        weights = np.asarray(data["weights"], dtype=np.float64).reshape(int(data["n_tokens"]), N_FEATURES)
        return cls(
            window=int(data["window"]),
            stride=int(data["stride"]),
            weights=weights,
            bias=np.asarray(data["bias"], dtype=np.float64),
            feature_mean=np.asarray(data["feature_mean"], dtype=np.float64),
            feature_std=np.asarray(data["feature_std"], dtype=np.float64),
        )


def window_features(samples: np.ndarray, window: int = 64, stride: int = 64) -> np.ndarray:
    """Per-window mean, std, min, max and mean first difference; shape (n_windows, 5)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < window:
        return np.zeros((0, N_FEATURES))
    views = np.lib.stride_tricks.sliding_window_view(samples, window)[::stride]
    diff_mean = (views[:, -1] - views[:, 0]) / max(window - 1, 1)
    return np.stack([views.mean(axis=1), views.std(axis=1), views.min(axis=1), views.max(axis=1), diff_mean], axis=1)


def _standardize(features: np.ndarray, params: ToyModelParams) -> np.ndarray:
    return (features - params.feature_mean) / params.feature_std


def toy_log_probs(params: ToyModelParams, features: np.ndarray) -> np.ndarray:
    """Log-softmax token scores for raw (unstandardized) window features."""
    return log_softmax(_standardize(features, params) @ params.weights.T + params.bias)


def toy_emissions(params: ToyModelParams, squiggle: Squiggle) -> EmissionMatrix:
    features = window_features(squiggle.samples, params.window, params.stride)
    return EmissionMatrix(np.exp(toy_log_probs(params, features)))


@dataclass(frozen=True)
class ToyCall:
    """Greedy decode of toy-model emissions."""

    read_id: str
    tokens: tuple[int, ...]
    confidences: tuple[float, ...]
    spans: tuple[tuple[int, int], ...]
    read_q: float


def toy_call(params: ToyModelParams, squiggle: Squiggle) -> ToyCall:
    spans = greedy_spans(toy_emissions(params, squiggle))
    confidences = tuple(min(s[1], 1.0 - 1e-9) for s in spans)
    return ToyCall(
        read_id=squiggle.read_id,
        tokens=tuple(s[0] for s in spans),
        confidences=confidences,
        spans=tuple((s[2], s[3]) for s in spans),
        read_q=read_quality(confidences),
    )


def sample_loss_and_gradient(
    params: ToyModelParams,
    features: np.ndarray,
    target: Sequence[int],
) -> tuple[float, np.ndarray, np.ndarray]:
    """Per-window CTC loss of one sample and its gradient with respect to weights and bias.

    Raises CTCInfeasibleError when the target does not fit in the sample's windows.
    """
    normalized = _standardize(features, params)
    log_probs = log_softmax(normalized @ params.weights.T + params.bias)
    grad_logits = ctc_gradient(log_probs, target, params.blank)
    n_windows = features.shape[0]
    loss = ctc_forward(log_probs, target, params.blank) / n_windows
    return loss, grad_logits.T @ normalized / n_windows, grad_logits.sum(axis=0) / n_windows


@dataclass
class TrainingResult:
    params: ToyModelParams
    # mean per-window loss per epoch; the last entry follows the final update
    history: list[float] = field(default_factory=list)
    skipped: int = 0


def init_params(
    n_tokens: int,
    features: Sequence[np.ndarray],
    window: int = 64,
    stride: int = 64,
    seed: Seed = 0,
) -> ToyModelParams:
    """Small random weights; standardization fitted on the pooled training windows."""
    pooled = np.concatenate([f for f in features if f.shape[0]]) if features else np.zeros((0, N_FEATURES))
    if pooled.shape[0]:
        mean, std = pooled.mean(axis=0), pooled.std(axis=0)
    else:
        mean, std = np.zeros(N_FEATURES), np.ones(N_FEATURES)
    std = np.where(std > 1e-9, std, 1.0)
    rng = np.random.default_rng(seed)
    return ToyModelParams(
        window=window,
        stride=stride,
        weights=rng.normal(0.0, 0.01, size=(n_tokens, N_FEATURES)),
        bias=np.zeros(n_tokens),
        feature_mean=mean,
        feature_std=std,
    )


def train_toy_caller(
    samples: Sequence[tuple[Squiggle, Sequence[int]]],
    n_tokens: int,
    init: ToyModelParams | None = None,
    epochs: int = 200,
    learning_rate: float = 1.0,
    window: int = 64,
    stride: int = 64,
    seed: Seed = 0,
) -> TrainingResult:
    """Full-batch gradient descent on the mean per-window CTC loss.

    ``init`` continues training from existing parameters (their window and
    standardization are kept). Samples whose labels cannot fit in their windows
    are skipped with a warning.
    """
    if init is not None:
        window, stride = init.window, init.stride
        if init.n_tokens != n_tokens:
            msg = f"Initial model has {init.n_tokens} tokens, training set needs {n_tokens}"
            raise ValueError(msg)

    feasible: list[tuple[np.ndarray, list[int]]] = []
    skipped = 0
    for squiggle, target in samples:
        features = window_features(squiggle.samples, window, stride)
        if features.shape[0] == 0 or features.shape[0] < min_windows(target):
            logger.warning(
                "Skipping %s: %d windows cannot carry %d labels", squiggle.read_id, features.shape[0], len(target)
            )
            skipped += 1
            continue
        feasible.append((features, list(target)))

    params = init or init_params(n_tokens, [f for f, _ in feasible], window, stride, seed)
    result = TrainingResult(params=params, skipped=skipped)
    if not feasible:
        logger.warning("No feasible training samples (%d skipped)", skipped)
        return result

    weights, bias = params.weights.copy(), params.bias.copy()
    for epoch in range(epochs + 1):
        current = ToyModelParams(params.window, params.stride, weights, bias, params.feature_mean, params.feature_std)
        total, grad_w, grad_b, used = 0.0, np.zeros_like(weights), np.zeros_like(bias), 0
        for features, target in feasible:
            try:
                loss, dw, db = sample_loss_and_gradient(current, features, target)
            except CTCInfeasibleError:
                continue
            total += loss
            grad_w += dw
            grad_b += db
            used += 1
        mean_loss = total / max(used, 1)
        if not math.isfinite(mean_loss):
            msg = f"Training loss became non-finite at epoch {epoch}"
            raise FloatingPointError(msg)
        result.history.append(mean_loss)
        if epoch == epochs or used == 0:
            break
        weights -= learning_rate * grad_w / used
        bias -= learning_rate * grad_b / used

    result.params = ToyModelParams(params.window, params.stride, weights, bias, params.feature_mean, params.feature_std)
    logger.info(
        "Trained toy model on %d samples (%d skipped): loss %.4f -> %.4f",
        len(feasible),
        skipped,
        result.history[0],
        result.history[-1],
    )
    return result


# ---------------------------------------------------------------------------
# Label bootstrapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapCandidate:
    """A read's AM-called motif sequence and how well it matched pre-synthesis truth."""

    read_id: str
    tokens: tuple[int, ...]
    match_fraction: float


def label_bootstrap(candidates: Sequence[BootstrapCandidate], top_fraction: float = 0.3) -> list[BootstrapCandidate]:
    """Keep the best ``top_fraction`` of reads by match fraction; ties go to the smaller read_id."""
    if not 0.0 < top_fraction <= 1.0:
        msg = f"top_fraction must be in (0, 1], got {top_fraction}"
        raise ValueError(msg)
    ranked = sorted(candidates, key=lambda c: (-c.match_fraction, c.read_id))
    keep = math.floor(len(ranked) * top_fraction + 1e-9)
    return ranked[:keep]
