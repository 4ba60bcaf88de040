"""Tests for motifstore.decoders.toy_model."""

from __future__ import annotations

import numpy as np
import pytest

from motifstore.core.align import edit_distance
from motifstore.data.synthsim import Squiggle
from motifstore.decoders.toy_model import (
    N_FEATURES,
    BootstrapCandidate,
    ToyModelParams,
    TrainingResult,
    init_params,
    label_bootstrap,
    sample_loss_and_gradient,
    toy_call,
    toy_emissions,
    train_toy_caller,
    window_features,
)

WINDOW = 16
BLANK_LEVEL = 40.0
TOKEN_LEVELS = (60.0, 90.0, 120.0)
N_TOKENS = len(TOKEN_LEVELS) + 1


def _synthetic(n_samples: int = 50, n_labels: int = 4, seed: int = 0) -> list[tuple[Squiggle, list[int]]]:
    """Squiggles where each label holds its level for two windows, followed by one blank window."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_samples):
        labels = rng.integers(0, len(TOKEN_LEVELS), size=n_labels).tolist()
        levels = [BLANK_LEVEL]
        for label in labels:
            levels += [TOKEN_LEVELS[label], TOKEN_LEVELS[label], BLANK_LEVEL]
        signal = np.repeat(levels, WINDOW) + rng.normal(0.0, 2.0, size=len(levels) * WINDOW)
        samples.append((Squiggle(read_id=f"s{i:03d}", samples=signal), labels))
    return samples


@pytest.fixture(scope="module")
def training_set() -> list[tuple[Squiggle, list[int]]]:
    return _synthetic()


class TestWindowFeatures:
    def test_statistics(self) -> None:
        features = window_features(np.arange(32.0), window=16, stride=16)
        assert features.shape == (2, N_FEATURES)
        np.testing.assert_allclose(features[:, 0], [7.5, 23.5])
        np.testing.assert_allclose(features[:, 1], np.std(np.arange(16.0)))
        np.testing.assert_allclose(features[:, 2], [0.0, 16.0])
        np.testing.assert_allclose(features[:, 3], [15.0, 31.0])
        np.testing.assert_allclose(features[:, 4], [1.0, 1.0])

    def test_overlapping_windows(self) -> None:
        assert window_features(np.zeros(40), window=16, stride=8).shape == (4, N_FEATURES)

    def test_short_signal(self) -> None:
        assert window_features(np.zeros(10), window=16).shape == (0, N_FEATURES)


class TestToyModelParams:
    def test_dict_roundtrip(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        features = [window_features(s.samples, WINDOW, WINDOW) for s, _ in training_set]
        params = init_params(N_TOKENS, features, WINDOW, WINDOW, seed=1)
        restored = ToyModelParams.from_dict(params.as_dict())
        np.testing.assert_array_equal(restored.weights, params.weights)
        np.testing.assert_array_equal(restored.feature_std, params.feature_std)
        assert restored.blank == N_TOKENS - 1

    def test_rejects_single_token(self) -> None:
        with pytest.raises(ValueError, match="blank"):
            ToyModelParams(16, 16, np.zeros((1, N_FEATURES)), np.zeros(1), np.zeros(N_FEATURES), np.ones(N_FEATURES))


class TestGradient:
    def test_matches_finite_differences(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        squiggle, target = training_set[0]
        features = window_features(squiggle.samples, WINDOW, WINDOW)
        params = init_params(N_TOKENS, [features], WINDOW, WINDOW, seed=2)
        params = ToyModelParams(
            WINDOW, WINDOW, params.weights * 50.0, params.bias, params.feature_mean, params.feature_std
        )
        _, grad_w, grad_b = sample_loss_and_gradient(params, features, target)
        eps = 1e-6
        for index in [(0, 0), (1, 2), (3, 4), (2, 1)]:
            up, down = params.weights.copy(), params.weights.copy()
            up[index] += eps
            down[index] -= eps
            loss_up, _, _ = sample_loss_and_gradient(
                ToyModelParams(WINDOW, WINDOW, up, params.bias, params.feature_mean, params.feature_std),
                features,
                target,
            )
            loss_down, _, _ = sample_loss_and_gradient(
                ToyModelParams(WINDOW, WINDOW, down, params.bias, params.feature_mean, params.feature_std),
                features,
                target,
            )
            assert grad_w[index] == pytest.approx((loss_up - loss_down) / (2 * eps), abs=1e-6)
        assert grad_b.sum() == pytest.approx(0.0, abs=1e-12)


class TestTraining:
    def test_loss_halves(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        result = train_toy_caller(training_set, N_TOKENS, epochs=200, window=WINDOW, stride=WINDOW)
        assert len(result.history) == 201
        assert result.skipped == 0
        assert result.history[-1] <= 0.5 * result.history[0]

    def test_true_labels_beat_shuffled(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        rng = np.random.default_rng(9)
        order = rng.permutation(len(training_set))
        shuffled = [(squiggle, training_set[j][1]) for (squiggle, _), j in zip(training_set, order, strict=True)]
        true_run = train_toy_caller(training_set, N_TOKENS, epochs=200, window=WINDOW, stride=WINDOW)
        shuffled_run = train_toy_caller(shuffled, N_TOKENS, epochs=200, window=WINDOW, stride=WINDOW)
        assert true_run.history[-1] < shuffled_run.history[-1]

    def test_emissions_are_distributions(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        result = train_toy_caller(training_set[:5], N_TOKENS, epochs=5, window=WINDOW, stride=WINDOW)
        emissions = toy_emissions(result.params, training_set[0][0])
        assert emissions.n_windows == 13
        np.testing.assert_allclose(emissions.probs.sum(axis=1), 1.0)

    def test_held_out_calls_improve_with_training(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        held_out = _synthetic(n_samples=20, seed=1)
        untrained = train_toy_caller(training_set, N_TOKENS, epochs=0, window=WINDOW, stride=WINDOW)
        trained = train_toy_caller(training_set, N_TOKENS, epochs=200, window=WINDOW, stride=WINDOW)

        def errors(result: TrainingResult) -> int:
            return sum(edit_distance(toy_call(result.params, s).tokens, labels) for s, labels in held_out)

        assert errors(trained) < errors(untrained)
        call = toy_call(trained.params, held_out[0][0])
        assert call.read_id == held_out[0][0].read_id
        assert len(call.confidences) == len(call.tokens) == len(call.spans)
        assert all(start < end for start, end in call.spans)

    def test_skips_infeasible_samples(self) -> None:
        short = Squiggle(read_id="short", samples=np.full(2 * WINDOW, BLANK_LEVEL))
        result = train_toy_caller([(short, [0, 1, 2])], N_TOKENS, epochs=3, window=WINDOW, stride=WINDOW)
        assert result.skipped == 1
        assert result.history == []

    def test_continues_from_init(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        first = train_toy_caller(training_set, N_TOKENS, epochs=20, window=WINDOW, stride=WINDOW)
        second = train_toy_caller(training_set, N_TOKENS, init=first.params, epochs=20)
        assert second.params.window == WINDOW
        assert second.history[0] == pytest.approx(first.history[-1])

    def test_init_token_mismatch(self, training_set: list[tuple[Squiggle, list[int]]]) -> None:
        first = train_toy_caller(training_set[:3], N_TOKENS, epochs=1, window=WINDOW, stride=WINDOW)
        with pytest.raises(ValueError, match="tokens"):
            train_toy_caller(training_set[:3], N_TOKENS + 1, init=first.params, epochs=1)


class TestLabelBootstrap:
    def test_keeps_top_fraction(self) -> None:
        candidates = [BootstrapCandidate(f"r{i}", (0,), match_fraction=i / 10) for i in range(10)]
        kept = label_bootstrap(candidates, top_fraction=0.3)
        assert [c.read_id for c in kept] == ["r9", "r8", "r7"]

    def test_ties_go_to_smaller_read_id(self) -> None:
        candidates = [BootstrapCandidate(read_id, (1,), 1.0) for read_id in ("c", "a", "b")]
        assert [c.read_id for c in label_bootstrap(candidates, 2 / 3)] == ["a", "b"]

    @pytest.mark.parametrize("fraction", [0.0, 1.5])
    def test_rejects_bad_fraction(self, fraction: float) -> None:
        with pytest.raises(ValueError, match="top_fraction"):
            label_bootstrap([], fraction)
