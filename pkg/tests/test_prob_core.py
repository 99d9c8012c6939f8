import math

import numpy as np
import pytest

from acs_module.errors import ArgumentError, ValidationError
from acs_module.prob_core import (
    AdaptiveState,
    EntropyHistory,
    ProbabilityDistribution,
    alpha_from_delta,
    double_exp_delta,
    k_from_delta,
    shannon_entropy,
    standardized_delta,
    topk_entropy,
    topk_ids,
)


def dist(values):
    return ProbabilityDistribution(np.array(values, dtype=float))


class TestProbabilityDistribution:
    def test_rejects_negative_mass(self):
        with pytest.raises(ValidationError):
            dist([1.2, -0.2])

    def test_rejects_bad_total(self):
        with pytest.raises(ValidationError):
            dist([0.5, 0.6])

    def test_rejects_single_token(self):
        with pytest.raises(ValidationError):
            dist([1.0])

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            dist([np.nan, 1.0])

    def test_from_weights_normalizes(self):
        d = ProbabilityDistribution.from_weights([2.0, 6.0])
        np.testing.assert_allclose(d.probs, [0.25, 0.75])
        assert d.vocab_size == 2

    def test_probs_are_read_only(self):
        d = dist([0.5, 0.5])
        with pytest.raises(ValueError):
            d.probs[0] = 1.0


class TestShannonEntropy:
    def test_uniform_is_maximal(self):
        assert shannon_entropy(dist([0.25] * 4)) == pytest.approx(math.log(4), abs=1e-12)

    def test_one_hot_is_zero(self):
        assert shannon_entropy(dist([0.0, 1.0, 0.0])) == 0.0

    def test_hand_summation(self):
        expected = -(0.5 * math.log(0.5) + 2 * 0.25 * math.log(0.25))
        assert shannon_entropy(dist([0.5, 0.25, 0.25])) == pytest.approx(expected, abs=1e-12)
        assert shannon_entropy(dist([0.5, 0.25, 0.25])) == pytest.approx(1.039721, abs=1e-6)

    def test_bounds_on_random_distributions(self, rng, dirichlet):
        for _ in range(500):
            vocab_size = int(rng.integers(2, 200))
            d = dirichlet(rng, vocab_size, concentration=float(rng.choice([0.05, 0.5, 5.0])))
            h = shannon_entropy(d)
            assert 0.0 <= h <= math.log(vocab_size)


class TestTopkIds:
    def test_highest_mass_first(self):
        assert topk_ids(np.array([0.1, 0.5, 0.4]), 2).tolist() == [1, 2]

    def test_ties_go_to_lowest_id(self):
        assert topk_ids(np.array([0.2, 0.4, 0.4]), 1).tolist() == [1]
        assert topk_ids(np.array([0.25, 0.25, 0.25, 0.25]), 2).tolist() == [0, 1]

    def test_k_out_of_range(self):
        with pytest.raises(ArgumentError):
            topk_ids(np.array([0.5, 0.5]), 3)


class TestTopkEntropy:
    def test_uniform_renormalized(self):
        assert topk_entropy(dist([0.1] * 10), 5) == pytest.approx(math.log(5), abs=1e-12)

    def test_single_token(self):
        assert topk_entropy(dist([0.9, 0.05, 0.05]), 1) == 0.0

    def test_hand_renormalization(self):
        expected = -(4 / 7 * math.log(4 / 7) + 3 / 7 * math.log(3 / 7))
        assert topk_entropy(dist([0.4, 0.3, 0.2, 0.1]), 2) == pytest.approx(expected, abs=1e-12)
        assert topk_entropy(dist([0.4, 0.3, 0.2, 0.1]), 2) == pytest.approx(0.682908, abs=1e-6)

    @pytest.mark.parametrize("k", [0, 5])
    def test_k_out_of_range(self, k):
        with pytest.raises(ArgumentError):
            topk_entropy(dist([0.4, 0.3, 0.2, 0.1]), k)

    def test_full_support_equals_shannon_exactly(self, rng, dirichlet):
        for _ in range(200):
            vocab_size = int(rng.integers(2, 100))
            d = dirichlet(rng, vocab_size)
            assert topk_entropy(d, vocab_size) == shannon_entropy(d)

    def test_bounded_by_ln_k(self, rng, dirichlet):
        for _ in range(200):
            d = dirichlet(rng, 50, concentration=0.3)
            k = int(rng.integers(1, 51))
            assert 0.0 <= topk_entropy(d, k) <= math.log(k) + 1e-15


class TestStandardizedDelta:
    def test_centered_is_zero(self):
        assert standardized_delta(2.0, [1.0, 2.0, 3.0], max_entropy=4.0, q=1.0) == 0.0

    def test_half_of_max_entropy(self):
        assert standardized_delta(2.0, [1.0], max_entropy=2.0, q=1.0) == pytest.approx(math.atanh(0.5), abs=1e-12)
        assert standardized_delta(2.0, [1.0], max_entropy=2.0, q=1.0) == pytest.approx(0.549306, abs=1e-6)

    def test_boundary_is_clamped(self):
        value = standardized_delta(3.0, [1.0], max_entropy=2.0, q=1.0)
        assert value == pytest.approx(math.atanh(1 - 1e-6), abs=1e-9)
        assert value == pytest.approx(7.254329, abs=1e-6)
        assert standardized_delta(-1.0, [1.0], max_entropy=2.0, q=1.0) == pytest.approx(-value, abs=1e-9)

    def test_empty_history_is_neutral(self):
        assert standardized_delta(1.7, [], max_entropy=2.0, q=3.0) == 0.0

    def test_even_history_uses_midpoint_median(self):
        assert standardized_delta(2.0, [1.0, 3.0], max_entropy=4.0, q=1.0) == 0.0

    @pytest.mark.parametrize("c", [0.25, 0.5, 2.0, 3.0, 8.0])
    def test_q_scales_output_exactly(self, rng, c):
        for _ in range(50):
            history = rng.uniform(0, 3, size=int(rng.integers(1, 20))).tolist()
            current = float(rng.uniform(0, 3))
            base = standardized_delta(current, history, max_entropy=3.0, q=1.0)
            assert standardized_delta(current, history, max_entropy=3.0, q=c) == c * base

    def test_non_finite_input(self):
        with pytest.raises(ValidationError):
            standardized_delta(float("nan"), [1.0], max_entropy=2.0, q=1.0)
        with pytest.raises(ValidationError):
            standardized_delta(1.0, [float("inf")], max_entropy=2.0, q=1.0)

    def test_bad_parameters(self):
        with pytest.raises(ArgumentError):
            standardized_delta(1.0, [1.0], max_entropy=0.0, q=1.0)
        with pytest.raises(ArgumentError):
            standardized_delta(1.0, [1.0], max_entropy=1.0, q=0.0)


class TestKFromDelta:
    def test_neutral(self):
        assert k_from_delta(0.0) == 10

    def test_saturation(self):
        assert k_from_delta(20.0) == 15
        assert k_from_delta(-20.0) == 5

    def test_half_rounds_away_from_zero(self):
        assert k_from_delta(math.log(3)) == 13

    def test_nondecreasing(self):
        ks = [k_from_delta(d) for d in np.linspace(-30, 30, 2001)]
        assert all(a <= b for a, b in zip(ks, ks[1:]))
        assert set(ks) == set(range(5, 16))

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            k_from_delta(float("inf"))


class TestAlphaFromDelta:
    def test_neutral(self):
        assert alpha_from_delta(0.0) == 0.5

    def test_closed_form(self):
        assert alpha_from_delta(math.log(3)) == pytest.approx(0.75, abs=1e-12)
        assert alpha_from_delta(-math.log(3)) == pytest.approx(0.25, abs=1e-12)

    def test_strictly_increasing(self):
        alphas = [alpha_from_delta(d) for d in np.linspace(-10, 10, 1001)]
        assert all(a < b for a, b in zip(alphas, alphas[1:]))

    def test_stays_inside_open_interval(self):
        assert 0.0 < alpha_from_delta(-1000.0) < 1.0
        assert 0.0 < alpha_from_delta(1000.0) < 1.0


class TestDoubleExpDelta:
    def test_neutral(self):
        assert double_exp_delta(0.0) == 0.0

    def test_closed_form(self):
        assert double_exp_delta(1.0) == pytest.approx(math.e - 1, abs=1e-12)
        assert double_exp_delta(-2.0) == pytest.approx(-(math.e ** 2 - 1), abs=1e-12)

    def test_magnifies_and_keeps_sign(self, rng):
        for delta in rng.normal(0, 5, size=1000):
            value = double_exp_delta(float(delta))
            assert abs(value) >= abs(delta)
            assert np.sign(value) == np.sign(delta)
            assert abs(alpha_from_delta(value) - 0.5) >= abs(alpha_from_delta(float(delta)) - 0.5)

    def test_overflow_guard(self):
        assert double_exp_delta(1e6) == pytest.approx(math.expm1(30.0))
        assert double_exp_delta(-1e6) == pytest.approx(-math.expm1(30.0))


class TestStateAndHistory:
    def test_adaptive_state_bounds(self):
        AdaptiveState(q=1.0, delta_t=0.0, delta_tk=0.0, k_t=10, alpha_t=0.5)
        with pytest.raises(ArgumentError):
            AdaptiveState(q=1.0, delta_t=0.0, delta_tk=0.0, k_t=16, alpha_t=0.5)
        with pytest.raises(ArgumentError):
            AdaptiveState(q=1.0, delta_t=0.0, delta_tk=0.0, k_t=10, alpha_t=1.0)
        with pytest.raises(ArgumentError):
            AdaptiveState(q=0.0, delta_t=0.0, delta_tk=0.0, k_t=10, alpha_t=0.5)

    def test_history_grows_one_entry_per_step(self):
        history = EntropyHistory()
        history.append(1.2, 0.4)
        history.append(0.8, 0.9)
        assert len(history) == 2
        assert history.full_entropies == [1.2, 0.8]
        assert history.topk_entropies_normalized == [0.4, 0.9]

    def test_history_rejects_out_of_range(self):
        history = EntropyHistory()
        with pytest.raises(ValidationError):
            history.append(-0.1, 0.5)
        with pytest.raises(ValidationError):
            history.append(1.0, 1.5)
        assert len(history) == 0
