import math

import numpy as np
import pytest

from acs_module.backend import LanguageBackend, make_synthetic_backend
from acs_module.decoders import (
    AdaptiveVariant,
    DecoderConfig,
    DecodingMethod,
    adaptive_contrastive_step,
    adaptive_parameters,
    contrastive_step,
    generate,
    greedy_step,
    make_rng,
    nucleus_support,
    sample_from_support,
    topk_sample_step,
    typical_support,
)
from acs_module.errors import ArgumentError, BackendStepError, ContractViolation, ValidationError
from acs_module.prob_core import EntropyHistory, ProbabilityDistribution, topk_ids
from acs_module.representation import ContextRepresentations, Representation, cosine_similarity


def dist(values):
    return ProbabilityDistribution(np.array(values, dtype=float))


def basis(i, dim=3):
    values = np.zeros(dim)
    values[i] = 1.0
    return Representation(values)


class FailingBackend(LanguageBackend):
    """Delegates to a synthetic backend until the context reaches `fail_at_length` tokens."""

    def __init__(self, inner, fail_at_length):
        self.inner = inner
        self.fail_at_length = fail_at_length

    @property
    def descriptor(self):
        return self.inner.descriptor

    def step(self, context):
        if len(context) >= self.fail_at_length:
            raise RuntimeError("model server went away")
        return self.inner.step(context)


class TestGreedy:
    def test_argmax(self):
        assert greedy_step(dist([0.1, 0.6, 0.3])) == 1

    def test_tie_goes_to_lowest_id(self):
        assert greedy_step(dist([0.2, 0.4, 0.4])) == 1


class TestSampleFromSupport:
    def test_inverse_cdf_oracle(self):
        d = dist([0.1, 0.2, 0.3, 0.4])
        for seed in range(200):
            u = make_rng(seed).random()
            expected = 1 if u < 1 / 3 else 3
            assert sample_from_support(d, [3, 1], make_rng(seed)) == expected

    def test_support_order_is_irrelevant(self):
        d = dist([0.1, 0.2, 0.3, 0.4])
        for seed in range(50):
            assert sample_from_support(d, [3, 0, 2], make_rng(seed)) == sample_from_support(d, [0, 2, 3], make_rng(seed))

    def test_zero_mass_is_never_drawn(self):
        d = dist([0.0, 0.5, 0.5])
        rng = make_rng(3)
        assert {sample_from_support(d, [0, 1], rng) for _ in range(200)} == {1}

    def test_empty_support(self):
        with pytest.raises(ValidationError):
            sample_from_support(dist([0.5, 0.5]), [], make_rng(0))

    def test_requires_generator(self):
        with pytest.raises(ArgumentError):
            sample_from_support(dist([0.5, 0.5]), [0, 1], np.random.RandomState(0))


class TestTopkSampling:
    def test_k_one_is_greedy(self, rng, dirichlet):
        for seed in range(100):
            d = dirichlet(rng, 30)
            assert topk_sample_step(d, 1, make_rng(seed)) == greedy_step(d)

    @pytest.mark.parametrize("probs, k, expected", [
        ([0.5, 0.3, 0.15, 0.05], 2, [0.5 / 0.8, 0.3 / 0.8, 0.0, 0.0]),
        ([0.9, 0.05, 0.05], 2, [0.9 / 0.95, 0.05 / 0.95, 0.0]),
        ([0.4, 0.3, 0.2, 0.1], 4, [0.4, 0.3, 0.2, 0.1]),
    ], ids=["k2", "k2-tied-tail", "k-equals-vocab"])
    def test_frequencies_match_renormalized_mass(self, probs, k, expected):
        d = dist(probs)
        rng = make_rng(11)
        n = 20000
        draws = np.array([topk_sample_step(d, k, rng) for _ in range(n)])
        frequencies = np.bincount(draws, minlength=len(probs)) / n
        expected = np.array(expected)
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert np.all(np.abs(frequencies - expected) <= 3 * sigma)

    def test_tied_tail_keeps_lowest_id(self):
        draws = {topk_sample_step(dist([0.9, 0.05, 0.05]), 2, make_rng(seed)) for seed in range(200)}
        assert draws == {0, 1}


class TestNucleus:
    @pytest.mark.parametrize("p, expected", [
        (0.4, [0]),
        (0.8, [0, 1]),
        (0.81, [0, 1, 2]),
        (1.0, [0, 1, 2, 3]),
    ])
    def test_minimal_prefix(self, p, expected):
        assert nucleus_support(dist([0.5, 0.3, 0.15, 0.05]), p).tolist() == expected

    def test_ordering_and_ties(self):
        assert nucleus_support(dist([0.2, 0.4, 0.4]), 0.5).tolist() == [1, 2]

    def test_support_reaches_p(self, rng, dirichlet):
        for _ in range(200):
            d = dirichlet(rng, 40, concentration=0.3)
            p = float(rng.uniform(0.05, 1.0))
            support = nucleus_support(d, p)
            assert d.probs[support].sum() >= p - 1e-12
            assert d.probs[support[:-1]].sum() < p - 1e-12

    def test_invalid_p(self):
        with pytest.raises(ArgumentError):
            nucleus_support(dist([0.5, 0.5]), 0.0)


class TestTypical:
    def test_threshold_half_stops_at_first_token_not_tied_pair(self):
        """Token 0 alone reaches tau = 0.5, so the set is {0} rather than {0, 1}."""
        # all three tokens sit at the same distance from the entropy
        assert typical_support(dist([0.5, 0.25, 0.25]), 0.5).tolist() == [0]

    def test_threshold_above_half(self):
        assert typical_support(dist([0.5, 0.25, 0.25]), 0.6).tolist() == [0, 1]

    def test_full_mass(self):
        assert sorted(typical_support(dist([0.5, 0.25, 0.25]), 1.0).tolist()) == [0, 1, 2]

    def test_zero_mass_excluded(self):
        assert sorted(typical_support(dist([0.5, 0.0, 0.5]), 1.0).tolist()) == [0, 2]

    def test_closest_surprisal_first(self):
        d = dist([0.7, 0.2, 0.1])
        h = -sum(p * math.log(p) for p in (0.7, 0.2, 0.1))
        deviations = {v: abs(-math.log(p) - h) for v, p in enumerate((0.7, 0.2, 0.1))}
        assert typical_support(d, 1.0).tolist() == sorted(deviations, key=deviations.get)

    def test_invalid_tau(self):
        with pytest.raises(ArgumentError):
            typical_support(dist([0.5, 0.5]), 1.5)


class TestContrastiveStep:
    def test_alpha_zero_is_greedy_over_pool(self):
        reps = {0: basis(0), 1: basis(1), 2: basis(2)}
        chosen, confidence, _ = contrastive_step(dist([0.1, 0.5, 0.4]), reps, [basis(1)], k=2, alpha=0.0)
        assert chosen == 1
        assert confidence == 0.5

    def test_alpha_one_prefers_orthogonal_candidate(self):
        reps = {1: basis(0), 2: basis(1)}
        chosen, _, penalty = contrastive_step(dist([0.1, 0.5, 0.4]), reps, [basis(0)], k=2, alpha=1.0)
        assert chosen == 2
        assert penalty == 0.0

    def test_penalty_outweighs_small_mass_gap(self):
        reps = {0: basis(0), 1: basis(1)}
        chosen, _, penalty = contrastive_step(dist([0.45, 0.4, 0.15]), reps, [basis(0)], k=2, alpha=0.5)
        assert chosen == 1
        assert penalty == 0.0

    def test_k_one_is_greedy(self):
        reps = {1: basis(0)}
        chosen, _, penalty = contrastive_step(dist([0.1, 0.5, 0.4]), reps, [basis(0)], k=1, alpha=0.9)
        assert chosen == 1
        assert penalty == pytest.approx(1.0)

    def test_empty_context_has_no_penalty(self):
        reps = {0: basis(0), 1: basis(1)}
        chosen, _, penalty = contrastive_step(dist([0.3, 0.6, 0.1]), reps, ContextRepresentations(), k=2, alpha=0.5)
        assert chosen == 1
        assert penalty == 0.0

    def test_tied_scores_go_to_lowest_id(self):
        reps = {0: basis(0), 1: basis(0)}
        chosen, _, _ = contrastive_step(dist([0.4, 0.4, 0.2]), reps, [basis(2)], k=2, alpha=0.3)
        assert chosen == 0

    def test_missing_candidate_representation(self):
        with pytest.raises(ContractViolation):
            contrastive_step(dist([0.1, 0.5, 0.4]), {1: basis(0)}, [basis(0)], k=2, alpha=0.5)

    def test_invalid_alpha(self):
        with pytest.raises(ArgumentError):
            contrastive_step(dist([0.5, 0.5]), {0: basis(0), 1: basis(1)}, [], k=2, alpha=1.2)

    def test_matches_brute_force(self, rng, dirichlet):
        for _ in range(100):
            d = dirichlet(rng, 20)
            reps = {v: Representation(rng.normal(size=8)) for v in range(20)}
            context = [Representation(rng.normal(size=8)) for _ in range(6)]
            alpha = float(rng.uniform())
            scores = {}
            for v in topk_ids(d.probs, 5).tolist():
                penalty = max(cosine_similarity(reps[v], c) for c in context)
                scores[v] = (1 - alpha) * d.probs[v] - alpha * penalty
            expected = max(sorted(scores), key=scores.get)
            chosen, confidence, penalty = contrastive_step(d, reps, context, k=5, alpha=alpha)
            assert chosen == expected
            assert confidence == d.probs[expected]
            assert penalty == pytest.approx(max(cosine_similarity(reps[expected], c) for c in context), abs=1e-12)


class TestAdaptiveStep:
    def test_first_step_is_neutral(self, small_backend):
        context = [3, 17, 42]
        history = EntropyHistory()
        chosen, record = adaptive_contrastive_step(small_backend.step(context).dist, small_backend, context, history, q=1.0)
        assert record.delta_t == 0.0
        assert record.delta_tk == 0.0
        assert record.k_t == 10
        assert record.alpha_t == 0.5
        assert record.chosen == chosen
        assert len(history) == 1

    def test_double_exp_only_moves_alpha(self, rng, dirichlet):
        for _ in range(300):
            d = dirichlet(rng, 50, concentration=float(rng.choice([0.1, 1.0])))
            history = EntropyHistory()
            for _ in range(int(rng.integers(1, 10))):
                history.append(float(rng.uniform(0, math.log(50))), float(rng.uniform(0, 1)))
            standard, *_ = adaptive_parameters(d, history, 2.0, AdaptiveVariant.STANDARD)
            magnified, *_ = adaptive_parameters(d, history, 2.0, AdaptiveVariant.DOUBLE_EXP)
            assert magnified.k_t == standard.k_t
            assert magnified.delta_tk == standard.delta_tk
            assert abs(magnified.alpha_t - 0.5) >= abs(standard.alpha_t - 0.5)

    def test_parameters_stay_in_range(self, rng, dirichlet):
        for _ in range(10000):
            vocab_size = int(rng.integers(2, 40))
            d = dirichlet(rng, vocab_size, concentration=float(rng.choice([0.05, 0.5, 5.0])))
            history = EntropyHistory()
            for _ in range(int(rng.integers(0, 6))):
                history.append(float(rng.uniform(0, math.log(vocab_size))), float(rng.uniform(0, 1)))
            q = float(rng.choice([0.5, 1.0, 8.0, 20.0]))
            state, full_entropy, top_entropy, pool = adaptive_parameters(d, history, q)
            assert 5 <= state.k_t <= 15
            assert 0.0 < state.alpha_t < 1.0
            assert pool == min(state.k_t, vocab_size)
            assert 0.0 <= top_entropy <= math.log(pool) + 1e-12
            assert 0.0 <= full_entropy <= math.log(vocab_size) + 1e-12


def reference_adaptive_trace(backend, prompt, steps, q):
    """Straight-line adaptive contrastive search, written independently of the decoders."""
    context = list(prompt)
    full_history, topk_history, rows = [], [], []
    for _ in range(steps):
        probs = backend.step(context).dist.probs
        vocab_size = probs.size
        nonzero = probs[probs > 0]
        full_entropy = float(-np.sum(nonzero * np.log(nonzero)))
        if full_history:
            ratio = (full_entropy - float(np.median(full_history))) / math.log(vocab_size)
            delta_t = q * math.atanh(min(max(ratio, -1 + 1e-6), 1 - 1e-6))
        else:
            delta_t = 0.0
        k = min(max(int(math.floor(10 / (1 + math.exp(-delta_t)) + 5 + 0.5 + 1e-9)), 5), 15)

        candidates = sorted(range(vocab_size), key=lambda v: (-probs[v], v))[:k]
        top = np.array([probs[v] for v in candidates])
        top = top / top.sum()
        top_entropy = float(-np.sum(top[top > 0] * np.log(top[top > 0])))
        normalized = min(top_entropy / math.log(k), 1.0)
        if topk_history:
            ratio = normalized - float(np.median(topk_history))
            delta_tk = q * math.atanh(min(max(ratio, -1 + 1e-6), 1 - 1e-6))
        else:
            delta_tk = 0.0
        alpha = 1 / (1 + math.exp(-delta_tk))

        context_units = []
        for i in range(len(context)):
            h = backend.step(context[:i + 1]).last_representation.values
            context_units.append(h / np.linalg.norm(h))
        best = None
        for v in candidates:
            h = backend.step(context + [v]).last_representation.values
            h = h / np.linalg.norm(h)
            penalty = max(float(np.dot(h, c)) for c in context_units)
            score = (1 - alpha) * probs[v] - alpha * penalty
            if best is None or score > best[0] or (score == best[0] and v < best[1]):
                best = (score, v, float(probs[v]), penalty)

        _, chosen, confidence, penalty = best
        rows.append({
            "chosen": chosen,
            "full_entropy": full_entropy,
            "model_confidence": confidence,
            "topk_entropy": top_entropy,
            "delta_t": delta_t,
            "delta_tk": delta_tk,
            "k_t": k,
            "alpha_t": alpha,
            "penalty": penalty,
        })
        full_history.append(full_entropy)
        topk_history.append(normalized)
        context.append(chosen)
    return rows


class TestAdaptiveTraceOracle:
    def test_twenty_steps_match_reference(self):
        backend = make_synthetic_backend(vocab_size=64, hidden_dim=32, seed=7, repetition_bias=0.3)
        prompt = [3, 17, 42, 8, 55, 21, 9, 30]
        result = generate(backend, prompt, DecoderConfig(method="adaptive_contrastive", q=1.0, max_new_tokens=20))
        expected = reference_adaptive_trace(backend, prompt, 20, q=1.0)

        assert result.tokens == [row["chosen"] for row in expected]
        for record, row in zip(result.trace, expected):
            assert record.k_t == row["k_t"]
            for name in ("full_entropy", "model_confidence", "topk_entropy", "delta_t", "delta_tk", "alpha_t", "penalty"):
                assert getattr(record, name) == pytest.approx(row[name], abs=1e-9), name


class TestGenerate:
    prompt = [3, 17, 42, 8]

    def test_greedy_loops_on_repetitive_backend(self, looping_backend):
        result = generate(looping_backend, [5, 9], DecoderConfig(method="greedy", max_new_tokens=10))
        assert result.tokens == [9] * 10
        assert [r.step for r in result.trace] == list(range(10))

    def test_contrastive_escapes_repetitive_backend(self, looping_backend):
        result = generate(looping_backend, [5, 9], DecoderConfig(method="contrastive", k=5, alpha=0.6, max_new_tokens=10))
        assert result.tokens != [9] * 10

    @pytest.mark.parametrize("method", list(DecodingMethod))
    def test_deterministic(self, small_backend, method):
        config = DecoderConfig(method=method, k=5, max_new_tokens=15, rng_seed=4)
        first, second = generate(small_backend, self.prompt, config), generate(small_backend, self.prompt, config)
        assert first.tokens == second.tokens
        assert [r.to_dict() for r in first.trace] == [r.to_dict() for r in second.trace]
        assert len(first.tokens) == 15
        assert [r.chosen for r in first.trace] == first.tokens

    def test_rng_seed_changes_samples(self, small_backend):
        a = generate(small_backend, self.prompt, DecoderConfig(method="top_k", k=10, max_new_tokens=30, rng_seed=1))
        b = generate(small_backend, self.prompt, DecoderConfig(method="top_k", k=10, max_new_tokens=30, rng_seed=2))
        assert a.tokens != b.tokens

    def test_stop_token_ends_generation(self, looping_backend):
        result = generate(looping_backend, [5, 9], DecoderConfig(method="greedy", max_new_tokens=10, stop_tokens=frozenset({9})))
        assert result.tokens == [9]

    def test_timing(self, small_backend):
        result = generate(small_backend, self.prompt, DecoderConfig(method="greedy", max_new_tokens=20))
        assert result.elapsed_seconds > 0.0
        assert result.tokens_per_second == pytest.approx(20 / result.elapsed_seconds)

    def test_sampling_records_leave_contrastive_fields_empty(self, small_backend):
        record = generate(small_backend, self.prompt, DecoderConfig(method="nucleus", p=0.9, max_new_tokens=3)).trace[0]
        assert record.topk_entropy is None
        assert record.delta_t is None
        assert record.k_t is None
        assert record.penalty is None
        assert record.model_confidence > 0.0

    def test_contrastive_records_fixed_parameters(self, small_backend):
        record = generate(small_backend, self.prompt, DecoderConfig(method="contrastive", k=7, alpha=0.4, max_new_tokens=3)).trace[1]
        assert record.k_t == 7
        assert record.alpha_t == 0.4
        assert record.delta_t is None
        assert record.penalty is not None

    def test_adaptive_records_are_complete(self, small_backend):
        trace = generate(small_backend, self.prompt, DecoderConfig(method="adaptive_double_exp", max_new_tokens=5)).trace
        assert all(value is not None for record in trace for value in record.to_dict().values())

    def test_backend_failure_reports_step(self, small_backend):
        backend = FailingBackend(small_backend, fail_at_length=len(self.prompt) + 3)
        with pytest.raises(BackendStepError) as info:
            generate(backend, self.prompt, DecoderConfig(method="greedy", max_new_tokens=10))
        assert info.value.step == 3
        assert isinstance(info.value.cause, RuntimeError)

    def test_backend_failure_during_candidate_lookup(self, small_backend):
        # candidates of step 2 extend a six-token context to the failing length
        backend = FailingBackend(small_backend, fail_at_length=len(self.prompt) + 3)
        with pytest.raises(BackendStepError) as info:
            generate(backend, self.prompt, DecoderConfig(method="adaptive_contrastive", max_new_tokens=10))
        assert info.value.step == 2

    def test_invalid_prompt(self, small_backend):
        with pytest.raises(ValidationError):
            generate(small_backend, [], DecoderConfig(method="greedy"))
        with pytest.raises(ValidationError):
            generate(small_backend, [1, 64], DecoderConfig(method="greedy"))

    def test_k_larger_than_vocabulary(self, small_backend):
        with pytest.raises(ArgumentError):
            generate(small_backend, self.prompt, DecoderConfig(method="top_k", k=65))


class TestReductions:
    prompts = [[3, 17, 42, 8], [1, 1, 2, 3, 5], [60, 2]]

    def tokens(self, backend, prompt, **kwargs):
        return generate(backend, prompt, DecoderConfig(max_new_tokens=20, **kwargs)).tokens

    def test_contrastive_without_penalty_is_greedy(self, small_backend):
        for prompt in self.prompts:
            assert self.tokens(small_backend, prompt, method="contrastive", k=10, alpha=0.0) == self.tokens(small_backend, prompt, method="greedy")

    def test_contrastive_with_single_candidate_is_greedy(self, small_backend):
        for prompt in self.prompts:
            assert self.tokens(small_backend, prompt, method="contrastive", k=1, alpha=0.7) == self.tokens(small_backend, prompt, method="greedy")

    def test_untruncated_samplers_agree(self, small_backend):
        for prompt in self.prompts:
            reference = self.tokens(small_backend, prompt, method="top_k", k=64, rng_seed=9)
            assert self.tokens(small_backend, prompt, method="nucleus", p=1.0, rng_seed=9) == reference
            assert self.tokens(small_backend, prompt, method="typical", tau=1.0, rng_seed=9) == reference

    def test_cold_adaptive_matches_fixed_contrastive(self, small_backend):
        for prompt in self.prompts:
            adaptive = self.tokens(small_backend, prompt, method="adaptive_contrastive", q=1e-9)
            fixed = self.tokens(small_backend, prompt, method="contrastive", k=10, alpha=0.5)
            assert adaptive == fixed


class TestDecoderConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(method="beam"),
        dict(k=0),
        dict(alpha=1.5),
        dict(p=0.0),
        dict(tau=1.1),
        dict(q=0.0),
        dict(q=float("inf")),
        dict(max_new_tokens=0),
        dict(rng_seed=-1),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ArgumentError):
            DecoderConfig(**kwargs)

    def test_round_trip(self):
        config = DecoderConfig(method="typical", tau=0.8, max_new_tokens=32, rng_seed=5, stop_tokens=frozenset({3, 1}))
        data = config.to_dict()
        assert data["method"] == "typical"
        assert data["stop_tokens"] == [1, 3]
        assert DecoderConfig.from_dict(data) == config

    def test_method_flags(self):
        assert DecodingMethod.ADAPTIVE_DOUBLE_EXP.is_adaptive
        assert DecodingMethod.CONTRASTIVE.uses_representations
        assert not DecodingMethod.CONTRASTIVE.is_adaptive
        assert not DecodingMethod.NUCLEUS.uses_representations
