"""
Decoding strategies: greedy, top-k, nucleus and typical sampling, fixed
contrastive search and adaptive contrastive search (standard and DoubleExp).

Every stochastic rule draws from a numpy PCG64 generator seeded with the
configured rng_seed and samples by inverse CDF over the renormalized support
in token-id order, so runs are reproducible. Every step produces a TraceRecord.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from acs_module.errors import ArgumentError, BackendStepError, ContractViolation, ValidationError
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
from acs_module.representation import ContextRepresentations

# Slack on the cumulative-mass threshold of nucleus and typical truncation.
CUMULATIVE_TOLERANCE = 1e-12
# Surprisal deviations are compared after rounding to this many decimals.
DEVIATION_DECIMALS = 12


class DecodingMethod(str, Enum):
    GREEDY = "greedy"
    TOP_K = "top_k"
    NUCLEUS = "nucleus"
    TYPICAL = "typical"
    CONTRASTIVE = "contrastive"
    ADAPTIVE_CONTRASTIVE = "adaptive_contrastive"
    ADAPTIVE_DOUBLE_EXP = "adaptive_double_exp"

    @property
    def is_adaptive(self) -> bool:
        return self in (DecodingMethod.ADAPTIVE_CONTRASTIVE, DecodingMethod.ADAPTIVE_DOUBLE_EXP)

    @property
    def uses_representations(self) -> bool:
        return self.is_adaptive or self is DecodingMethod.CONTRASTIVE


class AdaptiveVariant(str, Enum):
    STANDARD = "standard"
    DOUBLE_EXP = "double_exp"


@dataclass(frozen=True)
class DecoderConfig:
    """
    Decoding method and its hyperparameters.

    Args:
        method (DecodingMethod): Decoding rule.
        k (int): Candidate-pool size of top-k sampling and fixed contrastive search.
        alpha (float): Penalty weight of fixed contrastive search, in [0, 1].
        p (float): Nucleus mass, in (0, 1].
        tau (float): Typical-sampling mass, in (0, 1].
        q (float): Temperature of the adaptive schedule, > 0.
        max_new_tokens (int): Number of tokens to generate.
        rng_seed (int): Seed of the sampling generator.
        stop_tokens (frozenset[int]): Generation stops right after emitting one of these.
    """
    method: DecodingMethod = DecodingMethod.ADAPTIVE_CONTRASTIVE
    k: int = 10
    alpha: float = 0.6
    p: float = 0.95
    tau: float = 0.95
    q: float = 1.0
    max_new_tokens: int = 256
    rng_seed: int = 0
    stop_tokens: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", DecodingMethod(self.method))
        except ValueError as e:
            raise ArgumentError(f"unknown decoding method {self.method!r}") from e
        object.__setattr__(self, "stop_tokens", frozenset(int(t) for t in self.stop_tokens))
        if int(self.k) < 1:
            raise ArgumentError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not 0.0 < self.p <= 1.0:
            raise ArgumentError(f"p must lie in (0, 1], got {self.p!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ArgumentError(f"tau must lie in (0, 1], got {self.tau!r}")
        if not (math.isfinite(self.q) and self.q > 0.0):
            raise ArgumentError(f"q must be a finite value > 0, got {self.q!r}")
        if int(self.max_new_tokens) < 1:
            raise ArgumentError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if int(self.rng_seed) < 0:
            raise ArgumentError(f"rng_seed must be >= 0, got {self.rng_seed}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["method"] = self.method.value
        data["stop_tokens"] = sorted(self.stop_tokens)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DecoderConfig":
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        if "stop_tokens" in known:
            known["stop_tokens"] = frozenset(known["stop_tokens"] or ())
        return cls(**known)


@dataclass
class TraceRecord:
    """Diagnostics of one generation step. Fields that do not apply to the method stay None."""
    step: int
    chosen: int
    full_entropy: float
    model_confidence: float
    topk_entropy: float = None
    delta_t: float = None
    delta_tk: float = None
    k_t: int = None
    alpha_t: float = None
    penalty: float = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GenerationResult:
    tokens: list
    trace: list
    elapsed_seconds: float
    tokens_per_second: float


def _check_rng(rng):
    if not isinstance(rng, np.random.Generator):
        raise ArgumentError("rng must be a numpy.random.Generator")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator used for every stochastic decoder."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def greedy_step(dist: ProbabilityDistribution) -> int:
    """Most likely token; np.argmax returns the first maximum, i.e. the lowest id."""
    return int(np.argmax(dist.probs))


def sample_from_support(dist: ProbabilityDistribution, support, rng) -> int:
    """
    Draws one token from the distribution restricted to `support`.

    The support is sorted by token id, its masses are renormalized and one
    uniform u = rng.random() is mapped through the cumulative distribution.

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.
        support (Iterable[int]): Candidate token ids.
        rng (numpy.random.Generator): Sampling generator.

    Returns:
        int: Sampled token id.
    """
    _check_rng(rng)
    support = np.unique(np.asarray(list(support), dtype=np.int64))
    if support.size == 0:
        raise ValidationError("cannot sample from an empty support")
    mass = dist.probs[support]
    keep = mass > 0.0
    support, mass = support[keep], mass[keep]
    if support.size == 0:
        raise ValidationError("support carries no probability mass")
    cdf = np.cumsum(mass) / mass.sum()
    u = rng.random()
    index = int(np.searchsorted(cdf, u, side="right"))
    return int(support[min(index, support.size - 1)])


def topk_sample_step(dist: ProbabilityDistribution, k: int, rng) -> int:
    return sample_from_support(dist, topk_ids(dist.probs, k), rng)


def _minimal_prefix(masses: np.ndarray, threshold: float) -> int:
    cumulative = np.cumsum(masses)
    n = int(np.searchsorted(cumulative, threshold - CUMULATIVE_TOLERANCE, side="left")) + 1
    return min(n, masses.size)


def nucleus_support(dist: ProbabilityDistribution, p: float) -> np.ndarray:
    """
    Smallest highest-mass set whose cumulative mass reaches p.

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.
        p (float): Mass threshold in (0, 1].

    Returns:
        numpy.ndarray: Token ids, highest mass first (ties by lowest id).
    """
    if not 0.0 < p <= 1.0:
        raise ArgumentError(f"p must lie in (0, 1], got {p!r}")
    order = np.argsort(-dist.probs, kind="stable")
    return order[:_minimal_prefix(dist.probs[order], p)]


def nucleus_step(dist: ProbabilityDistribution, p: float, rng) -> int:
    return sample_from_support(dist, nucleus_support(dist, p), rng)


def typical_support(dist: ProbabilityDistribution, tau: float) -> np.ndarray:
    """
    Tokens whose surprisal is closest to the entropy, up to cumulative mass tau.

    Tokens with zero mass are excluded. Ranking is by |-ln p - H| ascending,
    then higher mass, then lower id.
    The prefix ends at the first token whose cumulative mass reaches tau, so
    [0.5, 0.25, 0.25] with tau = 0.5 gives {0}, not {0, 1}.

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.
        tau (float): Mass threshold in (0, 1].

    Returns:
        numpy.ndarray: Token ids in rank order.
    """
    if not 0.0 < tau <= 1.0:
        raise ArgumentError(f"tau must lie in (0, 1], got {tau!r}")
    ids = np.flatnonzero(dist.probs > 0.0)
    mass = dist.probs[ids]
    deviation = np.round(np.abs(-np.log(mass) - shannon_entropy(dist)), DEVIATION_DECIMALS)
    # np.lexsort sorts by its last key first
    order = np.lexsort((ids, -mass, deviation))
    return ids[order[:_minimal_prefix(mass[order], tau)]]


def typical_step(dist: ProbabilityDistribution, tau: float, rng) -> int:
    return sample_from_support(dist, typical_support(dist, tau), rng)


def contrastive_step(dist: ProbabilityDistribution, candidate_reps: dict, context_reps, k: int, alpha: float) -> tuple:
    """
    One step of contrastive search over the k most likely tokens.

    score(v) = (1 - alpha) * p(v) - alpha * max_j cos(h_v, h_j)

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.
        candidate_reps (dict[int, Representation]): Representation of each top-k token in context.
        context_reps (ContextRepresentations): Representations of the context tokens.
        k (int): Candidate-pool size.
        alpha (float): Penalty weight in [0, 1].

    Returns:
        tuple[int, float, float]: Chosen token, its model confidence and its penalty.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha must lie in [0, 1], got {alpha!r}")
    if not isinstance(context_reps, ContextRepresentations):
        context_reps = ContextRepresentations(context_reps)
    candidates = topk_ids(dist.probs, k)
    missing = [int(v) for v in candidates if int(v) not in candidate_reps]
    if missing:
        raise ContractViolation(f"missing representation for candidate tokens {missing}")

    matrix = np.stack([candidate_reps[int(v)].values for v in candidates])
    penalties = context_reps.max_similarities(matrix)
    confidence = dist.probs[candidates]
    scores = (1.0 - alpha) * confidence - alpha * penalties

    tied = np.flatnonzero(scores == scores.max())
    best = tied[np.argmin(candidates[tied])]
    return int(candidates[best]), float(confidence[best]), float(penalties[best])


def adaptive_parameters(dist: ProbabilityDistribution, history: EntropyHistory, q: float, variant=AdaptiveVariant.STANDARD) -> tuple:
    """
    Chooses k_t and alpha_t from the current entropies and the history.

    Does not modify the history.

    Returns:
        tuple[AdaptiveState, float, float, int]: The state, the full entropy,
        the top-k entropy and the pool size actually used (k_t capped by the vocabulary).
    """
    variant = AdaptiveVariant(variant)
    full_entropy = shannon_entropy(dist)
    delta_t = standardized_delta(full_entropy, history.full_entropies, math.log(dist.vocab_size), q)
    k_t = k_from_delta(delta_t)
    pool = min(k_t, dist.vocab_size)

    top_entropy = topk_entropy(dist, pool)
    normalized = min(top_entropy / math.log(pool), 1.0)
    # normalized history: max entropy of a normalized value is 1
    delta_tk = standardized_delta(normalized, history.topk_entropies_normalized, 1.0, q)
    alpha_argument = double_exp_delta(delta_tk) if variant is AdaptiveVariant.DOUBLE_EXP else delta_tk
    state = AdaptiveState(q=q, delta_t=delta_t, delta_tk=delta_tk, k_t=k_t, alpha_t=alpha_from_delta(alpha_argument))
    return state, full_entropy, top_entropy, pool


def context_representations(backend, context) -> ContextRepresentations:
    """Representations of every token of a context, from its prefixes."""
    context = list(context)
    return ContextRepresentations(backend.step(context[:i + 1]).last_representation for i in range(len(context)))


def _adaptive_choice(dist, backend, context, history, q, variant, context_reps, step):
    state, full_entropy, top_entropy, pool = adaptive_parameters(dist, history, q, variant)
    candidate_reps = backend.candidate_representations(context, topk_ids(dist.probs, pool))
    chosen, confidence, penalty = contrastive_step(dist, candidate_reps, context_reps, pool, state.alpha_t)
    history.append(full_entropy, min(top_entropy / math.log(pool), 1.0))
    record = TraceRecord(
        step=step,
        chosen=chosen,
        full_entropy=full_entropy,
        model_confidence=confidence,
        topk_entropy=top_entropy,
        delta_t=state.delta_t,
        delta_tk=state.delta_tk,
        k_t=state.k_t,
        alpha_t=state.alpha_t,
        penalty=penalty,
    )
    return chosen, record


def adaptive_contrastive_step(dist, backend, context, history: EntropyHistory, q: float,
                              variant=AdaptiveVariant.STANDARD, context_reps=None, step=0) -> tuple:
    """
    One step of adaptive contrastive search.

    The full-vocabulary entropy sets k_t; the entropy of the top-k_t tokens
    sets alpha_t (through the DoubleExp transform for that variant). Both
    entropies are appended to `history` after the choice.

    Args:
        dist (ProbabilityDistribution): Distribution for `context`.
        backend (LanguageBackend): Supplies the candidate representations.
        context (Sequence[int]): Current context, prompt included.
        history (EntropyHistory): Entropies of the previous steps; updated in place.
        q (float): Temperature, > 0.
        variant (AdaptiveVariant | str): "standard" or "double_exp".
        context_reps (ContextRepresentations, optional): Precomputed context
            representations; recomputed from the backend when omitted.
        step (int): Step index written to the trace record.

    Returns:
        tuple[int, TraceRecord]: The chosen token and its fully populated record.
    """
    if context_reps is None:
        context_reps = context_representations(backend, context)
    return _adaptive_choice(dist, backend, list(context), history, q, variant, context_reps, step)


def _fixed_contrastive_choice(dist, backend, context, config, context_reps, step):
    candidates = topk_ids(dist.probs, config.k)
    candidate_reps = backend.candidate_representations(context, candidates)
    chosen, confidence, penalty = contrastive_step(dist, candidate_reps, context_reps, config.k, config.alpha)
    return chosen, TraceRecord(
        step=step,
        chosen=chosen,
        full_entropy=shannon_entropy(dist),
        model_confidence=confidence,
        topk_entropy=topk_entropy(dist, config.k),
        k_t=config.k,
        alpha_t=config.alpha,
        penalty=penalty,
    )


def _sampled_choice(dist, config, rng, step):
    method = config.method
    if method is DecodingMethod.GREEDY:
        chosen = greedy_step(dist)
    elif method is DecodingMethod.TOP_K:
        chosen = topk_sample_step(dist, config.k, rng)
    elif method is DecodingMethod.NUCLEUS:
        chosen = nucleus_step(dist, config.p, rng)
    elif method is DecodingMethod.TYPICAL:
        chosen = typical_step(dist, config.tau, rng)
    else:
        raise ArgumentError(f"{method.value} is not a sampling method")
    return chosen, TraceRecord(
        step=step,
        chosen=chosen,
        full_entropy=shannon_entropy(dist),
        model_confidence=float(dist.probs[chosen]),
    )


def generate(backend, prompt, config: DecoderConfig) -> GenerationResult:
    """
    Generates up to config.max_new_tokens tokens after the prompt.

    Args:
        backend (LanguageBackend): Model backend.
        prompt (Sequence[int]): Non-empty prompt token ids.
        config (DecoderConfig): Decoding method and hyperparameters.

    Returns:
        GenerationResult: Tokens, per-step trace and timing. Identical inputs give
        identical tokens and trace.

    Raises:
        BackendStepError: The backend failed; `step` is the generation step.
    """
    context = [int(t) for t in prompt]
    if not context:
        raise ValidationError("prompt must contain at least one token")
    vocab_size = backend.descriptor.vocab_size
    if any(not 0 <= t < vocab_size for t in context):
        raise ValidationError(f"prompt token ids must lie in [0, {vocab_size})")
    if config.method in (DecodingMethod.TOP_K, DecodingMethod.CONTRASTIVE) and config.k > vocab_size:
        raise ArgumentError(f"k={config.k} exceeds the vocabulary size {vocab_size}")

    method = config.method
    rng = make_rng(config.rng_seed)
    history = EntropyHistory()
    variant = AdaptiveVariant.DOUBLE_EXP if method is DecodingMethod.ADAPTIVE_DOUBLE_EXP else AdaptiveVariant.STANDARD
    tokens, trace = [], []

    start = time.perf_counter()
    context_reps = None
    if method.uses_representations:
        # the last prompt token is covered by the first step call
        try:
            context_reps = context_representations(backend, context[:-1])
        except Exception as e:
            raise BackendStepError(0, e) from e

    for step in range(config.max_new_tokens):
        try:
            output = backend.step(context)
            if context_reps is not None:
                context_reps.append(output.last_representation)
            if method.is_adaptive:
                chosen, record = _adaptive_choice(output.dist, backend, context, history, config.q, variant, context_reps, step)
            elif method is DecodingMethod.CONTRASTIVE:
                chosen, record = _fixed_contrastive_choice(output.dist, backend, context, config, context_reps, step)
            else:
                chosen, record = _sampled_choice(output.dist, config, rng, step)
        except (ArgumentError, BackendStepError):
            raise
        except Exception as e:
            logging.debug(f"Backend failure at step {step}: {e}")
            raise BackendStepError(step, e) from e

        tokens.append(chosen)
        trace.append(record)
        context.append(chosen)
        if chosen in config.stop_tokens:
            break

    elapsed = time.perf_counter() - start
    return GenerationResult(
        tokens=tokens,
        trace=trace,
        elapsed_seconds=elapsed,
        tokens_per_second=len(tokens) / elapsed if elapsed > 0 else 0.0,
    )
