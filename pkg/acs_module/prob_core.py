"""
Probability distributions, Shannon entropy and the uncertainty schedules that
turn a standardized entropy into the candidate-pool size k and the penalty
weight alpha used by adaptive contrastive search.

All functions are pure and work on value inputs, so they can be called from
several worker threads at once.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr, expit

from acs_module.errors import ArgumentError, ValidationError

# Tolerance on the total mass of a distribution.
MASS_TOLERANCE = 1e-9
# arctanh argument is clamped to [-1 + eps, 1 - eps].
ARCTANH_EPS = 1e-6
# k_t = K_SPAN * sigmoid(delta) + K_MIN, i.e. k_t in {5, ..., 15}.
K_MIN = 5
K_SPAN = 10
K_MAX = K_MIN + K_SPAN
# Values of 10*sigmoid+5 within this distance below a .5 boundary round up.
K_ROUNDING_SLACK = 1e-9
# |delta| is capped before exponentiation in the DoubleExp transform.
DOUBLE_EXP_CAP = 30.0


@dataclass(frozen=True)
class ProbabilityDistribution:
    """
    Normalized distribution over a token vocabulary at one generation step.

    Args:
        probs (numpy.ndarray): Mass per token id, indexed by token id.
    """
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValidationError(f"distribution needs a 1-D vector of at least 2 entries, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("distribution contains non-finite mass")
        if np.any(probs < 0.0):
            raise ValidationError(f"distribution contains negative mass (min {probs.min():.3g})")
        total = probs.sum()
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValidationError(f"distribution sums to {total!r}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def vocab_size(self) -> int:
        return int(self.probs.size)

    @classmethod
    def from_weights(cls, weights) -> "ProbabilityDistribution":
        """Builds a distribution from non-negative, not necessarily normalized weights."""
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise ValidationError("weights must have a positive finite sum")
        return cls(weights / total)


@dataclass
class EntropyHistory:
    """
    Per-step entropies of the steps generated so far.

    full_entropies holds H(X) of the whole distribution in nats.
    topk_entropies_normalized holds each step's top-k entropy divided by
    ln(k) of that same step, so that steps with different k stay comparable.
    """
    full_entropies: list = field(default_factory=list)
    topk_entropies_normalized: list = field(default_factory=list)

    def append(self, full_entropy: float, topk_normalized: float) -> None:
        if not (math.isfinite(full_entropy) and full_entropy >= 0.0):
            raise ValidationError(f"full entropy must be finite and >= 0, got {full_entropy!r}")
        if not (math.isfinite(topk_normalized) and 0.0 <= topk_normalized <= 1.0):
            raise ValidationError(f"normalized top-k entropy must lie in [0, 1], got {topk_normalized!r}")
        self.full_entropies.append(float(full_entropy))
        self.topk_entropies_normalized.append(float(topk_normalized))

    def __len__(self) -> int:
        return len(self.full_entropies)


@dataclass(frozen=True)
class AdaptiveState:
    """Parameters chosen by the adaptive schedule at one step."""
    q: float
    delta_t: float
    delta_tk: float
    k_t: int
    alpha_t: float

    def __post_init__(self):
        if not self.q > 0:
            raise ArgumentError(f"temperature q must be > 0, got {self.q!r}")
        if not K_MIN <= self.k_t <= K_MAX:
            raise ArgumentError(f"k_t must lie in [{K_MIN}, {K_MAX}], got {self.k_t}")
        if not 0.0 < self.alpha_t < 1.0:
            raise ArgumentError(f"alpha_t must lie in (0, 1), got {self.alpha_t!r}")


def topk_ids(probs: np.ndarray, k: int) -> np.ndarray:
    """
    Returns the ids of the k highest-mass tokens, highest mass first.
    Ties are broken by the lowest token id (stable sort on the negated mass).
    """
    if not 1 <= k <= probs.size:
        raise ArgumentError(f"k must lie in [1, {probs.size}], got {k}")
    order = np.argsort(-probs, kind="stable")
    return order[:k]


def shannon_entropy(dist: ProbabilityDistribution) -> float:
    """
    Shannon entropy in nats, using 0 * ln 0 = 0.

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.

    Returns:
        float: -sum p ln p, clipped to [0, ln(vocab_size)] against rounding.
    """
    h = float(entr(dist.probs).sum())
    return min(max(h, 0.0), math.log(dist.vocab_size))


def topk_entropy(dist: ProbabilityDistribution, k: int) -> float:
    """
    Entropy of the renormalized distribution of the k most likely tokens.

    Args:
        dist (ProbabilityDistribution): Distribution at the current step.
        k (int): Number of tokens kept, 1 <= k <= vocab_size.

    Returns:
        float: Entropy in nats, within [0, ln k].
    """
    if not 1 <= k <= dist.vocab_size:
        raise ArgumentError(f"k must lie in [1, {dist.vocab_size}], got {k}")
    if k == dist.vocab_size:
        # the full support is the distribution itself
        return shannon_entropy(dist)
    mass = dist.probs[topk_ids(dist.probs, k)]
    total = mass.sum()
    if total <= 0.0:
        return 0.0
    h = float(entr(mass / total).sum())
    return min(max(h, 0.0), math.log(k))


def standardized_delta(current_entropy: float, history, max_entropy: float, q: float) -> float:
    """
    Centers an entropy on the median of the previous steps, rescales it by the
    maximum entropy and maps it through q * arctanh.

    An empty history uses the current entropy as its median, which yields 0.

    Args:
        current_entropy (float): Entropy at the current step.
        history (list[float]): Entropies of the strictly previous steps.
        max_entropy (float): Entropy of the uniform distribution over the support.
        q (float): Temperature multiplier, > 0.

    Returns:
        float: q * arctanh(clamp((current - median) / max_entropy)).
    """
    if not (math.isfinite(current_entropy) and math.isfinite(max_entropy) and math.isfinite(q)):
        raise ValidationError("standardized_delta received a non-finite input")
    if max_entropy <= 0.0:
        raise ArgumentError(f"max_entropy must be > 0, got {max_entropy!r}")
    if q <= 0.0:
        raise ArgumentError(f"q must be > 0, got {q!r}")

    if len(history) == 0:
        return 0.0
    values = np.asarray(history, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("entropy history contains non-finite values")

    ratio = (current_entropy - float(np.median(values))) / max_entropy
    ratio = min(max(ratio, -1.0 + ARCTANH_EPS), 1.0 - ARCTANH_EPS)
    return q * math.atanh(ratio)


def k_from_delta(delta: float) -> int:
    """Candidate-pool size: 10 * sigmoid(delta) + 5, rounded half away from zero."""
    if not math.isfinite(delta):
        raise ValidationError(f"delta must be finite, got {delta!r}")
    raw = K_SPAN * float(expit(delta)) + K_MIN
    # raw is positive, so half-away-from-zero is floor(raw + 0.5)
    k = int(math.floor(raw + 0.5 + K_ROUNDING_SLACK))
    return min(max(k, K_MIN), K_MAX)


def alpha_from_delta(delta: float) -> float:
    """Penalty weight: sigmoid(delta), kept strictly inside (0, 1)."""
    if not math.isfinite(delta):
        raise ValidationError(f"delta must be finite, got {delta!r}")
    alpha = float(expit(delta))
    tiny = np.finfo(np.float64).eps
    return min(max(alpha, tiny), 1.0 - tiny)


def double_exp_delta(delta: float) -> float:
    """
    Magnifies delta before the sigmoid: sign(delta) * (exp(|delta|) - 1).
    Keeps 0 at 0 and pushes alpha toward 0 or 1 elsewhere.
    """
    if not math.isfinite(delta):
        raise ValidationError(f"delta must be finite, got {delta!r}")
    magnitude = min(abs(delta), DOUBLE_EXP_CAP)
    return math.copysign(math.expm1(magnitude), delta) if delta != 0.0 else 0.0
