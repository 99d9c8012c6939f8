"""
Automatic evaluation of generated continuations: n-gram diversity, embedding
coherence and generation speed.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import pandas as pd

from acs_module.errors import ValidationError
from acs_module.representation import Representation, cosine_similarity

NGRAM_ORDERS = (2, 3, 4)
MIN_DIVERSITY_LENGTH = max(NGRAM_ORDERS) + 1

REPORT_COLUMNS = [
    "id", "diversity", "rep_2", "rep_3", "rep_4", "coherence",
    "elapsed_seconds", "tokens_per_second", "n_tokens",
]


@dataclass(frozen=True)
class DiversityReport:
    """
    Args:
        rep_n (dict[int, float]): Repetition rate 1 - unique/total per n-gram order.
        diversity (float): Product of unique/total over the orders 2, 3 and 4.
    """
    rep_n: dict
    diversity: float

    def to_dict(self) -> dict:
        data = {f"rep_{n}": rate for n, rate in self.rep_n.items()}
        data["diversity"] = self.diversity
        return data


def ngrams(tokens, n: int) -> list:
    return list(zip(*(tokens[i:] for i in range(n))))


def diversity(tokens) -> DiversityReport:
    """
    N-gram diversity of a continuation (token ids, prompt excluded).

    Args:
        tokens (Sequence[int]): Continuation, at least 5 tokens.

    Returns:
        DiversityReport: Repetition rates and their diversity product.
    """
    tokens = [int(t) for t in tokens]
    if len(tokens) < MIN_DIVERSITY_LENGTH:
        raise ValidationError(f"diversity needs at least {MIN_DIVERSITY_LENGTH} tokens, got {len(tokens)}")
    rep_n = {}
    product = 1.0
    for n in NGRAM_ORDERS:
        grams = ngrams(tokens, n)
        ratio = len(set(grams)) / len(grams)
        rep_n[n] = 1.0 - ratio
        product *= ratio
    return DiversityReport(rep_n=rep_n, diversity=product)


class Embedder(ABC):
    """Sentence embedder over token ids."""

    @abstractmethod
    def embed(self, tokens) -> Representation:
        """Deterministic fixed-size embedding of a token sequence."""


class MeanRepresentationEmbedder(Embedder):
    """Mean of the backend's per-token representations along the sequence."""

    def __init__(self, backend):
        self.backend = backend

    def embed(self, tokens) -> Representation:
        tokens = [int(t) for t in tokens]
        if not tokens:
            raise ValidationError("cannot embed an empty token sequence")
        reps = np.stack([self.backend.step(tokens[:i + 1]).last_representation.values for i in range(len(tokens))])
        return Representation(reps.mean(axis=0))


def coherence(prompt_tokens, continuation_tokens, embedder: Embedder) -> float:
    """
    Cosine similarity between the prompt embedding and the continuation embedding.

    Args:
        prompt_tokens (Sequence[int]): Non-empty prompt.
        continuation_tokens (Sequence[int]): Non-empty continuation.
        embedder (Embedder): Sentence embedder.

    Returns:
        float: Value in [-1, 1].
    """
    if len(prompt_tokens) == 0 or len(continuation_tokens) == 0:
        raise ValidationError("coherence needs a non-empty prompt and continuation")
    return cosine_similarity(embedder.embed(prompt_tokens), embedder.embed(continuation_tokens))


def speed_summary(results) -> tuple:
    """
    Mean seconds per generation and mean tokens per second.

    Args:
        results (list[GenerationResult]): At least one result.

    Returns:
        tuple[float, float]: (seconds per generation, tokens per second).
    """
    if not results:
        raise ValidationError("speed_summary needs at least one result")
    seconds = float(np.mean([r.elapsed_seconds for r in results]))
    rate = float(np.mean([r.tokens_per_second for r in results]))
    return seconds, rate


def corpus_metrics(entries) -> pd.DataFrame:
    """
    Per-prompt metrics table with a trailing "aggregate" row of column means.

    Args:
        entries (list[dict]): Per-prompt report entries (id, diversity, rep_2..4,
            coherence, elapsed_seconds, tokens_per_second, n_tokens).

    Returns:
        pandas.DataFrame: Indexed by prompt id. Missing values (e.g. diversity of
        a continuation shorter than 5 tokens) are skipped by the means.
    """
    df = pd.DataFrame(list(entries), columns=REPORT_COLUMNS).set_index("id")
    df = df.apply(pd.to_numeric, errors="coerce")
    df.loc["aggregate"] = df.mean(numeric_only=True, skipna=True)
    return df
