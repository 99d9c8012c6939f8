"""
Temperature ablation and speed comparison of adaptive contrastive search.

q_ablation sweeps the temperature q of the adaptive schedule; speed_comparison
times fixed contrastive search against the adaptive decoder at a few q values.
"""
import logging

import numpy as np
import pandas as pd
from tqdm import tqdm

from acs_module.decoders import DecoderConfig, DecodingMethod, generate
from acs_module.errors import ValidationError
from acs_module.metrics import coherence, diversity, speed_summary

ABLATION_QS = (1, 2, 4, 8, 15, 20)
SPEED_QS = (1, 2, 8)
BASELINE_K = 10
BASELINE_ALPHA = 0.6


def _mean_diversity(results) -> float:
    values = []
    for result in results:
        try:
            values.append(diversity(result.tokens).diversity)
        except ValidationError:
            continue
    return float(np.mean(values)) if values else float("nan")


def run_prompts(backend, prompts, config: DecoderConfig, desc=None, show_progress=False) -> list:
    """Decodes every prompt sequentially with one configuration."""
    return [generate(backend, prompt, config) for prompt in tqdm(prompts, desc=desc, disable=not show_progress)]


def q_ablation(backend, prompts, qs=ABLATION_QS, max_new_tokens=256, rng_seed=0, embedder=None,
               method=DecodingMethod.ADAPTIVE_CONTRASTIVE, show_progress=False) -> pd.DataFrame:
    """
    Decodes the same prompts at each temperature q.

    Args:
        backend (LanguageBackend): Model backend.
        prompts (list[list[int]]): Prompt token ids.
        qs (Iterable[float]): Temperatures to try.
        max_new_tokens (int): Continuation length.
        rng_seed (int): Seed of the decoder configuration.
        embedder (Embedder, optional): When given, mean coherence is reported too.
        method (DecodingMethod): Adaptive variant to sweep.
        show_progress (bool): Show tqdm bars.

    Returns:
        pandas.DataFrame: Indexed by q with mean_diversity, mean_coherence,
        alpha_variance (mean over prompts of the per-step alpha variance) and mean_k.
    """
    rows = []
    for q in qs:
        config = DecoderConfig(method=method, q=float(q), max_new_tokens=max_new_tokens, rng_seed=rng_seed)
        results = run_prompts(backend, prompts, config, desc=f"q={q}", show_progress=show_progress)
        alphas = [np.array([r.alpha_t for r in result.trace]) for result in results]
        ks = np.concatenate([[r.k_t for r in result.trace] for result in results])
        row = {
            "q": q,
            "mean_diversity": _mean_diversity(results),
            "alpha_variance": float(np.mean([a.var() for a in alphas])),
            "mean_k": float(ks.mean()),
        }
        if embedder is not None:
            row["mean_coherence"] = float(np.mean([coherence(p, r.tokens, embedder) for p, r in zip(prompts, results)]))
        logging.info(f"q={q}: diversity {row['mean_diversity']:.4f}, alpha variance {row['alpha_variance']:.5f}, mean k {row['mean_k']:.2f}")
        rows.append(row)
    return pd.DataFrame(rows).set_index("q")


def speed_comparison(backend, prompts, qs=SPEED_QS, k=BASELINE_K, alpha=BASELINE_ALPHA, max_new_tokens=256,
                     show_progress=False) -> pd.DataFrame:
    """
    Seconds per generation and tokens per second of fixed CS and of ACS at each q.

    Returns:
        pandas.DataFrame: Indexed by decoder label with sec_per_story, tokens_per_sec,
        sec_per_token and relative_to_cs (per-token time over that of fixed CS).
    """
    configs = [("cs", DecoderConfig(method=DecodingMethod.CONTRASTIVE, k=k, alpha=alpha, max_new_tokens=max_new_tokens))]
    configs += [(f"acs_q{q:g}", DecoderConfig(method=DecodingMethod.ADAPTIVE_CONTRASTIVE, q=float(q), max_new_tokens=max_new_tokens))
                for q in qs]

    rows = []
    for label, config in configs:
        results = run_prompts(backend, prompts, config, desc=label, show_progress=show_progress)
        sec_per_story, tokens_per_sec = speed_summary(results)
        total_tokens = sum(len(r.tokens) for r in results)
        rows.append({
            "decoder": label,
            "sec_per_story": sec_per_story,
            "tokens_per_sec": tokens_per_sec,
            "sec_per_token": sum(r.elapsed_seconds for r in results) / total_tokens,
        })
    table = pd.DataFrame(rows).set_index("decoder")
    table["relative_to_cs"] = table["sec_per_token"] / table.loc["cs", "sec_per_token"]
    return table
