"""
Per-step table of one prompt's trace (entropy, k, alpha over time), ready for plotting.
"""
import argparse
import sys

import pandas as pd

from acs_module.errors import ValidationError
from corpus_io import load_traces

DUMP_COLUMNS = ["step", "chosen", "full_entropy", "topk_entropy", "k_t", "alpha_t", "delta_t", "delta_tk", "model_confidence", "penalty"]


def trace_dump(trace_path: str, prompt_id: str = None) -> pd.DataFrame:
    """
    Args:
        trace_path (str): Trace file of a run.
        prompt_id (str, optional): Prompt to dump; defaults to the first prompt in the file.

    Returns:
        pandas.DataFrame: One row per step, sorted by step.
    """
    traces = load_traces(trace_path)
    if not traces:
        raise ValidationError(f"trace file {trace_path} is empty")
    if prompt_id is None:
        prompt_id = next(iter(traces))
    if prompt_id not in traces:
        raise ValidationError(f"prompt {prompt_id!r} not found in {trace_path}")
    table = pd.DataFrame(traces[prompt_id]).reindex(columns=DUMP_COLUMNS)
    return table.sort_values("step").reset_index(drop=True)


def main():
    parser = argparse.ArgumentParser(description="Dump the per-step trace of one prompt as CSV.")
    parser.add_argument('--trace', required=True, help="Trace file (JSONL).")
    parser.add_argument('--prompt-id', help="Prompt id (default: first in file).")
    parser.add_argument('--output', help="CSV path; printed when omitted.")
    args = parser.parse_args()

    try:
        table = trace_dump(args.trace, args.prompt_id)
    except ValidationError as e:
        print(f"Error: {e}")
        sys.exit(2)
    if args.output:
        table.to_csv(args.output, index=False)
        print(f"Wrote {len(table)} steps to {args.output}")
    else:
        print(table.to_string(index=False))


if __name__ == "__main__":
    main()
