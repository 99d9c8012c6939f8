"""
Side-by-side comparison of two run reports over the same corpus.
"""
import argparse
import sys

import numpy as np
import pandas as pd

from acs_module.errors import ReportMismatchError
from corpus_io import load_report

# metric -> True when larger is better
COMPARED_METRICS = {
    "diversity": True,
    "coherence": True,
    "elapsed_seconds": False,
    "tokens_per_second": True,
}


def _prompt_table(report) -> pd.DataFrame:
    if isinstance(report, str):
        report = load_report(report)
    entries = report["prompts"]
    if not entries:
        return pd.DataFrame(columns=list(COMPARED_METRICS), dtype=float)
    table = pd.DataFrame(entries).set_index("id")
    return table.reindex(columns=list(COMPARED_METRICS)).apply(pd.to_numeric, errors="coerce")


def compare_reports(report_a, report_b) -> pd.DataFrame:
    """
    Per-metric means, deltas (b - a) and per-prompt win counts.

    Args:
        report_a (str | dict): Report path or loaded report (see corpus_io.load_report).
        report_b (str | dict): Second report, over the same prompt ids.

    Returns:
        pandas.DataFrame: One row per metric with columns mean_a, mean_b, delta,
        wins_a, wins_b, ties.
    """
    a = _prompt_table(report_a)
    b = _prompt_table(report_b)
    if set(a.index) != set(b.index):
        only_a = sorted(set(a.index) - set(b.index))
        only_b = sorted(set(b.index) - set(a.index))
        raise ReportMismatchError(f"reports cover different prompts (only in a: {only_a[:5]}, only in b: {only_b[:5]})")
    b = b.loc[a.index]

    rows = []
    for metric, higher_is_better in COMPARED_METRICS.items():
        left, right = a[metric], b[metric]
        both = left.notna() & right.notna()
        diff = (right - left)[both]
        if not higher_is_better:
            diff = -diff
        mean_a = float(left.mean()) if left.notna().any() else np.nan
        mean_b = float(right.mean()) if right.notna().any() else np.nan
        rows.append({
            "metric": metric,
            "mean_a": mean_a,
            "mean_b": mean_b,
            "delta": mean_b - mean_a,
            "wins_a": int((diff < 0).sum()),
            "wins_b": int((diff > 0).sum()),
            "ties": int((diff == 0).sum()),
        })
    return pd.DataFrame(rows).set_index("metric")


def main():
    parser = argparse.ArgumentParser(description="Compare two run reports.")
    parser.add_argument('report_a', help="First report (JSONL).")
    parser.add_argument('report_b', help="Second report (JSONL).")
    parser.add_argument('--output', help="Optional CSV path for the comparison table.")
    args = parser.parse_args()

    try:
        table = compare_reports(args.report_a, args.report_b)
    except ReportMismatchError as e:
        print(f"Error: {e}")
        sys.exit(2)
    print(table.to_string())
    if args.output:
        table.to_csv(args.output)
        print(f"Comparison saved to {args.output}")


if __name__ == "__main__":
    main()
