import argparse
import glob
import math
import os

from acs_module.errors import CorpusFormatError
from acs_module.prob_core import K_MAX, K_MIN
from corpus_io import read_jsonl

ADAPTIVE_METHODS = ("adaptive_contrastive", "adaptive_double_exp")
NUMERIC_FIELDS = ("full_entropy", "topk_entropy", "delta_t", "delta_tk", "alpha_t", "model_confidence", "penalty")
# trace floats carry 9 significant digits
BOUND_SLACK = 1e-8


def check_row(row: dict, vocab_size: int = None) -> list:
    """
    Checks one trace record against the bounds of its fields.

    Args:
        row (dict): Parsed trace line.
        vocab_size (int, optional): Enables the ln(vocab_size) bound on full_entropy.

    Returns:
        list[str]: Problems found (empty when the record is clean).
    """
    problems = []
    for name in NUMERIC_FIELDS:
        value = row.get(name)
        if value is not None and not math.isfinite(value):
            problems.append(f"{name} is not finite ({value})")
    if problems:
        return problems

    adaptive = row.get("method") in ADAPTIVE_METHODS
    full, topk, k_t, alpha = row.get("full_entropy"), row.get("topk_entropy"), row.get("k_t"), row.get("alpha_t")
    if full is not None:
        upper = math.log(vocab_size) if vocab_size else math.inf
        if not -BOUND_SLACK <= full <= upper + BOUND_SLACK:
            problems.append(f"full_entropy {full} outside [0, {upper:.6g}]")
    if adaptive:
        if k_t is None or not K_MIN <= k_t <= K_MAX:
            problems.append(f"k_t {k_t} outside [{K_MIN}, {K_MAX}]")
        if alpha is None:
            problems.append("alpha_t missing")
    # 9 significant digits can round an adaptive alpha_t onto 0 or 1
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        problems.append(f"alpha_t {alpha} outside [0, 1]")
    if topk is not None and k_t:
        upper = math.log(k_t)
        if not -BOUND_SLACK <= topk <= upper + BOUND_SLACK:
            problems.append(f"topk_entropy {topk} outside [0, ln {k_t}]")
    return problems


def check_trace_file(path: str, vocab_size: int = None) -> list:
    """
    Scans a trace file.

    Returns:
        list[str]: One message per problem, prefixed with the line number.
    """
    problems = []
    try:
        rows = read_jsonl(path)
    except CorpusFormatError as e:
        return [str(e)]
    for line_number, row in rows:
        for problem in check_row(row, vocab_size):
            problems.append(f"line {line_number} ({row.get('prompt_id')}, step {row.get('step')}): {problem}")
    return problems


def main(folder_path: str, vocab_size: int = None) -> int:
    """
    Scans a folder for trace_*.jsonl files and reports out-of-bound values.
    """
    print(f"Starting trace value check in folder: {folder_path}")

    trace_files = glob.glob(os.path.join(folder_path, 'trace_*.jsonl'))

    if not trace_files:
        print("No trace files found in the specified folder.")
        return 0

    print(f"Found {len(trace_files)} trace files to check.\n")

    bad_files = 0

    for file_path in sorted(trace_files):
        problems = check_trace_file(file_path, vocab_size)
        if problems:
            print(f"  [!] {len(problems)} problems in: {os.path.basename(file_path)}")
            for problem in problems[:10]:
                print(f"      {problem}")
            bad_files += 1
        else:
            print(f"  [✓] All values in bounds: {os.path.basename(file_path)}")

    print("\n--- Check Complete ---")
    if bad_files > 0:
        print(f"Summary: Found {bad_files} out of {len(trace_files)} files with problems.")
    else:
        print(f"Summary: All {len(trace_files)} files are clean.")
    return 1 if bad_files else 0


if __name__ == '__main__':
    parser = argparse.ArgumentParser(
        description="Check all trace files in a folder for non-finite or out-of-bound values."
    )
    parser.add_argument(
        '--folder_path',
        required=True,
        help="The path to the folder containing the trace_*.jsonl files to be checked."
    )
    parser.add_argument('--vocab_size', type=int, help="Vocabulary size of the run's backend.")
    args = parser.parse_args()

    raise SystemExit(main(args.folder_path, args.vocab_size))
