#!/usr/bin/env python3
"""
Pipeline script to:
1. Write a synthetic corpus (unless one already exists)
2. Decode it with fixed contrastive search and with adaptive contrastive search
3. Compare the two reports

Usage: python run_pipeline.py [--output-dir outputs] [--repetition-bias 0.9]
"""

import argparse
import datetime
import os
import subprocess
import sys
import time


def run_command(command, description):
    """
    Run a command and report its outcome.

    Returns:
        int: The command's exit code.
    """
    print(f"\n{'='*60}")
    print(f"STEP: {description}")
    print(f"{'='*60}")
    print(f"Running: {' '.join(command)}")

    result = subprocess.run(command, capture_output=True, text=True)
    print("STDOUT:")
    print(result.stdout)
    if result.stderr:
        print("STDERR:")
        print(result.stderr)
    if result.returncode == 0:
        print(f"✅ {description} completed successfully!")
    elif result.returncode == 1:
        print(f"⚠️  {description} finished with failed prompts (see report)")
    else:
        print(f"❌ {description} failed with return code {result.returncode}")
    return result.returncode


def main():
    parser = argparse.ArgumentParser(description="Fixed vs adaptive contrastive search on one corpus.")
    parser.add_argument('--output-dir', default=os.getenv("ACS_OUTPUT_DIR", "outputs"))
    parser.add_argument('--n-prompts', type=int, default=50)
    parser.add_argument('--max-new-tokens', type=int, default=256)
    parser.add_argument('--repetition-bias', type=float, default=0.9)
    parser.add_argument('--workers', type=int, default=4)
    args = parser.parse_args()

    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    os.makedirs(args.output_dir, exist_ok=True)
    log_file = os.path.join(args.output_dir, f"pipeline_{timestamp}.log")
    corpus = os.path.join(args.output_dir, "corpus.jsonl")

    print("🚀 Starting decoding comparison pipeline")
    print(f"Working directory: {os.getcwd()}")
    print(f"📝 Log file: {log_file}")

    common = [
        "--output-dir", args.output_dir,
        "--corpus", corpus,
        "--log-file", log_file,
        "--repetition-bias", str(args.repetition_bias),
        "--max-new-tokens", str(args.max_new_tokens),
        "--workers", str(args.workers),
    ]
    python = sys.executable or "python3"

    if not os.path.exists(corpus):
        if run_command([python, "main.py", "make-corpus", "--n-prompts", str(args.n_prompts)] + common, "Synthetic corpus") != 0:
            print("❌ Pipeline failed: corpus not written. Exiting.")
            sys.exit(2)
    else:
        print(f"✅ Corpus found: {corpus}")

    start_time = time.time()
    steps = [
        (["--method", "contrastive", "--run-name", "cs"], "Fixed contrastive search"),
        (["--method", "adaptive_contrastive", "--run-name", "acs"], "Adaptive contrastive search"),
    ]
    worst = 0
    for extra, description in steps:
        code = run_command([python, "main.py", "run", "--no-progress"] + common + extra, description)
        if code >= 2:
            print(f"❌ Pipeline failed at: {description}")
            sys.exit(code)
        worst = max(worst, code)

    report_cs = os.path.join(args.output_dir, "report_cs.jsonl")
    report_acs = os.path.join(args.output_dir, "report_acs.jsonl")
    comparison = os.path.join(args.output_dir, "comparison_cs_vs_acs.csv")
    run_command([python, "main.py", "compare", report_cs, report_acs, "--output", comparison, "--log-file", log_file],
                "Report comparison")

    duration = time.time() - start_time
    print(f"\n🎉 Pipeline completed!")
    print(f"⏱️  Total decoding time: {duration/60:.1f} minutes")
    print(f"📁 Check the {args.output_dir} folder for results")
    sys.exit(worst)


if __name__ == "__main__":
    main()
