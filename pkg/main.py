"""
Command-line interface of the decoding harness.

Subcommands:
    generate     decode one prompt and print its trace
    run          decode a corpus (writes manifest, trace and report)
    eval         recompute per-prompt metrics from a trace file
    compare      compare two reports
    trace-dump   per-step table of one prompt's trace
    check        scan a folder of traces for out-of-bound values
    ablate       temperature (q) ablation
    speed        fixed CS vs adaptive CS timing
    make-corpus  write a synthetic corpus

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""
import argparse
import logging
import os
import sys

import pandas as pd

import check_trace_values
from ablation_study import ABLATION_QS, SPEED_QS, q_ablation, speed_comparison
from acs_module.backend import build_backend
from acs_module.decoders import DecodingMethod, generate
from acs_module.errors import (
    ArgumentError,
    ConfigError,
    CorpusFormatError,
    DecodingError,
    ReportMismatchError,
    ValidationError,
)
from acs_module.metrics import MeanRepresentationEmbedder
from compare_reports import compare_reports
from corpus_io import load_corpus, make_synthetic_corpus, trace_line, write_corpus, write_jsonl
from harness_config import backend_spec_from_settings, decoder_config_from_settings, resolve_settings, setup_logging
from run_experiment import RunManifest, aggregate_entries, evaluate_traces, load_manifest, run_experiment
from trace_dump import trace_dump

SYNTHETIC_PROMPT_LENGTH = 16


def parse_token_list(text: str) -> list:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated token ids, got {text!r}") from e


def parse_float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def common_arguments() -> argparse.ArgumentParser:
    """Flags shared by every subcommand. Defaults are None so the config file can fill them."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', help="JSON config file (flags override it).")
    parent.add_argument('--log-file', dest='log_file', help="Log file (default: $ACS_LOG_FILE or acs_decoding.log).")

    decoding = parent.add_argument_group("decoding")
    decoding.add_argument('--method', choices=[m.value for m in DecodingMethod])
    decoding.add_argument('--k', type=int, help="Top-k / fixed contrastive-search pool size.")
    decoding.add_argument('--alpha', type=float, help="Fixed contrastive-search penalty weight.")
    decoding.add_argument('--p', type=float, help="Nucleus mass.")
    decoding.add_argument('--tau', type=float, help="Typical-sampling mass.")
    decoding.add_argument('--q', type=float, help="Adaptive temperature.")
    decoding.add_argument('--max-new-tokens', dest='max_new_tokens', type=int)
    decoding.add_argument('--seed', dest='rng_seed', type=int, help="Sampling seed.")
    decoding.add_argument('--stop-tokens', dest='stop_tokens', type=parse_token_list, help="e.g. 0,50256")

    backend = parent.add_argument_group("backend")
    backend.add_argument('--backend', choices=["synthetic", "line-protocol"])
    backend.add_argument('--vocab-size', dest='vocab_size', type=int)
    backend.add_argument('--hidden-dim', dest='hidden_dim', type=int)
    backend.add_argument('--backend-seed', dest='backend_seed', type=int)
    backend.add_argument('--repetition-bias', dest='repetition_bias', type=float)
    backend.add_argument('--logit-scale', dest='logit_scale', type=float)
    backend.add_argument('--backend-command', dest='backend_command', help="External model command (line protocol).")

    paths = parent.add_argument_group("paths")
    paths.add_argument('--corpus', dest='corpus_path', help="Corpus file (default: $ACS_CORPUS_PATH).")
    paths.add_argument('--output-dir', dest='output_dir', help="Output folder (default: $ACS_OUTPUT_DIR).")
    paths.add_argument('--workers', type=int, help="Thread-pool size for corpus runs.")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = common_arguments()
    parser = argparse.ArgumentParser(description="Adaptive contrastive search and baseline decoders.")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', parents=[parent], help="Decode one prompt.")
    p.add_argument('--prompt', required=True, type=parse_token_list, help="Comma-separated prompt token ids.")
    p.add_argument('--trace-out', help="Write the trace to this JSONL file.")

    p = sub.add_parser('run', parents=[parent], help="Decode a corpus.")
    p.add_argument('--manifest', help="Re-run an existing manifest instead of building one from the settings.")
    p.add_argument('--run-name', help="Suffix of the output files (default: the method name).")
    p.add_argument('--no-progress', action='store_true')

    p = sub.add_parser('eval', parents=[parent], help="Recompute metrics from a trace file.")
    p.add_argument('--trace', required=True)
    p.add_argument('--manifest', help="Manifest of the run (provides corpus and backend).")
    p.add_argument('--output', help="Report path (default: <output-dir>/eval_report.jsonl).")

    p = sub.add_parser('compare', parents=[parent], help="Compare two reports.")
    p.add_argument('report_a')
    p.add_argument('report_b')
    p.add_argument('--output', help="CSV path for the table.")

    p = sub.add_parser('trace-dump', parents=[parent], help="Per-step table of one prompt.")
    p.add_argument('--trace', required=True)
    p.add_argument('--prompt-id')
    p.add_argument('--output', help="CSV path (printed when omitted).")

    p = sub.add_parser('check', parents=[parent], help="Scan traces for out-of-bound values.")
    p.add_argument('--folder', required=True)

    for name, default_qs in (('ablate', ABLATION_QS), ('speed', SPEED_QS)):
        p = sub.add_parser(name, parents=[parent], help="q ablation" if name == 'ablate' else "speed comparison")
        p.add_argument('--qs', type=parse_float_list, default=list(default_qs))
        p.add_argument('--n-prompts', type=int, default=50, help="Synthetic prompts used when the corpus file is missing.")
        p.add_argument('--output', help="CSV path.")

    p = sub.add_parser('make-corpus', parents=[parent], help="Write a synthetic corpus.")
    p.add_argument('--n-prompts', type=int, default=50)
    p.add_argument('--prompt-length', type=int, default=SYNTHETIC_PROMPT_LENGTH)
    p.add_argument('--reference-length', type=int, default=0)
    return parser


def cmd_generate(args, settings) -> int:
    config = decoder_config_from_settings(settings)
    backend = build_backend(backend_spec_from_settings(settings))
    try:
        result = generate(backend, args.prompt, config)
    finally:
        backend.close()
    print(f"Tokens ({len(result.tokens)}): {' '.join(map(str, result.tokens))}")
    print(f"Elapsed: {result.elapsed_seconds:.3f} s ({result.tokens_per_second:.1f} tokens/s)")
    table = pd.DataFrame([r.to_dict() for r in result.trace])
    print(table.dropna(axis=1, how='all').to_string(index=False))
    if args.trace_out:
        write_jsonl(args.trace_out, (trace_line("cli", config.method.value, r) for r in result.trace))
        print(f"Trace written to {args.trace_out}")
    return 0


def cmd_run(args, settings) -> int:
    if args.manifest:
        manifest = load_manifest(args.manifest)
    else:
        config = decoder_config_from_settings(settings)
        manifest = RunManifest.create(
            backend_spec_from_settings(settings), config, settings["corpus_path"], settings["output_dir"],
            run_name=args.run_name, workers=int(settings["workers"]),
        )
        manifest_path = os.path.join(settings["output_dir"], f"manifest_{args.run_name or config.method.value}.json")
        manifest.save(manifest_path)
        print(f"Manifest saved to {manifest_path}")
    if not os.path.exists(manifest.corpus_path):
        raise ConfigError(f"corpus not found: {manifest.corpus_path}")

    print("\n" + "=" * 60)
    print(f"RUN: {manifest.decoder['method']} on {manifest.corpus_path}")
    print("=" * 60)
    summary = run_experiment(manifest, show_progress=not args.no_progress)
    print(f"Prompts: {summary.n_prompts}, failed: {summary.n_failed}")
    print(f"Trace:  {summary.trace_path}")
    print(f"Report: {summary.report_path}")
    return summary.exit_code


def cmd_eval(args, settings) -> int:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        corpus_path, backend_spec = manifest.corpus_path, manifest.backend
    else:
        corpus_path, backend_spec = settings["corpus_path"], backend_spec_from_settings(settings)
    entries = evaluate_traces(args.trace, corpus_path, backend_spec)
    output = args.output or os.path.join(settings["output_dir"], "eval_report.jsonl")
    aggregate = aggregate_entries(entries)
    write_jsonl(output, entries + [aggregate])
    print(f"Evaluated {len(entries)} prompts; report written to {output}")
    print(f"Mean diversity: {aggregate['diversity']}, mean coherence: {aggregate['coherence']}")
    return 0


def cmd_compare(args, settings) -> int:
    table = compare_reports(args.report_a, args.report_b)
    print(table.to_string())
    if args.output:
        table.to_csv(args.output)
        print(f"Comparison saved to {args.output}")
    return 0


def cmd_trace_dump(args, settings) -> int:
    table = trace_dump(args.trace, args.prompt_id)
    if args.output:
        table.to_csv(args.output, index=False)
        print(f"Wrote {len(table)} steps to {args.output}")
    else:
        print(table.to_string(index=False))
    return 0


def cmd_check(args, settings) -> int:
    return check_trace_values.main(args.folder, args.vocab_size)


def _study_prompts(args, settings) -> list:
    if os.path.exists(settings["corpus_path"]):
        return [record.prompt for record in load_corpus(settings["corpus_path"])]
    logging.info(f"{settings['corpus_path']} not found; using {args.n_prompts} synthetic prompts")
    records = make_synthetic_corpus(args.n_prompts, SYNTHETIC_PROMPT_LENGTH, int(settings["vocab_size"]), seed=int(settings["rng_seed"]))
    return [record.prompt for record in records]


def cmd_ablate(args, settings) -> int:
    config = decoder_config_from_settings(settings)
    method = config.method if config.method.is_adaptive else DecodingMethod.ADAPTIVE_CONTRASTIVE
    prompts = _study_prompts(args, settings)
    backend = build_backend(backend_spec_from_settings(settings))
    try:
        table = q_ablation(
            backend, prompts, qs=args.qs, max_new_tokens=config.max_new_tokens, rng_seed=config.rng_seed,
            embedder=MeanRepresentationEmbedder(backend), method=method, show_progress=True,
        )
    finally:
        backend.close()
    print(table.to_string())
    output = args.output or os.path.join(settings["output_dir"], "q_ablation.csv")
    os.makedirs(os.path.dirname(output) or ".", exist_ok=True)
    table.to_csv(output)
    print(f"Ablation table saved to {output}")
    return 0


def cmd_speed(args, settings) -> int:
    config = decoder_config_from_settings(settings)
    prompts = _study_prompts(args, settings)
    backend = build_backend(backend_spec_from_settings(settings))
    try:
        table = speed_comparison(
            backend, prompts, qs=args.qs, k=config.k, alpha=config.alpha,
            max_new_tokens=config.max_new_tokens, show_progress=True,
        )
    finally:
        backend.close()
    print(table.to_string())
    output = args.output or os.path.join(settings["output_dir"], "speed.csv")
    os.makedirs(os.path.dirname(output) or ".", exist_ok=True)
    table.to_csv(output)
    print(f"Speed table saved to {output}")
    return 0


def cmd_make_corpus(args, settings) -> int:
    records = make_synthetic_corpus(
        args.n_prompts, args.prompt_length, int(settings["vocab_size"]),
        seed=int(settings["rng_seed"]), reference_length=args.reference_length,
    )
    write_corpus(records, settings["corpus_path"])
    print(f"Wrote {len(records)} prompts to {settings['corpus_path']}")
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'run': cmd_run,
    'eval': cmd_eval,
    'compare': cmd_compare,
    'trace-dump': cmd_trace_dump,
    'check': cmd_check,
    'ablate': cmd_ablate,
    'speed': cmd_speed,
    'make-corpus': cmd_make_corpus,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(vars(args), args.config)
        setup_logging(settings["log_file"])
        return COMMANDS[args.command](args, settings)
    except (ConfigError, ArgumentError, ReportMismatchError, CorpusFormatError, ValidationError, FileNotFoundError) as e:
        logging.error(f"{args.command}: {e}")
        print(f"Error: {e}")
        return 2
    except DecodingError as e:
        logging.error(f"{args.command}: {e}")
        print(f"Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
