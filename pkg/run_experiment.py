"""
Runs one decoding configuration over a corpus.

Prompts are decoded by a thread pool; the trace and report files are written
afterwards by a single writer, in corpus order then step order.
"""
import argparse
import datetime
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass

from tqdm import tqdm

from acs_module import __version__
from acs_module.backend import build_backend
from acs_module.decoders import DecoderConfig, generate
from acs_module.errors import ArgumentError, ConfigError, DecodingError, ValidationError
from acs_module.metrics import MeanRepresentationEmbedder, coherence, corpus_metrics, diversity
from corpus_io import format_float, load_corpus, load_traces, trace_line, write_jsonl

AGGREGATE_COLUMNS = ["diversity", "rep_2", "rep_3", "rep_4", "coherence", "elapsed_seconds", "tokens_per_second", "n_tokens"]


@dataclass
class RunManifest:
    """Everything needed to reproduce a run."""
    backend: dict
    decoder: dict
    corpus_path: str
    trace_path: str
    report_path: str
    created_at: str
    tool_version: str = __version__
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        fields = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        missing = [name for name in ("backend", "decoder", "corpus_path", "trace_path", "report_path") if name not in fields]
        if missing:
            raise ConfigError(f"manifest is missing {missing}")
        fields.setdefault("created_at", datetime.datetime.now().isoformat(timespec="seconds"))
        return cls(**fields)

    @classmethod
    def create(cls, backend_spec, config: DecoderConfig, corpus_path, output_dir, run_name=None, workers=1):
        run_name = run_name or config.method.value
        return cls(
            backend=backend_spec,
            decoder=config.to_dict(),
            corpus_path=corpus_path,
            trace_path=os.path.join(output_dir, f"trace_{run_name}.jsonl"),
            report_path=os.path.join(output_dir, f"report_{run_name}.jsonl"),
            created_at=datetime.datetime.now().isoformat(timespec="seconds"),
            workers=workers,
        )

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)


def load_manifest(path: str) -> RunManifest:
    try:
        with open(path, 'r') as f:
            return RunManifest.from_dict(json.load(f))
    except FileNotFoundError as e:
        raise ConfigError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"manifest {path} is not valid JSON: {e}") from e


@dataclass
class RunSummary:
    n_prompts: int
    n_failed: int
    trace_path: str
    report_path: str

    @property
    def exit_code(self) -> int:
        return 1 if self.n_failed else 0


def build_entry(prompt_id, prompt, tokens, embedder, elapsed_seconds=None, tokens_per_second=None) -> dict:
    """
    Per-prompt report entry: diversity, repetition rates, coherence and speed.

    Diversity is None for continuations shorter than 5 tokens.
    """
    entry = {"type": "prompt", "id": prompt_id, "n_tokens": len(tokens), "tokens": list(tokens)}
    try:
        entry.update(diversity(tokens).to_dict())
    except ValidationError as e:
        logging.warning(f"{prompt_id}: {e}")
        entry.update({"rep_2": None, "rep_3": None, "rep_4": None, "diversity": None})
    entry["coherence"] = coherence(prompt, tokens, embedder)
    entry["elapsed_seconds"] = elapsed_seconds
    entry["tokens_per_second"] = tokens_per_second
    for key in AGGREGATE_COLUMNS:
        entry[key] = format_float(entry[key])
    return entry


def aggregate_entries(entries, n_failed=0) -> dict:
    """Means of the per-prompt metrics, recomputable from the prompt lines alone."""
    table = corpus_metrics(entries)
    means = table.loc["aggregate"]
    row = {"type": "aggregate", "n_prompts": len(entries), "n_failed": n_failed}
    for column in AGGREGATE_COLUMNS:
        value = means.get(column)
        row[column] = None if value is None or value != value else format_float(value)
    return row


def process_prompt(record, backend, config: DecoderConfig, embedder):
    """
    Decodes one prompt and scores it.

    Returns:
        tuple: (status message, entry or None, trace rows, error message or None)
    """
    try:
        result = generate(backend, record.prompt, config)
        rows = [trace_line(record.id, config.method.value, r) for r in result.trace]
        entry = build_entry(record.id, record.prompt, result.tokens, embedder, result.elapsed_seconds, result.tokens_per_second)
        return f"[DONE] {record.id}", entry, rows, None
    except DecodingError as e:
        step = getattr(e, "step", None)
        logging.error(f"{record.id} failed at step {step}: {e}")
        return f"[FAILED] {record.id}", None, [], str(e)


def decode_corpus(records, backend, config, embedder, workers, show_progress=True) -> list:
    """
    Runs process_prompt over every record on a thread pool.

    Returns:
        list[tuple]: (status, entry, trace_rows, error) per record, in corpus order.
    """
    results = [None] * len(records)
    max_workers = max(1, min(workers, len(records) or 1))
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {
            executor.submit(process_prompt, record, backend, config, embedder): i
            for i, record in enumerate(records)
        }
        progress = tqdm(total=len(records), desc=config.method.value, disable=not show_progress)
        for future in as_completed(future_to_index):
            i = future_to_index[future]
            try:
                results[i] = future.result()
            except Exception as exc:
                results[i] = (f"[THREAD EXCEPTION] {records[i].id}", None, [], str(exc))
            if results[i][3] is not None:
                tqdm.write(f"{results[i][0]}: {results[i][3]}")
            progress.update(1)
        progress.close()
    return results


def run_experiment(manifest: RunManifest, show_progress=True) -> RunSummary:
    """
    Decodes every prompt of the manifest's corpus and writes trace and report files.

    The backend is closed before returning, also when decoding raises.

    Args:
        manifest (RunManifest): Run description.
        show_progress (bool): Show a tqdm bar.

    Returns:
        RunSummary: Counts and output paths; exit_code is 1 when any prompt failed.
    """
    try:
        config = DecoderConfig.from_dict(manifest.decoder)
    except (ArgumentError, TypeError) as e:
        raise ConfigError(f"invalid decoder in manifest: {e}") from e
    records = load_corpus(manifest.corpus_path)

    logging.info(f"Running {config.method.value} on {len(records)} prompts with {manifest.workers} workers")
    backend = build_backend(manifest.backend)
    try:
        results = decode_corpus(records, backend, config, MeanRepresentationEmbedder(backend), manifest.workers, show_progress)
    finally:
        backend.close()

    entries, failures, trace_rows = [], [], []
    for record, (status, entry, rows, error) in zip(records, results):
        if entry is None:
            failures.append({"type": "failure", "id": record.id, "error": error})
            continue
        entries.append(entry)
        trace_rows.extend(rows)

    write_jsonl(manifest.trace_path, trace_rows)
    report = [dict(type="manifest", **manifest.to_dict())] + entries + failures
    report.append(aggregate_entries(entries, n_failed=len(failures)))
    write_jsonl(manifest.report_path, report)

    logging.info(f"Wrote {len(trace_rows)} trace records to {manifest.trace_path}")
    logging.info(f"Wrote report to {manifest.report_path} ({len(entries)} ok, {len(failures)} failed)")
    return RunSummary(len(records), len(failures), manifest.trace_path, manifest.report_path)


def evaluate_traces(trace_path: str, corpus_path: str, backend_spec: dict) -> list:
    """
    Recomputes per-prompt diversity and coherence from a trace file.

    Args:
        trace_path (str): Trace file of a run.
        corpus_path (str): Corpus the run decoded.
        backend_spec (dict): Backend of the run (used by the coherence embedder).

    Returns:
        list[dict]: Report entries in corpus order; speed fields are None.
    """
    traces = load_traces(trace_path)
    backend = build_backend(backend_spec)
    embedder = MeanRepresentationEmbedder(backend)
    entries = []
    try:
        for record in load_corpus(corpus_path):
            rows = traces.get(record.id)
            if rows is None:
                logging.warning(f"No trace for {record.id}; skipping")
                continue
            tokens = [int(row["chosen"]) for row in sorted(rows, key=lambda r: r["step"])]
            entries.append(build_entry(record.id, record.prompt, tokens, embedder))
    finally:
        backend.close()
    return entries


def main():
    parser = argparse.ArgumentParser(description="Run a decoding manifest over its corpus.")
    parser.add_argument('--manifest', required=True, help="Path to a run manifest (JSON).")
    parser.add_argument('--no-progress', action='store_true', help="Hide the progress bar.")
    args = parser.parse_args()

    try:
        summary = run_experiment(load_manifest(args.manifest), show_progress=not args.no_progress)
    except ConfigError as e:
        print(f"Configuration error: {e}")
        sys.exit(2)
    sys.exit(summary.exit_code)


if __name__ == "__main__":
    main()
