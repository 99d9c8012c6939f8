"""
Line-delimited JSON formats of the harness.

corpus:  {"id": str, "prompt": [token ids], "reference": [token ids] | null}
trace:   {"prompt_id", "method", <TraceRecord fields>}, one line per generated token
report:  a "manifest" line, "prompt" lines, "failure" lines, one "aggregate" line
"""
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from acs_module.errors import CorpusFormatError

FLOAT_DIGITS = 9


@dataclass
class PromptRecord:
    id: str
    prompt: list
    reference: list = None

    def to_dict(self) -> dict:
        return {"id": self.id, "prompt": list(self.prompt), "reference": None if self.reference is None else list(self.reference)}


def format_float(value):
    """Rounds a float to 9 significant digits; None and ints pass through."""
    if value is None or isinstance(value, (bool, int, np.integer)):
        return None if value is None else int(value)
    value = float(value)
    if not math.isfinite(value):
        return value
    return float(f"{value:.{FLOAT_DIGITS}g}")


def read_jsonl(path: str) -> list:
    """
    Parses a line-delimited JSON file; blank lines are skipped.

    Returns:
        list[tuple[int, dict]]: (1-based line number, object) pairs.
    """
    rows = []
    with open(path, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(path, line_number, f"invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise CorpusFormatError(path, line_number, "expected a JSON object")
            rows.append((line_number, obj))
    return rows


def write_jsonl(path: str, rows) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _token_list(value, path, line_number, field_name, allow_empty):
    if isinstance(value, str):
        raise CorpusFormatError(path, line_number, f"{field_name} is raw text; a tokenizer adapter is required")
    if not isinstance(value, list) or not all(isinstance(t, int) and not isinstance(t, bool) and t >= 0 for t in value):
        raise CorpusFormatError(path, line_number, f"{field_name} must be a list of non-negative token ids")
    if not value and not allow_empty:
        raise CorpusFormatError(path, line_number, f"{field_name} must not be empty")
    return value


def load_corpus(path: str) -> list:
    """
    Loads a corpus file.

    Args:
        path (str): Line-delimited corpus file.

    Returns:
        list[PromptRecord]: Records in file order.
    """
    records = []
    seen = set()
    for line_number, obj in read_jsonl(path):
        prompt_id = obj.get("id")
        if not isinstance(prompt_id, str) or not prompt_id:
            raise CorpusFormatError(path, line_number, "id must be a non-empty string")
        if prompt_id in seen:
            raise CorpusFormatError(path, line_number, f"duplicate id {prompt_id!r}")
        seen.add(prompt_id)
        prompt = _token_list(obj.get("prompt"), path, line_number, "prompt", allow_empty=False)
        reference = obj.get("reference")
        if reference is not None:
            reference = _token_list(reference, path, line_number, "reference", allow_empty=True)
        records.append(PromptRecord(id=prompt_id, prompt=prompt, reference=reference))
    logging.info(f"Loaded {len(records)} prompts from {path}")
    return records


def write_corpus(records, path: str) -> None:
    write_jsonl(path, (record.to_dict() for record in records))


def make_synthetic_corpus(n_prompts: int, prompt_length: int, vocab_size: int, seed: int, reference_length: int = 0) -> list:
    """
    Random prompts for desk-scale runs.

    Args:
        n_prompts (int): Number of records.
        prompt_length (int): Tokens per prompt.
        vocab_size (int): Token ids are drawn from [0, vocab_size).
        seed (int): Seed of numpy.random.default_rng.
        reference_length (int): Tokens per reference continuation (0: no reference).

    Returns:
        list[PromptRecord]: Records with ids prompt-0000, prompt-0001, ...
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_prompts):
        prompt = rng.integers(0, vocab_size, size=prompt_length).tolist()
        reference = rng.integers(0, vocab_size, size=reference_length).tolist() if reference_length else None
        records.append(PromptRecord(id=f"prompt-{i:04d}", prompt=prompt, reference=reference))
    return records


def trace_line(prompt_id: str, method: str, record) -> dict:
    row = {"prompt_id": prompt_id, "method": method}
    row.update({key: format_float(value) for key, value in record.to_dict().items()})
    return row


def load_traces(path: str) -> dict:
    """
    Groups trace lines by prompt id, in file order.

    Returns:
        dict[str, list[dict]]: Trace rows per prompt id.
    """
    traces = {}
    for line_number, row in read_jsonl(path):
        if "prompt_id" not in row or "step" not in row or "chosen" not in row:
            raise CorpusFormatError(path, line_number, "trace line needs prompt_id, step and chosen")
        traces.setdefault(row["prompt_id"], []).append(row)
    return traces


def load_report(path: str) -> dict:
    """
    Returns:
        dict: {"manifest": dict | None, "prompts": list[dict], "failures": list[dict],
        "aggregate": dict | None}
    """
    report = {"manifest": None, "prompts": [], "failures": [], "aggregate": None}
    for line_number, row in read_jsonl(path):
        kind = row.get("type")
        if kind == "manifest":
            report["manifest"] = row
        elif kind == "prompt":
            report["prompts"].append(row)
        elif kind == "failure":
            report["failures"].append(row)
        elif kind == "aggregate":
            report["aggregate"] = row
        else:
            raise CorpusFormatError(path, line_number, f"unknown report line type {kind!r}")
    return report
