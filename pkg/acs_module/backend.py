"""
Model interface used by the decoders, plus a deterministic synthetic model
for tests and desk-scale experiments and an adapter for external inference
processes speaking a line-delimited protocol.

A backend exposes only (next-token distribution, representation of the newest
context token). Real inference engines are plugged in through an adapter.
"""
import base64
import json
import logging
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from acs_module.errors import ArgumentError, ConfigError, ContractViolation, ValidationError
from acs_module.prob_core import ProbabilityDistribution
from acs_module.representation import Representation

MASK64 = (1 << 64) - 1
DIST_SALT = 0x5EED_D157_0000_0001
REP_SALT = 0x5EED_4E50_0000_0002
# Number of trailing context tokens that determine the synthetic distribution.
CONTEXT_WINDOW = 4
# Stand-in for the missing previous token of a one-token context.
NO_PREVIOUS_TOKEN = -1

DEFAULT_LOGIT_SCALE = 2.0


@dataclass(frozen=True)
class StepOutput:
    """Backend answer for one context: next-token distribution and newest-token state."""
    dist: ProbabilityDistribution
    last_representation: Representation


@dataclass(frozen=True)
class BackendDescriptor:
    vocab_size: int
    hidden_dim: int
    name: str

    def __post_init__(self):
        if int(self.vocab_size) < 2:
            raise ArgumentError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if int(self.hidden_dim) < 1:
            raise ArgumentError(f"hidden_dim must be >= 1, got {self.hidden_dim}")

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "hidden_dim": self.hidden_dim, "name": self.name}


class LanguageBackend(ABC):
    """Abstract base for every model backend."""

    @property
    @abstractmethod
    def descriptor(self) -> BackendDescriptor:
        """Vocabulary size, hidden size and a human-readable name."""

    @abstractmethod
    def step(self, context) -> StepOutput:
        """
        Next-token distribution for a context and the representation of its last token.

        Args:
            context (Sequence[int]): Non-empty sequence of token ids.

        Returns:
            StepOutput: Identical outputs for identical contexts.
        """

    def candidate_representations(self, context, candidates) -> dict:
        """
        Representation of every candidate appended to the context.

        The result must equal step(context + [v]).last_representation for each v;
        subclasses may batch as long as they keep that equality.

        Args:
            context (Sequence[int]): Current context.
            candidates (Iterable[int]): Non-empty set of candidate token ids.

        Returns:
            dict[int, Representation]: One entry per candidate.
        """
        candidates = self._check_candidates(candidates)
        context = list(context)
        return {v: self.step(context + [v]).last_representation for v in candidates}

    def close(self) -> None:
        """Releases whatever the backend holds open. In-process backends hold nothing."""

    def _check_context(self, context) -> list:
        context = [int(t) for t in context]
        if not context:
            raise ValidationError("context must contain at least one token")
        vocab_size = self.descriptor.vocab_size
        bad = [t for t in context if not 0 <= t < vocab_size]
        if bad:
            raise ValidationError(f"token ids out of range [0, {vocab_size}): {bad[:5]}")
        return context

    def _check_candidates(self, candidates) -> list:
        candidates = sorted({int(v) for v in candidates})
        if not candidates:
            raise ValidationError("candidate set must not be empty")
        vocab_size = self.descriptor.vocab_size
        if candidates[0] < 0 or candidates[-1] >= vocab_size:
            raise ValidationError(f"candidate ids out of range [0, {vocab_size})")
        return candidates


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 mixer (64-bit wrap-around)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def context_key(seed: int, salt: int, tokens) -> int:
    """
    Seed-mixed 64-bit hash of a token tuple.

    h = splitmix64(seed XOR salt), then h = splitmix64(h XOR (t + 1)) per token,
    so the missing-previous marker -1 hashes as 0.
    """
    h = splitmix64((seed ^ salt) & MASK64)
    for t in tokens:
        h = splitmix64(h ^ ((int(t) + 1) & MASK64))
    return h


class SyntheticBackend(LanguageBackend):
    """
    Deterministic stand-in for a language model.

    The next-token distribution mixes a base distribution, derived from a hash
    of the last four context tokens, with `repetition_bias` mass on the most
    recent token. The representation of a token depends on the token and its
    predecessor only, so a repeated bigram reproduces a context representation
    exactly and the degeneration penalty reaches 1.
    """

    def __init__(self, vocab_size, hidden_dim, seed, repetition_bias, logit_scale=DEFAULT_LOGIT_SCALE):
        if not 0.0 <= repetition_bias <= 1.0:
            raise ArgumentError(f"repetition_bias must lie in [0, 1], got {repetition_bias!r}")
        if not logit_scale > 0.0:
            raise ArgumentError(f"logit_scale must be > 0, got {logit_scale!r}")
        self._descriptor = BackendDescriptor(
            vocab_size=int(vocab_size),
            hidden_dim=int(hidden_dim),
            name=f"synthetic-v{vocab_size}-h{hidden_dim}-s{seed}-b{repetition_bias:g}",
        )
        self.seed = int(seed) & MASK64
        self.repetition_bias = float(repetition_bias)
        self.logit_scale = float(logit_scale)

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def to_spec(self) -> dict:
        return {
            "kind": "synthetic",
            "vocab_size": self._descriptor.vocab_size,
            "hidden_dim": self._descriptor.hidden_dim,
            "seed": self.seed,
            "repetition_bias": self.repetition_bias,
            "logit_scale": self.logit_scale,
        }

    def base_probabilities(self, context) -> np.ndarray:
        window = context[-CONTEXT_WINDOW:]
        rng = np.random.Generator(np.random.PCG64(context_key(self.seed, DIST_SALT, window)))
        logits = self.logit_scale * rng.standard_normal(self._descriptor.vocab_size)
        return softmax(logits)

    def token_representation(self, previous: int, token: int) -> Representation:
        rng = np.random.Generator(np.random.PCG64(context_key(self.seed, REP_SALT, (previous, token))))
        values = rng.standard_normal(self._descriptor.hidden_dim)
        return Representation(values / np.linalg.norm(values))

    def step(self, context) -> StepOutput:
        context = self._check_context(context)
        probs = (1.0 - self.repetition_bias) * self.base_probabilities(context)
        probs[context[-1]] += self.repetition_bias
        previous = context[-2] if len(context) > 1 else NO_PREVIOUS_TOKEN
        return StepOutput(
            dist=ProbabilityDistribution(probs),
            last_representation=self.token_representation(previous, context[-1]),
        )

    def candidate_representations(self, context, candidates) -> dict:
        # only the representation is needed, so the distribution is skipped
        context = self._check_context(context)
        candidates = self._check_candidates(candidates)
        return {v: self.token_representation(context[-1], v) for v in candidates}


def make_synthetic_backend(vocab_size, hidden_dim, seed, repetition_bias, logit_scale=DEFAULT_LOGIT_SCALE):
    """
    Creates a deterministic synthetic backend.

    Args:
        vocab_size (int): Number of tokens, >= 2.
        hidden_dim (int): Representation size, >= 1.
        seed (int): Seed mixed into every hash.
        repetition_bias (float): Mass in [0, 1] moved onto the most recent token.
        logit_scale (float): Spread of the hash-derived logits.

    Returns:
        SyntheticBackend: Immutable, safe to share between threads.
    """
    return SyntheticBackend(vocab_size, hidden_dim, seed, repetition_bias, logit_scale)


def encode_f32le(values) -> str:
    return base64.b64encode(np.asarray(values, dtype="<f4").tobytes()).decode("ascii")


def decode_f32le(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f4").astype(np.float64)


class LineProtocolBackend(LanguageBackend):
    """
    Adapter for an external inference process.

    Request (one line):  {"context": [token ids]}
    Response (one line): {"probs": [...], "representation": [...]}
    With "encoding": "f32le" in the response, both fields are base64 strings of
    little-endian float32 arrays. Calls are serialized, since the peer is stateful.

    Args:
        transport (Callable[[str], str]): Sends one request line, returns one response line.
        descriptor (BackendDescriptor): Sizes announced by the external model.
    """

    def __init__(self, transport, descriptor: BackendDescriptor):
        self._transport = transport
        self._descriptor = descriptor
        self._lock = threading.Lock()

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def step(self, context) -> StepOutput:
        context = self._check_context(context)
        request = json.dumps({"context": context})
        with self._lock:
            response_line = self._transport(request)
        try:
            response = json.loads(response_line)
            if response.get("encoding") == "f32le":
                probs = decode_f32le(response["probs"])
                rep = decode_f32le(response["representation"])
            else:
                probs = np.asarray(response["probs"], dtype=np.float64)
                rep = np.asarray(response["representation"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ContractViolation(f"malformed backend response: {e}") from e

        if probs.shape != (self._descriptor.vocab_size,):
            raise ContractViolation(f"backend returned {probs.shape[0]} probabilities, expected {self._descriptor.vocab_size}")
        if rep.shape != (self._descriptor.hidden_dim,):
            raise ContractViolation(f"backend returned representation of dim {rep.shape[0]}, expected {self._descriptor.hidden_dim}")
        # float32 transport loses a little mass; renormalize before validating
        return StepOutput(dist=ProbabilityDistribution.from_weights(probs), last_representation=Representation(rep))

    def close(self) -> None:
        close = getattr(self._transport, "close", None)
        if close is not None:
            with self._lock:
                close()


def subprocess_transport(command):
    """
    Spawns an external model process and returns a line transport for it.

    Args:
        command (list[str]): Program and arguments; the process reads requests on
            stdin and writes responses on stdout, one per line.

    Returns:
        Callable[[str], str]: The transport; it carries `close()` and the `process` handle.
    """
    logging.info(f"Starting external backend process: {' '.join(command)}")
    process = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)

    def send(line: str) -> str:
        process.stdin.write(line + "\n")
        process.stdin.flush()
        answer = process.stdout.readline()
        if not answer:
            raise ContractViolation(f"external backend exited with code {process.poll()}")
        return answer

    def close():
        if process.poll() is None:
            process.stdin.close()
            try:
                process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                logging.warning(f"External backend did not exit on EOF, killing pid {process.pid}")
                process.kill()
                process.wait()
        process.stdout.close()

    send.close = close
    send.process = process
    return send


def build_backend(spec: dict) -> LanguageBackend:
    """
    Builds a backend from its manifest entry.

    Args:
        spec (dict): {"kind": "synthetic", "vocab_size", "hidden_dim", "seed",
            "repetition_bias", ["logit_scale"]} or {"kind": "line-protocol",
            "command", "vocab_size", "hidden_dim", ["name"]}.

    Returns:
        LanguageBackend: The backend instance.
    """
    kind = spec.get("kind")
    try:
        if kind == "synthetic":
            return make_synthetic_backend(
                vocab_size=spec["vocab_size"],
                hidden_dim=spec["hidden_dim"],
                seed=spec["seed"],
                repetition_bias=spec["repetition_bias"],
                logit_scale=spec.get("logit_scale", DEFAULT_LOGIT_SCALE),
            )
        if kind == "line-protocol":
            descriptor = BackendDescriptor(spec["vocab_size"], spec["hidden_dim"], spec.get("name", "line-protocol"))
            return LineProtocolBackend(subprocess_transport(spec["command"]), descriptor)
    except KeyError as e:
        raise ConfigError(f"backend spec is missing field {e}") from e
    raise ConfigError(f"unknown backend kind: {kind!r}")
