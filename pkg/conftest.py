import sys

import numpy as np
import pytest

from acs_module.backend import make_synthetic_backend
from acs_module.prob_core import ProbabilityDistribution
from corpus_io import make_synthetic_corpus, write_corpus

FAKE_SERVER = """\
import json
import sys

vocab_size, hidden_dim = int(sys.argv[1]), int(sys.argv[2])
for line in sys.stdin:
    context = json.loads(line)["context"]
    last = context[-1]
    weights = [1.0] * vocab_size
    weights[(7 * last + 3) % vocab_size] = float(vocab_size)
    total = sum(weights)
    representation = [1.0] * hidden_dim
    representation[last % hidden_dim] += float(len(context))
    print(json.dumps({"probs": [w / total for w in weights], "representation": representation}), flush=True)
"""


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def dirichlet():
    """Returns a sampler of random distributions: dirichlet(rng, vocab_size, concentration=1.0)."""
    def sample(rng, vocab_size, concentration=1.0):
        weights = rng.dirichlet(np.full(vocab_size, concentration))
        return ProbabilityDistribution.from_weights(weights + 1e-12)
    return sample


@pytest.fixture
def small_backend():
    return make_synthetic_backend(vocab_size=64, hidden_dim=32, seed=7, repetition_bias=0.0)


@pytest.fixture
def looping_backend():
    return make_synthetic_backend(vocab_size=64, hidden_dim=32, seed=7, repetition_bias=1.0)


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_corpus(make_synthetic_corpus(3, prompt_length=6, vocab_size=64, seed=1), str(path))
    return str(path)


@pytest.fixture
def line_protocol_spec(tmp_path):
    """Spec of an external stdin/stdout model process (vocab 64, hidden 8); its argmax after token t is (7t + 3) % 64."""
    script = tmp_path / "fake_server.py"
    script.write_text(FAKE_SERVER)
    return {"kind": "line-protocol", "command": [sys.executable, str(script), "64", "8"], "vocab_size": 64, "hidden_dim": 8}
