"""
Settings for the decoding harness: defaults, .env paths, the optional JSON
config file and logging.

Precedence: command-line flags > config file > defaults.
"""
import json
import logging
import os

from dotenv import load_dotenv

from acs_module.decoders import DecoderConfig
from acs_module.errors import ArgumentError, ConfigError

load_dotenv()

# =============================================================================
# DEFAULTS
# =============================================================================
# Decoding (fixed CS k / alpha, ACS q and the continuation length)
DEFAULT_METHOD = "adaptive_contrastive"
DEFAULT_K = 10
DEFAULT_ALPHA = 0.6
DEFAULT_Q = 1.0
DEFAULT_P = 0.95
DEFAULT_TAU = 0.95
DEFAULT_MAX_NEW_TOKENS = 256
DEFAULT_RNG_SEED = 0

# Synthetic backend
DEFAULT_BACKEND = "synthetic"
DEFAULT_VOCAB_SIZE = 1024
DEFAULT_HIDDEN_DIM = 1024
DEFAULT_BACKEND_SEED = 7
DEFAULT_REPETITION_BIAS = 0.0
DEFAULT_LOGIT_SCALE = 2.0

DEFAULT_WORKERS = 4

DECODER_KEYS = ("method", "k", "alpha", "p", "tau", "q", "max_new_tokens", "rng_seed", "stop_tokens")
BACKEND_KEYS = ("backend", "vocab_size", "hidden_dim", "backend_seed", "repetition_bias", "logit_scale", "backend_command")
PATH_KEYS = ("corpus_path", "output_dir", "log_file")
SETTING_KEYS = DECODER_KEYS + BACKEND_KEYS + PATH_KEYS + ("workers",)


def default_settings() -> dict:
    """Defaults; paths come from ACS_CORPUS_PATH / ACS_OUTPUT_DIR / ACS_LOG_FILE when set."""
    return {
        "method": DEFAULT_METHOD,
        "k": DEFAULT_K,
        "alpha": DEFAULT_ALPHA,
        "p": DEFAULT_P,
        "tau": DEFAULT_TAU,
        "q": DEFAULT_Q,
        "max_new_tokens": DEFAULT_MAX_NEW_TOKENS,
        "rng_seed": DEFAULT_RNG_SEED,
        "stop_tokens": [],
        "backend": DEFAULT_BACKEND,
        "vocab_size": DEFAULT_VOCAB_SIZE,
        "hidden_dim": DEFAULT_HIDDEN_DIM,
        "backend_seed": DEFAULT_BACKEND_SEED,
        "repetition_bias": DEFAULT_REPETITION_BIAS,
        "logit_scale": DEFAULT_LOGIT_SCALE,
        "backend_command": None,
        "corpus_path": os.getenv("ACS_CORPUS_PATH", os.path.join("data", "corpus.jsonl")),
        "output_dir": os.getenv("ACS_OUTPUT_DIR", "outputs"),
        "log_file": os.getenv("ACS_LOG_FILE", "acs_decoding.log"),
        "workers": DEFAULT_WORKERS,
    }


def load_config_file(path: str) -> dict:
    """
    Reads a flat JSON object of settings.

    Args:
        path (str): Path to the JSON config file.

    Returns:
        dict: Settings found in the file.
    """
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(data) - set(SETTING_KEYS))
    if unknown:
        raise ConfigError(f"unknown settings in {path}: {unknown}")
    logging.info(f"Loaded {len(data)} settings from {path}")
    return data


def resolve_settings(flags: dict, config_path: str = None) -> dict:
    """
    Merges defaults, the config file and command-line flags.

    Args:
        flags (dict): Flag values; None means "not given on the command line".
        config_path (str, optional): JSON config file.

    Returns:
        dict: Complete settings.
    """
    settings = default_settings()
    if config_path:
        settings.update(load_config_file(config_path))
    settings.update({key: value for key, value in flags.items() if key in SETTING_KEYS and value is not None})
    if int(settings["workers"]) < 1:
        raise ConfigError(f"workers must be >= 1, got {settings['workers']}")
    return settings


def decoder_config_from_settings(settings: dict) -> DecoderConfig:
    try:
        return DecoderConfig.from_dict({key: settings[key] for key in DECODER_KEYS})
    except (ArgumentError, TypeError) as e:
        raise ConfigError(f"invalid decoder settings: {e}") from e


def backend_spec_from_settings(settings: dict) -> dict:
    """Backend entry of a run manifest."""
    if settings["backend"] == "synthetic":
        return {
            "kind": "synthetic",
            "vocab_size": int(settings["vocab_size"]),
            "hidden_dim": int(settings["hidden_dim"]),
            "seed": int(settings["backend_seed"]),
            "repetition_bias": float(settings["repetition_bias"]),
            "logit_scale": float(settings["logit_scale"]),
        }
    if settings["backend"] == "line-protocol":
        command = settings["backend_command"]
        if not command:
            raise ConfigError("the line-protocol backend needs backend_command")
        if isinstance(command, str):
            command = command.split()
        return {
            "kind": "line-protocol",
            "command": list(command),
            "vocab_size": int(settings["vocab_size"]),
            "hidden_dim": int(settings["hidden_dim"]),
        }
    raise ConfigError(f"unknown backend {settings['backend']!r}")


def setup_logging(log_file: str = None, level=logging.INFO) -> None:
    """Console plus file logging for one process."""
    log_file = log_file or os.getenv("ACS_LOG_FILE", "acs_decoding.log")
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_file)
        ]
    )
