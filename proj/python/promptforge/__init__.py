"""Data-free distillation from a toy vision-language teacher.

Thin wrapper over the C++ core; configs are plain dicts.
"""

import json

from . import _core
from ._core import (
    ContractViolation,
    GateFailure,
    NumericFault,
    ValidationError,
    ablation_suites,
    categories,
    codebook_stats,
    contrastive_prompt_loss,
    cosine_similarity,
    distill_loss,
    domains,
    emit_report,
    mix_prompt,
    read_results,
    render_domain,
    soft_label,
    spherical_distance_sq,
)

__all__ = [
    "ContractViolation", "GateFailure", "NumericFault", "ValidationError",
    "ablation_suites", "categories", "codebook_stats", "config_hash", "contrastive_prompt_loss",
    "cosine_similarity", "default_config", "distill_loss", "domains", "emit_report", "load_config",
    "mix_prompt", "normalize_config", "read_results", "render_domain", "run_ablation", "run_pipeline",
    "soft_label", "spherical_distance_sq",
]


def default_config():
    return json.loads(_core.default_config_json())


def normalize_config(config):
    """Validates a (possibly partial) config and fills in defaults."""
    return json.loads(_core.normalize_config_json(json.dumps(config)))


def load_config(path):
    with open(path) as f:
        return normalize_config(json.load(f))


def config_hash(config):
    return _core.config_hash(json.dumps(config))


def run_pipeline(config, run_dir, workers=0, cache_dir=""):
    """Returns (result rows, run record)."""
    rows, record = _core.run_pipeline(json.dumps(config), str(run_dir), workers, str(cache_dir))
    return rows, json.loads(record)


def run_ablation(suite, config, out):
    return _core.run_ablation(suite, json.dumps(config), str(out))
