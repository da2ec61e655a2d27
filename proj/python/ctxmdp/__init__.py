"""Context-summarizing agents for contextual MDPs."""

import json as _json

from ._ctxmdp import (
    ConfigError,
    Unfittable,
    cross_factor_fit,
    exact_mi,
    fit_power_law,
    report,
    sqrt_scaling_slope,
    sufficiency_epsilon,
    summarize,
    token_elasticity,
    validate_config,
)
from . import _ctxmdp

__all__ = [
    "ConfigError",
    "Unfittable",
    "cross_factor_fit",
    "estimate_mi",
    "exact_mi",
    "fit_power_law",
    "report",
    "run",
    "sqrt_scaling_slope",
    "sufficiency_epsilon",
    "summarize",
    "sweep",
    "token_elasticity",
    "validate_config",
]


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def estimate_mi(counts, seed=0):
    """Exact, MINE and InfoNCE estimates for a count matrix."""
    return _json.loads(_ctxmdp.estimate_mi_json(counts, seed))


def run(config, out, jobs=1):
    """Run every baseline and seed of a config (dict or JSON text); returns run summaries."""
    return [_json.loads(s) for s in _ctxmdp.run_json(_text(config), str(out), jobs)]


def sweep(config, axis, values, out, jobs=1):
    """Sweep one factor; returns the summary of every sweep run."""
    values = [str(v) for v in values]
    return [_json.loads(s) for s in _ctxmdp.sweep_json(_text(config), axis, values, str(out), jobs)]
