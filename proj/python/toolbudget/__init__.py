"""Python front end for the budget-constrained tool-use engine.

Structured values cross the C++ boundary as JSON; this package exposes them
as plain dicts. Exact money/probability values arrive as canonical rational
strings ("43", "760/7") that `fractions.Fraction` parses directly.
"""

import json as _json
from fractions import Fraction

from ._core import (  # noqa: F401
    __version__,
    ece,
    geometric_cost,
    validate_trajectory_jsonl,
)
from . import _core


def default_run_config():
    return _json.loads(_core.default_run_config_json())


def gen_market(seed=0, n_tools=20, n_facts=3, cost_low="5", cost_high="50",
               budget="50", prob_low="1/4", prob_high="1"):
    """Generate one synthetic task; returns {"task": ..., "truth": ...}."""
    config = {
        "seed": seed,
        "n_tools": n_tools,
        "n_facts": n_facts,
        "cost_low": str(cost_low),
        "cost_high": str(cost_high),
        "budget": str(budget),
        "prob_low": str(prob_low),
        "prob_high": str(prob_high),
    }
    return _json.loads(_core.gen_market_json(_json.dumps(config)))


def run_task(task, truth, **config):
    """Run a single task dict; keyword args override the default run config."""
    cfg = default_run_config()
    cfg.update(config)
    return _json.loads(
        _core.run_task_json(_json.dumps(task), _json.dumps(truth), _json.dumps(cfg))
    )


def run_batch(**config):
    """Run a benchmark batch; returns the metrics report dict."""
    cfg = default_run_config()
    cfg.update(config)
    return _json.loads(_core.run_batch_json(_json.dumps(cfg)))


def brute_force_solvable(task, truth):
    out = _json.loads(
        _core.brute_force_solvable_json(_json.dumps(task), _json.dumps(truth))
    )
    if out["min_expected_cost"] is not None:
        out["min_expected_cost"] = Fraction(out["min_expected_cost"])
    return out["solvable"], out["min_expected_cost"]


def fit_temperature(scores, labels, scores_are_probs=False, bins=10):
    return _json.loads(
        _core.fit_temperature_json(list(scores), list(labels), scores_are_probs, bins)
    )
