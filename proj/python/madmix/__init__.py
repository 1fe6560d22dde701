"""MAD Mix variational flows: Python front end to the C++ core."""

import json

from ._core import (
    ConfigError,
    DiscretePMF,
    IsingChain,
    MadmixError,
    MadMixFlow,
    Target,
    ToyTarget,
    ising_exact_pmf,
    ising_log_partition,
    mad_forward,
    mad_inverse,
)
from . import _core

__all__ = [
    "ConfigError",
    "DiscretePMF",
    "IsingChain",
    "MadmixError",
    "MadMixFlow",
    "Target",
    "ToyTarget",
    "ising_exact_pmf",
    "ising_log_partition",
    "mad_forward",
    "mad_inverse",
    "run_experiment",
]


def run_experiment(config=None, full=False, **kwargs):
    """Run one experiment cell; keys match the JSON config accepted by the CLI.

    Returns a dict with "records" (and "pmf" / "samples_csv" when full=True).
    """
    cfg = dict(config or {})
    cfg.update(kwargs)
    return json.loads(_core._run_json(json.dumps(cfg), full))
