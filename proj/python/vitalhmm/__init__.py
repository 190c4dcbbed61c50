"""Python access to the vitalhmm classifiers and experiment harness."""

import json

from ._vitalhmm import (
    VitalHmmError,
    default_synth_model,
    forward_loglik,
    hrci,
    lagged_correlation_range,
    logreg_fit,
    pops,
    render_markdown,
    sample_asymmetry,
    segment_count,
    viterbi_decode,
)
from . import _vitalhmm


def synth_generate(spec=None, seed=0):
    """Generate a synthetic corpus; `spec` is a dict of SynthSpec fields."""
    return _vitalhmm.synth_generate(json.dumps(spec or {}), seed)


def run_sweep(config):
    """Run an experiment config (dict) and return the results CSV text."""
    return _vitalhmm.run_sweep(json.dumps(config))


__all__ = [
    "VitalHmmError",
    "default_synth_model",
    "forward_loglik",
    "hrci",
    "lagged_correlation_range",
    "logreg_fit",
    "pops",
    "render_markdown",
    "run_sweep",
    "sample_asymmetry",
    "segment_count",
    "synth_generate",
    "viterbi_decode",
]
