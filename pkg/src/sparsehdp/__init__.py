"""Sparse parallel partially collapsed Gibbs sampling for HDP topic models."""

from .corpus import (
    Corpus,
    PreprocessSpec,
    Vocabulary,
    corpus_stats,
    parse_token_lines,
    parse_uci_bow,
    preprocess,
)
from .diagnostics import (
    TraceRecord,
    joint_log_likelihood,
    load_checkpoint,
    quantile_topic_summary,
    save_checkpoint,
    write_trace,
)
from .sampler import gibbs_iteration, run_chain
from .state import HdpConfig, ModelState, init_state, validate_state

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "PreprocessSpec",
    "Vocabulary",
    "corpus_stats",
    "parse_token_lines",
    "parse_uci_bow",
    "preprocess",
    "TraceRecord",
    "joint_log_likelihood",
    "load_checkpoint",
    "quantile_topic_summary",
    "save_checkpoint",
    "write_trace",
    "gibbs_iteration",
    "run_chain",
    "HdpConfig",
    "ModelState",
    "init_state",
    "validate_state",
]
