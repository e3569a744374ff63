"""Command-line trainer: ``sparsehdp --corpus docword.txt --vocab vocab.txt ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import (
    CorpusFormatError,
    PreprocessSpec,
    corpus_stats,
    default_stoplist,
    load_stoplist,
    parse_token_lines,
    parse_uci_bow,
    preprocess,
)
from .diagnostics import (
    CheckpointError,
    format_topic_summary,
    load_checkpoint,
    quantile_topic_summary,
    save_checkpoint,
    write_timings,
    write_trace,
)
from .sampler import SamplerStateError, gibbs_iteration
from .state import HdpConfig, init_state

log = logging.getLogger("sparsehdp")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsehdp", description="Train a sparse HDP topic model.")
    p.add_argument("--corpus", required=True, help="UCI docword file, or one document per line for --format text")
    p.add_argument("--vocab", help="UCI vocabulary file (required for --format uci)")
    p.add_argument("--format", choices=("uci", "text"), default="uci")
    p.add_argument("--stoplist", help="stoplist file, one term per line; 'none' disables. "
                                      "Default: the shipped English list for text input, none for UCI")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--kstar", type=int, default=1000, help="truncation level K*")
    p.add_argument("--iterations", type=int, default=1000,
                   help="target iteration count (a resumed run continues up to this number)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="default: max(1, iterations // 20)")
    p.add_argument("--summary-top-words", type=int, default=8)
    p.add_argument("--min-doc-tokens", type=int, default=10)
    p.add_argument("--rare-word-limit", type=int, default=10)
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint file")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def _require_file(path, what):
    if path is None or not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return Path(path)


def _stoplist(args) -> frozenset:
    if args.stoplist is None:
        return default_stoplist() if args.format == "text" else frozenset()
    if args.stoplist.lower() == "none":
        return frozenset()
    return load_stoplist(_require_file(args.stoplist, "stoplist"))


def load_corpus(args):
    """Read and preprocess the training corpus named by ``args``."""
    corpus_path = _require_file(args.corpus, "corpus")
    if args.format == "uci":
        if args.vocab is None:
            raise ValueError("--vocab is required with --format uci")
        vocab_path = _require_file(args.vocab, "vocab")
        with open(corpus_path) as fh, open(vocab_path) as vh:
            raw = parse_uci_bow(fh, vh).to_terms()
    else:
        with open(corpus_path, "rb") as fh:
            raw = parse_token_lines(fh.read())
    spec = PreprocessSpec(stoplist=_stoplist(args), min_doc_tokens=args.min_doc_tokens,
                          rare_word_limit=args.rare_word_limit)
    return preprocess(raw, spec)


def run_train(args) -> int:
    """Run the trainer for parsed ``args``; returns the process exit code."""
    if args.min_doc_tokens < 0 or args.rare_word_limit < 0 or args.summary_top_words < 1:
        raise ValueError("--min-doc-tokens and --rare-word-limit must be >= 0, "
                         "--summary-top-words >= 1")
    config = HdpConfig(alpha=args.alpha, beta=args.beta, gamma=args.gamma, k_star=args.kstar,
                       iterations=args.iterations, threads=args.threads, seed=args.seed)
    every = args.checkpoint_every or max(1, config.iterations // 20)
    if every < 1:
        raise ValueError("--checkpoint-every must be positive")
    out = Path(args.output_dir)

    corpus = load_corpus(args)
    V, D, N, longest = corpus_stats(corpus)
    log.info("corpus: V=%d D=%d N=%d longest document=%d", V, D, N, longest)
    if N == 0:
        raise ValueError("no tokens left after preprocessing")

    out.mkdir(parents=True, exist_ok=True)
    trace_path, timing_path = out / "trace.csv", out / "timings.csv"
    if args.resume:
        state, saved = load_checkpoint(_require_file(args.resume, "checkpoint"), corpus)
        # the model is defined by the checkpoint; only the run length and threads may change
        config = HdpConfig(alpha=saved.alpha, beta=saved.beta, gamma=saved.gamma,
                           k_star=saved.k_star, iterations=config.iterations,
                           threads=config.threads, seed=saved.seed)
        append = trace_path.exists()
        log.info("resuming from iteration %d", state.iteration)
    else:
        state = init_state(corpus, config)
        append = False
    if not append:
        write_trace([], trace_path, include_timings=False)
        write_timings([], timing_path)

    for it in range(state.iteration + 1, config.iterations + 1):
        state, rec = gibbs_iteration(state, corpus, config, it)
        write_trace([rec], trace_path, include_timings=False, append=True)
        write_timings([rec], timing_path, append=True)
        if it % every == 0 or it == config.iterations:
            save_checkpoint(state, config, out / f"checkpoint-{it:06d}.json", corpus)
            log.info("iteration %d: joint_ll=%.3f active=%d flag_tokens=%d",
                     it, rec.joint_log_likelihood, rec.active_topics, rec.flag_topic_tokens)

    summary = quantile_topic_summary(state, corpus.vocab, top_words=args.summary_top_words)
    (out / "topics.txt").write_text(format_topic_summary(summary))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        return run_train(args)
    except FileNotFoundError as exc:
        print(f"sparsehdp: error: {exc}", file=sys.stderr)
        return 2
    except (CorpusFormatError, CheckpointError, UnicodeDecodeError) as exc:
        print(f"sparsehdp: input error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"sparsehdp: configuration error: {exc}", file=sys.stderr)
        return 2
    except SamplerStateError as exc:
        print(f"sparsehdp: sampler error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"sparsehdp: I/O error: {exc}", file=sys.stderr)
        return 1
