"""Trace metrics, topic summaries, trace files and checkpoints."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .corpus import Corpus, Vocabulary
from .state import (
    HdpConfig,
    ModelState,
    WorkCounters,
    rebuild_counts,
    rebuild_dtable,
)

__all__ = [
    "TraceRecord",
    "TopicSummary",
    "CheckpointError",
    "joint_log_likelihood",
    "active_topic_count",
    "make_trace_record",
    "quantile_topic_summary",
    "format_topic_summary",
    "write_trace",
    "write_timings",
    "trace_header",
    "TRACE_HEADER",
    "save_checkpoint",
    "load_checkpoint",
]

TRACE_HEADER = ("iteration", "joint_ll", "active_topics", "flag_tokens", "max_work_ratio",
                "phase_ms_phi", "phase_ms_z", "phase_ms_l", "phase_ms_psi")
_PHASES = ("phi", "z", "l", "psi")


@dataclass
class TraceRecord:
    iteration: int
    joint_log_likelihood: float
    active_topics: int
    flag_topic_tokens: int
    tokens_per_topic: dict = field(default_factory=dict)
    max_work_ratio: float = 0.0
    phase_ms: dict = field(default_factory=dict)


def joint_log_likelihood(state: ModelState, corpus: Corpus, config: HdpConfig) -> float:
    """log p(w | z, beta) + log p(z | Psi, alpha) with Phi, theta and the urn flags integrated out.

    The first term is the Dirichlet-multinomial over topic-word counts; the
    second the Polya-sequence marginal of each document's indicators.
    """
    n = sp.csr_array(state.n)
    m = sp.csr_array(state.m)
    if int(state.n_totals.sum()) != corpus.N or not np.array_equal(
            np.asarray(m.sum(axis=1)).ravel(), corpus.doc_lengths):
        raise ValueError("state counts are inconsistent with the corpus")
    beta, alpha, V = config.beta, config.alpha, corpus.V
    totals = state.n_totals[state.n_totals > 0].astype(float)
    ll_words = float(np.sum(gammaln(V * beta) - gammaln(V * beta + totals)))
    ll_words += float(np.sum(gammaln(beta + n.data) - gammaln(beta)))

    coo = m.tocoo()
    prior = alpha * state.psi[coo.col]
    with np.errstate(divide="ignore"):
        ll_topics = float(np.sum(gammaln(prior + coo.data) - gammaln(prior)))
    lengths = corpus.doc_lengths.astype(float)
    ll_topics -= float(np.sum(gammaln(alpha + lengths) - gammaln(alpha)))
    return ll_words + ll_topics


def active_topic_count(state: ModelState) -> int:
    return int(np.count_nonzero(state.n_totals))


def make_trace_record(state: ModelState, corpus: Corpus, config: HdpConfig) -> TraceRecord:
    counters = state.counters or WorkCounters.zeros(corpus.N)
    occupied = np.flatnonzero(state.n_totals)
    return TraceRecord(
        iteration=state.iteration,
        joint_log_likelihood=joint_log_likelihood(state, corpus, config),
        active_topics=int(occupied.size),
        flag_topic_tokens=int(state.n_totals[-1]),
        tokens_per_topic={int(k) + 1: int(state.n_totals[k]) for k in occupied},
        max_work_ratio=counters.max_ratio,
        phase_ms=dict(counters.phase_ms),
    )


# ---------------------------------------------------------------------------
# topic summaries
# ---------------------------------------------------------------------------

@dataclass
class TopicSummary:
    quantile: float
    topic: int
    tokens: int
    top_words: list  # [(word, count)], most frequent first


def _top_words(n: sp.csr_array, k0: int, top: int, vocab: Vocabulary | None):
    lo, hi = n.indptr[k0], n.indptr[k0 + 1]
    words, counts = n.indices[lo:hi], n.data[lo:hi]
    order = np.lexsort((words, -counts))[:top]
    label = (lambda v: vocab[v]) if vocab is not None else (lambda v: int(v))
    return [(label(words[i]), int(counts[i])) for i in order]


def quantile_topic_summary(state: ModelState, vocab: Vocabulary | None = None,
                           quantiles=(1.0, 0.75, 0.5, 0.25, 0.05), per_quantile: int = 5,
                           top_words: int = 8, min_tokens: int = 100) -> list[TopicSummary]:
    """Topics nearest each quantile of the token-count ranking.

    Topics with at least ``min_tokens`` tokens are ranked by size (ties by
    topic index).  Quantile ``q`` targets rank position ``(1 - q)(R - 1)``
    and takes the ``per_quantile`` closest ranks, preferring the larger topic
    on equal distance.
    """
    totals = state.n_totals
    ranked = [int(k) for k in np.lexsort((np.arange(totals.size), -totals)) if totals[k] >= min_tokens]
    R = len(ranked)
    n = sp.csr_array(state.n)
    out = []
    if R == 0:
        return out
    positions = np.arange(R)
    for q in quantiles:
        centre = (1.0 - q) * (R - 1)
        picked = sorted(sorted(positions, key=lambda p: (abs(p - centre), p))[:per_quantile])
        for p in picked:
            k0 = ranked[p]
            out.append(TopicSummary(q, k0 + 1, int(totals[k0]), _top_words(n, k0, top_words, vocab)))
    return out


def format_topic_summary(summary: list[TopicSummary]) -> str:
    lines = ["quantile\ttopic\ttokens\ttop_words"]
    for s in summary:
        words = "\t".join(f"{w}:{c}" for w, c in s.top_words)
        lines.append(f"{s.quantile * 100:g}%\t{s.topic}\t{s.tokens}\t{words}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------

def _trace_row(rec: TraceRecord, include_timings: bool) -> list[str]:
    row = [str(rec.iteration), f"{rec.joint_log_likelihood:.6f}", str(rec.active_topics),
           str(rec.flag_topic_tokens), f"{rec.max_work_ratio:.6f}"]
    if include_timings:
        row += [f"{rec.phase_ms.get(p, 0.0):.3f}" for p in _PHASES]
    return row


def trace_header(include_timings: bool = True) -> tuple[str, ...]:
    return TRACE_HEADER if include_timings else TRACE_HEADER[:5]


def write_trace(records, path, include_timings: bool = True, append: bool = False) -> None:
    """Write trace rows as CSV with a fixed header and fixed-precision numbers.

    Wall-clock columns are the only nondeterministic fields; pass
    ``include_timings=False`` for a file that is reproducible byte for byte.
    """
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append:
            writer.writerow(trace_header(include_timings))
        for rec in records:
            writer.writerow(_trace_row(rec, include_timings))


def write_timings(records, path, append: bool = False) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append:
            writer.writerow(("iteration",) + TRACE_HEADER[5:])
        for rec in records:
            writer.writerow([str(rec.iteration)] + [f"{rec.phase_ms.get(p, 0.0):.3f}" for p in _PHASES])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "sparsehdp-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _corpus_fingerprint(corpus: Corpus) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(corpus.doc_ptr, np.int64).tobytes())
    h.update(np.asarray(corpus.tokens, np.int32).tobytes())
    h.update(str(corpus.V).encode())
    return h.hexdigest()


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(state: ModelState, config: HdpConfig, path, corpus: Corpus) -> None:
    """Write config, iteration, seed, Psi, l and delta-encoded z; counts are rebuilt on load."""
    z_docs = []
    for d in range(corpus.D):
        zd = state.z[corpus.doc_ptr[d]:corpus.doc_ptr[d + 1]].astype(np.int64)
        z_docs.append(np.diff(zd, prepend=0).tolist())
    payload = {
        "config": asdict(config),
        "iteration": int(state.iteration),
        "seed": int(config.seed),
        "corpus": {"D": corpus.D, "N": corpus.N, "V": corpus.V,
                   "sha256": _corpus_fingerprint(corpus)},
        "psi": [float(x).hex() for x in state.psi],
        "l": state.l.astype(int).tolist(),
        "z_delta": z_docs,
    }
    envelope = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "sha256": _digest(payload), "payload": payload}
    with open(path, "w") as fh:
        json.dump(envelope, fh, separators=(",", ":"))


def load_checkpoint(path, corpus: Corpus) -> tuple[ModelState, HdpConfig]:
    from .sampler import assemble_phi, sample_phi_rows
    from .randdist import UnitKind

    try:
        with open(path) as fh:
            envelope = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if not isinstance(envelope, dict) or envelope.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if envelope.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {envelope.get('version')!r} "
                              f"unsupported (expected {CHECKPOINT_VERSION})")
    payload = envelope.get("payload")
    if not isinstance(payload, dict) or _digest(payload) != envelope.get("sha256"):
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")

    config = HdpConfig(**payload["config"])
    meta = payload["corpus"]
    if (meta["D"], meta["N"], meta["V"]) != (corpus.D, corpus.N, corpus.V) \
            or meta["sha256"] != _corpus_fingerprint(corpus):
        raise CheckpointError(f"{path}: checkpoint was written for a different corpus")
    z = np.concatenate([np.cumsum(np.asarray(d, np.int64)) for d in payload["z_delta"]]
                       or [np.zeros(0, np.int64)]).astype(np.int32)
    K = config.k_star
    m, n = rebuild_counts(z, corpus, K)
    iteration = int(payload["iteration"])
    # phi is redrawn before it is next used; a fresh draw keeps the loaded state complete
    rows = sample_phi_rows(n, config.beta, corpus.V, config.seed, iteration,
                           kind=UnitKind.INIT)
    phi, phi_cols = assemble_phi(rows, corpus.V)
    state = ModelState(
        k_star=K, z=z, m=m, n=n, n_totals=np.asarray(n.sum(axis=1)).ravel().astype(np.int64),
        phi=phi, phi_cols=phi_cols,
        psi=np.array([float.fromhex(x) for x in payload["psi"]]),
        l=np.asarray(payload["l"], np.int64), dtable=rebuild_dtable(m, corpus.max_doc_len),
        iteration=iteration, counters=WorkCounters.zeros(corpus.N),
    )
    state.counters.flag_tokens = state.flag_tokens
    return state, config
