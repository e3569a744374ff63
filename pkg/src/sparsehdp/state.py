"""Sampler state: topic indicators plus every sufficient statistic, with validation.

Topics are numbered 1..K* as seen by callers (``z`` values, summaries).  All
arrays indexed by topic are 0-based, so topic ``k`` lives at row ``k - 1``;
the last row is the flag topic K*.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .randdist import UnitKind, stream_for

__all__ = [
    "HdpConfig",
    "WorkCounters",
    "ModelState",
    "init_state",
    "rebuild_counts",
    "rebuild_dtable",
    "threshold_counts",
    "validate_state",
]

PSI_TOL = 1e-12
PHI_TOL = 1e-12


@dataclass(frozen=True)
class HdpConfig:
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 1.0
    k_star: int = 1000
    iterations: int = 1000
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if int(self.k_star) != self.k_star or self.k_star < 1:
            raise ValueError(f"k_star must be a positive integer, got {self.k_star!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if not (-(2**63) <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")


@dataclass
class WorkCounters:
    # inner-loop steps and the min(nnz(m_d), nnz(phi_v)) bound, per token
    work: np.ndarray
    bound: np.ndarray
    flag_tokens: int = 0
    phase_ms: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, n_tokens: int) -> "WorkCounters":
        return cls(np.zeros(n_tokens, np.int32), np.zeros(n_tokens, np.int32))

    @property
    def total_work(self) -> int:
        return int(self.work.sum(dtype=np.int64))

    @property
    def max_ratio(self) -> float:
        if self.work.size == 0:
            return 0.0
        return float(np.max(self.work / np.maximum(self.bound, 1)))


@dataclass
class ModelState:
    """Full sampler state for one chain.

    ``z`` is aligned with ``corpus.tokens``.  ``m`` is a D x K* CSR matrix,
    ``n`` is K* x V CSR, ``phi`` is K* x V CSR with rows summing to one (or
    empty) and ``phi_cols`` its CSC twin used by the topic-indicator step.
    ``dtable[k-1, p-1]`` counts the documents holding exactly ``p`` tokens of
    topic ``k``.
    """

    k_star: int
    z: np.ndarray
    m: sp.csr_array
    n: sp.csr_array
    n_totals: np.ndarray
    phi: sp.csr_array
    phi_cols: sp.csc_array
    psi: np.ndarray
    l: np.ndarray
    dtable: sp.csr_array
    iteration: int = 0
    counters: WorkCounters | None = None

    @property
    def flag_tokens(self) -> int:
        return int(self.n_totals[-1])

    def active_topics(self) -> np.ndarray:
        """1-based indices of topics holding at least one token."""
        return np.flatnonzero(self.n_totals) + 1

    def copy(self) -> "ModelState":
        return ModelState(
            k_star=self.k_star, z=self.z.copy(), m=self.m.copy(), n=self.n.copy(),
            n_totals=self.n_totals.copy(), phi=self.phi.copy(), phi_cols=self.phi_cols.copy(),
            psi=self.psi.copy(), l=self.l.copy(), dtable=self.dtable.copy(),
            iteration=self.iteration, counters=self.counters,
        )


# ---------------------------------------------------------------------------
# count reconstruction
# ---------------------------------------------------------------------------

def _csr(data, rows, cols, shape) -> sp.csr_array:
    mat = sp.csr_array((data, (rows, cols)), shape=shape, dtype=np.int64)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def rebuild_counts(z, corpus: Corpus, k_star: int) -> tuple[sp.csr_array, sp.csr_array]:
    """Document-topic ``m`` (D x K*) and topic-word ``n`` (K* x V) implied by ``z``."""
    z = np.asarray(z)
    if z.shape != (corpus.N,):
        raise ValueError(f"z has shape {z.shape}, expected ({corpus.N},)")
    if z.size and (z.min() < 1 or z.max() > k_star):
        raise ValueError(f"topic index outside [1, {k_star}]")
    ones = np.ones(corpus.N, np.int64)
    topic = z.astype(np.int64) - 1
    m = _csr(ones, corpus.doc_index, topic, (corpus.D, k_star))
    n = _csr(ones, topic, corpus.tokens, (k_star, corpus.V))
    return m, n


def rebuild_dtable(m: sp.csr_array, max_doc_len: int | None = None) -> sp.csr_array:
    """K* x max_doc_len table: entry (k, p) = #documents with m[d, k] == p (columns 1-based in p)."""
    m = sp.csr_array(m)
    k_star = m.shape[1]
    coo = m.tocoo()
    occ = coo.data.astype(np.int64)
    width = int(max_doc_len if max_doc_len is not None else (occ.max() if occ.size else 0))
    keep = occ > 0
    return _csr(np.ones(int(keep.sum()), np.int64), coo.col[keep], occ[keep] - 1, (k_star, width))


def threshold_counts(dtable: sp.csr_array, k: int) -> np.ndarray:
    """D_{k,j} = #documents with m[d, k] >= j for j = 1..max occupancy (``k`` is 1-based)."""
    row = dtable[[k - 1], :].tocoo()
    if row.nnz == 0:
        return np.zeros(0, np.int64)
    dense = np.zeros(int(row.col.max()) + 1, np.int64)
    dense[row.col] = row.data
    return np.cumsum(dense[::-1])[::-1]


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_state(corpus: Corpus, config: HdpConfig, stream=None) -> ModelState:
    """All tokens in topic 1; Psi drawn from l_1 = #documents, Phi from the PPU step."""
    from .sampler import assemble_phi, sample_phi_rows, sample_psi

    if corpus.N == 0 or corpus.D == 0:
        raise ValueError("cannot initialize a sampler on an empty corpus")
    k_star = int(config.k_star)
    z = np.ones(corpus.N, np.int32)
    m, n = rebuild_counts(z, corpus, k_star)
    dtable = rebuild_dtable(m, corpus.max_doc_len)
    l = np.zeros(k_star, np.int64)
    l[0] = int(np.count_nonzero(corpus.doc_lengths))
    if stream is None:
        stream = stream_for(config.seed, 0, UnitKind.INIT, 0)
    psi = sample_psi(stream, l, config.gamma, k_star)
    rows = sample_phi_rows(n, config.beta, corpus.V, config.seed, 0, threads=config.threads)
    phi, phi_cols = assemble_phi(rows, corpus.V)
    state = ModelState(
        k_star=k_star, z=z, m=m, n=n, n_totals=np.asarray(n.sum(axis=1)).astype(np.int64),
        phi=phi, phi_cols=phi_cols, psi=psi, l=l, dtable=dtable, iteration=0,
        counters=WorkCounters.zeros(corpus.N),
    )
    state.counters.flag_tokens = state.flag_tokens
    return state


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _sparse_equal(a, b) -> bool:
    if a.shape != b.shape:
        return False
    return (sp.csr_array(a) != sp.csr_array(b)).nnz == 0


def validate_state(state: ModelState, corpus: Corpus) -> list[str]:
    """Every broken invariant, as human-readable messages; empty means consistent."""
    issues: list[str] = []
    K = state.k_star
    z = state.z
    if z.shape != (corpus.N,):
        return [f"z: length {z.shape} does not match corpus N={corpus.N}"]
    if z.size and (z.min() < 1 or z.max() > K):
        return [f"z: topic index outside [1, {K}]"]

    m_ref, n_ref = rebuild_counts(z, corpus, K)
    if not _sparse_equal(state.m, m_ref):
        bad = np.flatnonzero(np.asarray((sp.csr_array(state.m) != m_ref).sum(axis=1)).ravel())
        issues.append(f"m: counts disagree with z in documents {bad[:10].tolist()}")
    doc_sums = np.asarray(state.m.sum(axis=1)).ravel()
    if not np.array_equal(doc_sums, corpus.doc_lengths):
        bad = np.flatnonzero(doc_sums != corpus.doc_lengths)
        issues.append(f"m: row sums differ from document lengths in documents {bad[:10].tolist()}")
    if not _sparse_equal(state.n, n_ref):
        bad = np.flatnonzero(np.asarray((sp.csr_array(state.n) != n_ref).sum(axis=1)).ravel()) + 1
        issues.append(f"n: counts disagree with z in topics {bad[:10].tolist()}")
    row_sums = np.asarray(state.n.sum(axis=1)).ravel()
    if not np.array_equal(row_sums, state.n_totals):
        issues.append("n: per-topic totals disagree with row sums")
    if int(state.n_totals.sum()) != corpus.N:
        issues.append(f"n: grand total {int(state.n_totals.sum())} != N={corpus.N}")

    psi = state.psi
    if psi.shape != (K,):
        issues.append(f"psi: length {psi.shape} != K*={K}")
    else:
        if np.any(psi < 0) or not np.all(np.isfinite(psi)):
            issues.append("psi: negative or non-finite entries")
        if abs(float(psi.sum()) - 1.0) > PSI_TOL:
            issues.append(f"psi: sums to {float(psi.sum())!r}, not 1")

    dt_ref = rebuild_dtable(state.m, state.dtable.shape[1])
    if not _sparse_equal(state.dtable, dt_ref):
        issues.append("dtable: disagrees with occupancy counts in m")
    weights = np.arange(1, state.dtable.shape[1] + 1)
    weighted = state.dtable @ weights
    if not np.array_equal(np.asarray(weighted).ravel(), np.asarray(m_ref.sum(axis=0)).ravel()):
        issues.append("dtable: occupancy-weighted row sums differ from topic token totals")

    l = state.l
    if l.shape != (K,) or np.any(l < 0):
        issues.append("l: wrong shape or negative entries")
    else:
        tokens_per_topic = np.asarray(m_ref.sum(axis=0)).ravel()
        docs_per_topic = np.bincount(m_ref.tocoo().col, minlength=K)
        occupied = tokens_per_topic > 0
        low = occupied & (l < docs_per_topic)
        high = occupied & (l > tokens_per_topic)
        stray = ~occupied & (l != 0)
        for mask, what in ((low, "below #documents using topic"),
                           (high, "above token count"),
                           (stray, "nonzero for empty topic")):
            if np.any(mask):
                issues.append(f"l: {what} for topics {(np.flatnonzero(mask) + 1)[:10].tolist()}")

    phi = sp.csr_array(state.phi)
    if phi.shape != (K, corpus.V):
        issues.append(f"phi: shape {phi.shape} != ({K}, {corpus.V})")
    else:
        sums = np.asarray(phi.sum(axis=1)).ravel()
        nonempty = np.diff(phi.indptr) > 0
        if np.any(np.abs(sums[nonempty] - 1.0) > PHI_TOL) or np.any(phi.data <= 0):
            issues.append("phi: a nonempty row is not a positive probability vector")
        if not _sparse_equal(state.phi_cols, phi):
            issues.append("phi: column view out of sync with rows")

    if state.counters is not None and state.counters.flag_tokens != int(n_ref[[K - 1], :].sum()):
        issues.append("counters: flag-topic token count differs from n for topic K*")
    return issues
