"""Doubly sparse partially collapsed Gibbs sampler for the HDP topic model.

One iteration runs four phases in order:

1. ``phi``  - each topic row is drawn from a Poisson Polya urn, PPU(n_k + beta),
   in parallel over topics; a column view and per-word alias tables follow.
2. ``z``    - documents are swept in parallel.  The topic-indicator full
   conditional splits into an alias-table bucket ``alpha psi_k phi_kv`` and a
   sparse bucket ``phi_kv m_dk`` that walks the smaller of the two supports.
3. ``l``    - the global-topic statistic is drawn per topic as a sum of
   binomials over the document occupancy table.
4. ``psi``  - the global topic distribution is drawn by stick breaking with
   the final stick fixed to one.

Each work unit draws from its own counter-based stream, so the chain depends
only on (seed, config, corpus) and not on the number of threads.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .randdist import (
    AliasTable,
    UnitKind,
    alias_pick,
    draw_beta,
    draw_binomial,
    draw_poisson,
    stream_for,
    vose_fill,
)
from .state import HdpConfig, ModelState, WorkCounters, rebuild_dtable, threshold_counts

__all__ = [
    "SamplerStateError",
    "SparsePhiRow",
    "WordAliases",
    "sample_phi_row",
    "sample_phi_rows",
    "assemble_phi",
    "build_word_aliases",
    "sample_token",
    "sample_document",
    "sample_l_topic",
    "sample_l",
    "sample_psi",
    "gibbs_iteration",
    "run_chain",
]


class SamplerStateError(RuntimeError):
    """The state admits no valid move, e.g. a word type with no topic able to emit it."""


# ---------------------------------------------------------------------------
# phi: Poisson Polya urn rows
# ---------------------------------------------------------------------------

@dataclass
class SparsePhiRow:
    indices: np.ndarray   # word types with a nonzero draw, ascending
    counts: np.ndarray    # raw Poisson counts
    probs: np.ndarray     # counts / raw_total
    raw_total: int

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.probs.tolist()))

    def __len__(self) -> int:
        return int(self.indices.size)


def _sparse_counts(n_k) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(n_k, dict):
        idx = np.fromiter(n_k.keys(), np.int64, len(n_k))
        cnt = np.fromiter(n_k.values(), np.int64, len(n_k))
        return idx, cnt
    idx, cnt = n_k
    return np.asarray(idx, np.int64), np.asarray(cnt, np.int64)


def sample_phi_row(stream, n_k, beta: float, V: int) -> SparsePhiRow:
    """One PPU(n_k + beta) row.

    The raw count of word ``v`` is Poisson(beta + n_kv), realized as the sum
    of a beta part, Poisson(beta * V) points scattered uniformly over the
    vocabulary, and an independent Poisson(n_kv) draw per nonzero count.
    ``n_k`` is a ``{word: count}`` dict or an ``(indices, counts)`` pair.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if V < 1:
        raise ValueError(f"V must be at least 1, got {V!r}")
    idx, cnt = _sparse_counts(n_k)
    n_points = int(draw_poisson(stream, beta * V))
    points = stream.integers(0, V, size=n_points)
    extra = draw_poisson(stream, cnt.astype(float)) if cnt.size else np.zeros(0, np.int64)
    words = np.concatenate([points, idx])
    hits = np.concatenate([np.ones(n_points, np.int64), extra])
    keep = hits > 0
    words, inverse = np.unique(words[keep], return_inverse=True)
    counts = np.bincount(inverse, weights=hits[keep], minlength=words.size).astype(np.int64)
    total = int(counts.sum())
    probs = counts / total if total else np.zeros(0)
    return SparsePhiRow(words.astype(np.int32), counts, probs, total)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sample_phi_rows(n: sp.csr_array, beta: float, V: int, seed: int, iteration: int,
                    threads: int = 1, kind: UnitKind = UnitKind.PHI_ROW) -> list[SparsePhiRow]:
    """Every topic row, each from the stream keyed (iteration, kind, k)."""
    indptr, indices, data = n.indptr, n.indices, n.data

    def row(k):
        lo, hi = indptr[k], indptr[k + 1]
        stream = stream_for(seed, iteration, kind, k + 1)
        return sample_phi_row(stream, (indices[lo:hi], data[lo:hi]), beta, V)

    return _pool_map(row, range(n.shape[0]), threads)


def assemble_phi(rows, V: int) -> tuple[sp.csr_array, sp.csc_array]:
    """Stack rows into a K* x V CSR matrix plus the CSC column view used by the z step."""
    K = len(rows)
    indptr = np.zeros(K + 1, np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = np.concatenate([r.indices for r in rows]) if K else np.zeros(0, np.int32)
    data = np.concatenate([r.probs for r in rows]) if K else np.zeros(0)
    phi = sp.csr_array((data.astype(np.float64), indices.astype(np.int32), indptr), shape=(K, V))
    cols = sp.csc_array(phi)
    cols.sort_indices()
    return phi, cols


# ---------------------------------------------------------------------------
# per-word alias tables over the nonzero entries of each phi column
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _fill_word_aliases(col_ptr, col_topics, col_phi, psi, alpha, prob, alias, total_a):
    n_words = col_ptr.shape[0] - 1
    width = 0
    for v in range(n_words):
        width = max(width, col_ptr[v + 1] - col_ptr[v])
    w = np.empty(width)
    small = np.empty(width, np.int64)
    large = np.empty(width, np.int64)
    for v in range(n_words):
        lo = col_ptr[v]
        size = col_ptr[v + 1] - lo
        for j in range(size):
            w[j] = alpha * psi[col_topics[lo + j]] * col_phi[lo + j]
        total_a[v] = vose_fill(w[:size], prob[lo:lo + size], alias[lo:lo + size],
                               small, large)


@dataclass
class WordAliases:
    """Alias tables for bucket (a), laid out in parallel with the CSC column arrays."""

    col_ptr: np.ndarray
    topics: np.ndarray     # 0-based topic of each column entry
    prob: np.ndarray
    alias: np.ndarray      # local position within the column
    total_a: np.ndarray    # alpha * sum_k psi_k phi_kv

    def table(self, v: int) -> AliasTable:
        lo, hi = self.col_ptr[v], self.col_ptr[v + 1]
        return AliasTable(prob=self.prob[lo:hi], alias=self.alias[lo:hi],
                          total_weight=float(self.total_a[v]), support=self.topics[lo:hi] + 1)


def build_word_aliases(phi_cols: sp.csc_array, psi: np.ndarray, alpha: float) -> WordAliases:
    col_ptr = phi_cols.indptr.astype(np.int64)
    topics = phi_cols.indices.astype(np.int64)
    col_phi = phi_cols.data.astype(np.float64)
    prob = np.ones(col_phi.size)
    alias = np.zeros(col_phi.size, np.int64)
    total_a = np.zeros(phi_cols.shape[1])
    _fill_word_aliases(col_ptr, topics, col_phi, np.asarray(psi, np.float64), float(alpha),
                       prob, alias, total_a)
    return WordAliases(col_ptr, topics, prob, alias, total_a)


# ---------------------------------------------------------------------------
# z: two-bucket sparse draw
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _find(sorted_arr, lo, hi, key):
    while lo < hi:
        mid = (lo + hi) >> 1
        if sorted_arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


@numba.njit(cache=True, nogil=True)
def draw_topic(v, m_dense, nz, n_nz, col_ptr, col_topics, col_phi,
               a_prob, a_alias, total_a, u0, u1, cand, cum):
    """Draw a 0-based topic for word ``v`` given the document counts with the token removed.

    ``nz[:n_nz]`` lists the topics with ``m_dense > 0``.  Returns
    (topic, intersection steps, support bound); topic is -1 when the total
    mass is zero.
    """
    lo = col_ptr[v]
    n_col = col_ptr[v + 1] - lo
    n_cand = 0
    total_b = 0.0
    if n_nz <= n_col:
        steps = n_nz
        for t in range(n_nz):
            k = nz[t]
            pos = _find(col_topics, lo, lo + n_col, k)
            if pos < lo + n_col and col_topics[pos] == k:
                total_b += col_phi[pos] * m_dense[k]
                cand[n_cand] = k
                cum[n_cand] = total_b
                n_cand += 1
    else:
        steps = n_col
        for pos in range(lo, lo + n_col):
            k = col_topics[pos]
            if m_dense[k] > 0:
                total_b += col_phi[pos] * m_dense[k]
                cand[n_cand] = k
                cum[n_cand] = total_b
                n_cand += 1
    bound = min(n_nz, n_col)
    ta = total_a[v]
    mass = ta + total_b
    if not mass > 0.0:
        return -1, steps, bound
    x = u0 * mass
    if x < ta or n_cand == 0:
        j = alias_pick(a_prob, a_alias, lo, n_col, u1)
        return col_topics[lo + j], steps, bound
    x -= ta
    for t in range(n_cand - 1):
        if x < cum[t]:
            return cand[t], steps, bound
    return cand[n_cand - 1], steps, bound


@numba.njit(cache=True, nogil=True)
def _sweep(K, doc_lo, doc_hi, doc_ptr, tokens, z, uniforms, m_ptr, m_idx, m_val,
           col_ptr, col_topics, col_phi, a_prob, a_alias, total_a,
           out_idx, out_val, out_nnz, work, bound):
    """Resample every token of documents [doc_lo, doc_hi) in place.

    Per-document topic counts start from the previous ``m`` (CSR) and are
    updated incrementally; the final sorted counts land in ``out_*`` at the
    document's token offset.  Returns -1 or the index of a token whose
    conditional had zero mass.
    """
    m_dense = np.zeros(K, np.int64)
    where = np.full(K, -1, np.int64)
    nz = np.empty(K, np.int64)
    cand = np.empty(K, np.int64)
    cum = np.empty(K)
    for d in range(doc_lo, doc_hi):
        n_nz = 0
        for t in range(m_ptr[d], m_ptr[d + 1]):
            k = m_idx[t]
            m_dense[k] = m_val[t]
            where[k] = n_nz
            nz[n_nz] = k
            n_nz += 1
        for i in range(doc_ptr[d], doc_ptr[d + 1]):
            old = z[i] - 1
            m_dense[old] -= 1
            if m_dense[old] == 0:
                # swap-remove from the occupied list
                p = where[old]
                n_nz -= 1
                last = nz[n_nz]
                nz[p] = last
                where[last] = p
                where[old] = -1
            new, steps, bnd = draw_topic(tokens[i], m_dense, nz, n_nz, col_ptr, col_topics,
                                         col_phi, a_prob, a_alias, total_a,
                                         uniforms[i, 0], uniforms[i, 1], cand, cum)
            work[i] = steps
            bound[i] = bnd
            if new < 0:
                return i
            if m_dense[new] == 0:
                where[new] = n_nz
                nz[n_nz] = new
                n_nz += 1
            m_dense[new] += 1
            z[i] = new + 1
        occupied = np.sort(nz[:n_nz])
        base = doc_ptr[d]
        for t in range(n_nz):
            k = occupied[t]
            out_idx[base + t] = k
            out_val[base + t] = m_dense[k]
            m_dense[k] = 0
            where[k] = -1
        out_nnz[d] = n_nz
    return -1


def sample_token(stream, v: int, m_d, phi_column, alias_v: AliasTable):
    """Draw the topic (1-based) of one token of word type ``v``.

    ``m_d`` maps topic -> count with the current token already removed;
    ``phi_column`` is a ``(topics, probabilities)`` pair of the nonzero
    entries of column ``v`` with topics ascending.  Returns
    ``(topic, intersection_steps)``.
    """
    topics = np.asarray(phi_column[0], np.int64) - 1
    vals = np.asarray(phi_column[1], np.float64)
    occupied = sorted(k for k, c in dict(m_d).items() if c > 0)
    K = max([*topics.tolist(), *occupied, 0]) + 2
    m_dense = np.zeros(K, np.int64)
    nz = np.zeros(K, np.int64)
    for t, k in enumerate(occupied):
        m_dense[k - 1] = m_d[k]
        nz[t] = k - 1
    col_ptr = np.array([0, topics.size], np.int64)
    total_a = np.array([alias_v.total_weight])
    u0, u1 = stream.random(2)
    new, steps, _ = draw_topic(0, m_dense, nz, len(occupied), col_ptr, topics, vals,
                               np.asarray(alias_v.prob, np.float64),
                               np.asarray(alias_v.alias, np.int64), total_a, u0, u1,
                               np.empty(K, np.int64), np.empty(K))
    if new < 0:
        raise SamplerStateError(f"word type {v}: topic-indicator conditional has zero mass")
    return int(new) + 1, int(steps)


def _document_uniforms(corpus: Corpus, seed: int, iteration: int, keep_streams=False):
    u = np.empty((corpus.N, 2))
    streams = []
    ptr = corpus.doc_ptr
    for d in range(corpus.D):
        gen = stream_for(seed, iteration, UnitKind.DOCUMENT, d)
        u[ptr[d]:ptr[d + 1]] = gen.random((ptr[d + 1] - ptr[d], 2))
        if keep_streams:
            streams.append(gen)
    return u, streams


def _chunks(D: int, parts: int):
    edges = np.linspace(0, D, min(parts, max(D, 1)) + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def sweep_topics(state: ModelState, corpus: Corpus, aliases: WordAliases, uniforms,
                 threads: int = 1) -> None:
    """Resample all of ``z`` in place and refresh ``m``, ``n`` and the work counters."""
    cols = state.phi_cols
    col_topics = cols.indices.astype(np.int64)
    col_phi = cols.data.astype(np.float64)
    m = state.m
    z_before = state.z.copy()
    N = corpus.N
    out_idx = np.zeros(N, np.int64)
    out_val = np.zeros(N, np.int64)
    out_nnz = np.zeros(corpus.D, np.int64)
    work = np.zeros(N, np.int32)
    bound = np.zeros(N, np.int32)
    doc_ptr = corpus.doc_ptr
    tokens = corpus.tokens
    m_ptr, m_idx, m_val = m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.int64)

    def run(span):
        return _sweep(state.k_star, span[0], span[1], doc_ptr, tokens, state.z, uniforms, m_ptr, m_idx, m_val,
                      aliases.col_ptr, col_topics, col_phi, aliases.prob, aliases.alias,
                      aliases.total_a, out_idx, out_val, out_nnz, work, bound)

    for bad in _pool_map(run, _chunks(corpus.D, threads), threads):
        if bad >= 0:
            raise SamplerStateError(
                f"token {bad} (word type {int(tokens[bad])}) has zero mass under every topic: "
                "no topic row of Phi covers this word type")

    # m: gather each document's sorted occupied topics
    indptr = np.zeros(corpus.D + 1, np.int64)
    np.cumsum(out_nnz, out=indptr[1:])
    take = np.repeat(doc_ptr[:-1], out_nnz) + (np.arange(indptr[-1]) - np.repeat(indptr[:-1], out_nnz))
    state.m = sp.csr_array((out_val[take], out_idx[take].astype(np.int32), indptr),
                           shape=(corpus.D, state.k_star))

    # n: merge the per-token deltas in ascending token (hence document) order
    moved = np.flatnonzero(z_before != state.z)
    if moved.size:
        rows = np.concatenate([z_before[moved], state.z[moved]]).astype(np.int64) - 1
        cols_ = np.concatenate([tokens[moved], tokens[moved]])
        delta = np.concatenate([-np.ones(moved.size, np.int64), np.ones(moved.size, np.int64)])
        n = state.n + sp.csr_array((delta, (rows, cols_)), shape=state.n.shape)
        n = sp.csr_array(n)
        n.eliminate_zeros()
        n.sort_indices()
        state.n = n
        np.add.at(state.n_totals, rows, delta)
    state.counters = WorkCounters(work=work, bound=bound, flag_tokens=int(state.n_totals[-1]))


def sample_document(stream, doc, z_d, m_d, phi_cols: sp.csc_array, aliases: WordAliases):
    """Resample one document with its own stream.

    Returns ``(z_d, m_d, n_delta, work)``: the new 1-based indicators, the
    new ``{topic: count}`` map, a ``{(topic, word): change}`` map and the
    total intersection steps.
    """
    doc = np.asarray(doc, np.int32)
    z = np.asarray(z_d, np.int32).copy()
    L = doc.size
    if L == 0:
        return z, {}, {}, 0
    uniforms = stream.random((L, 2))
    occupied = sorted(k for k, c in m_d.items() if c > 0)
    m_ptr = np.array([0, len(occupied)], np.int64)
    m_idx = np.array([k - 1 for k in occupied], np.int64)
    m_val = np.array([m_d[k] for k in occupied], np.int64)
    out_idx = np.zeros(L, np.int64)
    out_val = np.zeros(L, np.int64)
    out_nnz = np.zeros(1, np.int64)
    work = np.zeros(L, np.int32)
    bound = np.zeros(L, np.int32)
    bad = _sweep(phi_cols.shape[0], 0, 1, np.array([0, L], np.int64), doc, z, uniforms, m_ptr, m_idx, m_val,
                 aliases.col_ptr, phi_cols.indices.astype(np.int64),
                 phi_cols.data.astype(np.float64), aliases.prob, aliases.alias, aliases.total_a,
                 out_idx, out_val, out_nnz, work, bound)
    if bad >= 0:
        raise SamplerStateError(f"word type {int(doc[bad])} has zero mass under every topic")
    new_m = {int(out_idx[t]) + 1: int(out_val[t]) for t in range(out_nnz[0])}
    delta: dict = {}
    for old, new, v in zip(np.asarray(z_d).tolist(), z.tolist(), doc.tolist()):
        if old != new:
            delta[(old, v)] = delta.get((old, v), 0) - 1
            delta[(new, v)] = delta.get((new, v), 0) + 1
    return z, new_m, {k: c for k, c in delta.items() if c}, int(work.sum())


# ---------------------------------------------------------------------------
# l: binomial trick over the occupancy table
# ---------------------------------------------------------------------------

def sample_l_topic(stream, psi_k: float, alpha: float, D_k) -> int:
    """l_k = sum_j Binomial(D_kj, theta / (theta + j - 1)) with theta = alpha psi_k.

    ``D_k[j-1]`` is the number of documents holding at least ``j`` tokens of
    the topic.  The j = 1 term has probability one.
    """
    if psi_k < 0:
        raise ValueError(f"psi_k must be nonnegative, got {psi_k!r}")
    D_k = np.asarray(D_k, np.int64)
    if D_k.size == 0:
        return 0
    theta = psi_k * alpha
    j = np.arange(2, D_k.size + 1)
    p = theta / (theta + j - 1.0)
    return int(D_k[0] + draw_binomial(stream, D_k[1:], p).sum())


def sample_l(state: ModelState, alpha: float, seed: int, iteration: int, threads: int = 1) -> np.ndarray:
    """Fresh l for every topic from the current dtable; empty topics get 0."""
    l = np.zeros(state.k_star, np.int64)
    occupied = np.flatnonzero(np.diff(state.dtable.indptr))

    def one(k0):
        stream = stream_for(seed, iteration, UnitKind.L_TOPIC, int(k0) + 1)
        return sample_l_topic(stream, float(state.psi[k0]), alpha,
                              threshold_counts(state.dtable, int(k0) + 1))

    l[occupied] = _pool_map(one, occupied, threads)
    return l


# ---------------------------------------------------------------------------
# psi: stick breaking with the last stick fixed to one
# ---------------------------------------------------------------------------

def psi_stick_parameters(l, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Beta parameters (1 + l_k, gamma + sum_{i>k} l_i) of each stick."""
    l = np.asarray(l, np.float64)
    tail = np.concatenate([np.cumsum(l[::-1])[::-1][1:], [0.0]])
    return 1.0 + l, gamma + tail


def sample_psi(stream, l, gamma: float, k_star: int) -> np.ndarray:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    l = np.asarray(l)
    if l.shape != (k_star,):
        raise ValueError(f"l must have length k_star={k_star}")
    if np.any(l < 0):
        raise ValueError("l must be nonnegative")
    a, b = psi_stick_parameters(l, gamma)
    sticks = np.ones(k_star)
    if k_star > 1:
        sticks[:-1] = draw_beta(stream, a[:-1], b[:-1])
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - sticks[:-1])])
    return sticks * remaining


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def refresh_phi(state: ModelState, corpus: Corpus, config: HdpConfig, iteration: int) -> WordAliases:
    rows = sample_phi_rows(state.n, config.beta, corpus.V, config.seed, iteration, config.threads)
    state.phi, state.phi_cols = assemble_phi(rows, corpus.V)
    return build_word_aliases(state.phi_cols, state.psi, config.alpha)


def gibbs_iteration(state: ModelState, corpus: Corpus, config: HdpConfig, iteration: int,
                    trace: bool = True):
    """One sweep of the sparse sampler; mutates ``state`` and returns ``(state, TraceRecord)``."""
    from .diagnostics import make_trace_record

    if iteration < 1:
        raise ValueError("iterations are numbered from 1; iteration 0 is initialization")
    ms = {}
    t0 = time.perf_counter()
    aliases = refresh_phi(state, corpus, config, iteration)
    t1 = time.perf_counter()
    uniforms, _ = _document_uniforms(corpus, config.seed, iteration)
    sweep_topics(state, corpus, aliases, uniforms, config.threads)
    t2 = time.perf_counter()
    state.dtable = rebuild_dtable(state.m, corpus.max_doc_len)
    state.l = sample_l(state, config.alpha, config.seed, iteration, config.threads)
    t3 = time.perf_counter()
    state.psi = sample_psi(stream_for(config.seed, iteration, UnitKind.PSI, 0),
                           state.l, config.gamma, state.k_star)
    t4 = time.perf_counter()
    ms.update(phi=(t1 - t0) * 1e3, z=(t2 - t1) * 1e3, l=(t3 - t2) * 1e3, psi=(t4 - t3) * 1e3)
    state.counters.phase_ms = ms
    state.iteration = iteration
    record = make_trace_record(state, corpus, config) if trace else None
    return state, record


def run_chain(corpus: Corpus, config: HdpConfig, iterations: int | None = None,
              state: ModelState | None = None, exact: bool = False, callback=None):
    """Initialize (unless ``state`` is given) and run; returns ``(state, records)``.

    ``exact=True`` uses the Dirichlet / explicit-flag reference iteration
    instead of the sparse one.
    """
    from .oracle import gibbs_iteration_exact
    from .state import init_state

    if state is None:
        state = init_state(corpus, config)
    step = gibbs_iteration_exact if exact else gibbs_iteration
    total = config.iterations if iterations is None else iterations
    records = []
    for it in range(state.iteration + 1, state.iteration + total + 1):
        state, rec = step(state, corpus, config, it)
        records.append(rec)
        if callback is not None:
            callback(state, rec)
    return state, records
