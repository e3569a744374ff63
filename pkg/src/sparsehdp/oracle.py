"""Slow exact reference samplers used to check the sparse sampler's distributions.

Nothing here is tuned for speed; every routine follows the textbook
definition as directly as possible so that it can serve as an independent
check on :mod:`sparsehdp.sampler`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, logsumexp

from .corpus import Corpus
from .randdist import UnitKind, log_gamma_variates, stream_for
from .sampler import (
    SparsePhiRow,
    _document_uniforms,
    assemble_phi,
    build_word_aliases,
    sample_psi,
    sweep_topics,
)
from .state import HdpConfig, ModelState, rebuild_dtable

__all__ = [
    "draw_dirichlet_row",
    "sample_b_flags",
    "l_from_flags",
    "antoniak_pmf",
    "stirling_first_log",
    "GemMoments",
    "gem_posterior_importance",
    "gibbs_iteration_exact",
]


def draw_dirichlet_row(stream, n_k, beta: float, V: int) -> np.ndarray:
    """Dense Dirichlet(beta + n_k) draw from normalized Gamma variates (computed in log space)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    conc = np.full(V, float(beta))
    if isinstance(n_k, dict):
        for v, c in n_k.items():
            conc[v] += c
    else:
        idx, cnt = n_k
        conc[np.asarray(idx, np.int64)] += np.asarray(cnt, float)
    logs = log_gamma_variates(stream, conc)
    row = np.exp(logs - logsumexp(logs))
    return row / row.sum()


def _previous_occurrences(z_d: np.ndarray) -> np.ndarray:
    """For each position i, the number of j < i with z_j == z_i."""
    z_d = np.asarray(z_d)
    order = np.argsort(z_d, kind="stable")
    sz = z_d[order]
    starts = np.flatnonzero(np.r_[True, sz[1:] != sz[:-1]])
    group_start = np.repeat(starts, np.diff(np.r_[starts, sz.size]))
    out = np.empty(z_d.size, np.int64)
    out[order] = np.arange(z_d.size) - group_start
    return out


def sample_b_flags(stream, z_d, psi, alpha: float) -> np.ndarray:
    """Urn flags: b_i = 1 w.p. alpha psi_{z_i} / (alpha psi_{z_i} + #{j < i : z_j = z_i}).

    A token whose topic has not yet appeared in the document is always a
    fresh draw from Psi.
    """
    z_d = np.asarray(z_d, np.int64)
    if z_d.size == 0:
        return np.zeros(0, bool)
    prior = alpha * np.asarray(psi, float)[z_d - 1]
    seen = _previous_occurrences(z_d)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(seen == 0, 1.0, prior / (prior + seen))
    return stream.random(z_d.size) < p


def l_from_flags(z, flags, k_star: int) -> np.ndarray:
    """Count flagged tokens per topic; ``z`` and ``flags`` are flat or per-document sequences."""
    per_document = isinstance(z, (list, tuple)) and len(z) > 0 and np.ndim(z[0]) > 0
    if per_document:
        z = np.concatenate([np.asarray(zd, np.int64) for zd in z])
        flags = np.concatenate([np.asarray(b, bool) for b in flags])
    z = np.asarray(z, np.int64)
    flags = np.asarray(flags, bool)
    return np.bincount(z[flags] - 1, minlength=k_star).astype(np.int64)


def stirling_first_log(m: int) -> np.ndarray:
    """log |s(m, t)| for t = 0..m via |s(n,t)| = |s(n-1,t-1)| + (n-1)|s(n-1,t)|."""
    row = np.array([0.0])
    for n in range(1, m + 1):
        nxt = np.full(n + 1, -np.inf)
        nxt[1:] = row
        if n > 1:
            nxt[:-1] = np.logaddexp(nxt[:-1], np.log(n - 1) + row)
        row = nxt
    return row


def antoniak_pmf(m: int, theta: float) -> np.ndarray:
    """P(L = t) for t = 1..m (element t-1): tables occupied by m CRP customers at concentration theta."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m!r}")
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    t = np.arange(1, m + 1)
    logp = stirling_first_log(m)[1:] + t * np.log(theta) + gammaln(theta) - gammaln(theta + m)
    return np.exp(logp)


@dataclass
class GemMoments:
    mean: np.ndarray
    second: np.ndarray
    se_mean: np.ndarray
    se_second: np.ndarray
    ess: float

    @property
    def conclusive(self) -> bool:
        return self.ess >= 100


def gem_posterior_importance(stream, l, gamma: float, k_star: int, samples: int = 10**6,
                             chunk: int = 10**5) -> GemMoments:
    """Self-normalized importance estimates of E[psi_k] and E[psi_k^2] under the posterior.

    Proposals are truncated GEM(gamma) prior draws (last stick one) weighted
    by the categorical likelihood prod_k psi_k^{l_k}.  Standard errors use
    the weighted variance over the effective sample size.
    """
    if samples < 10**5:
        raise ValueError("importance estimates need at least 1e5 prior draws")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    l = np.asarray(l, float)
    logw_parts, psi_parts = [], []
    remaining = samples
    while remaining:
        size = min(chunk, remaining)
        remaining -= size
        sticks = np.ones((size, k_star))
        if k_star > 1:
            sticks[:, :-1] = stream.beta(1.0, gamma, size=(size, k_star - 1))
        rest = np.cumprod(np.hstack([np.ones((size, 1)), 1.0 - sticks[:, :-1]]), axis=1)
        psi = sticks * rest
        with np.errstate(divide="ignore"):
            logw = np.where(l > 0, l * np.log(psi), 0.0).sum(axis=1)
        logw_parts.append(logw)
        psi_parts.append(psi)
    logw = np.concatenate(logw_parts)
    psi = np.vstack(psi_parts)
    w = np.exp(logw - logsumexp(logw))
    ess = float(1.0 / np.sum(w ** 2))
    mean = w @ psi
    second = w @ psi ** 2
    var1 = w @ (psi - mean) ** 2
    var2 = w @ (psi ** 2 - second) ** 2
    return GemMoments(mean, second, np.sqrt(var1 / ess), np.sqrt(var2 / ess), ess)


def gibbs_iteration_exact(state: ModelState, corpus: Corpus, config: HdpConfig, iteration: int,
                          trace: bool = True):
    """Reference iteration: Dirichlet Phi, the same z step, explicit urn flags, then Psi."""
    from .diagnostics import make_trace_record

    t0 = time.perf_counter()
    n = state.n
    rows = []
    for k in range(state.k_star):
        lo, hi = n.indptr[k], n.indptr[k + 1]
        dense = draw_dirichlet_row(stream_for(config.seed, iteration, UnitKind.PHI_ROW, k + 1),
                                   (n.indices[lo:hi], n.data[lo:hi]), config.beta, corpus.V)
        nz = np.flatnonzero(dense > 0)
        rows.append(SparsePhiRow(nz.astype(np.int32), np.zeros(nz.size, np.int64), dense[nz], 0))
    state.phi, state.phi_cols = assemble_phi(rows, corpus.V)
    aliases = build_word_aliases(state.phi_cols, state.psi, config.alpha)
    t1 = time.perf_counter()

    uniforms, streams = _document_uniforms(corpus, config.seed, iteration, keep_streams=True)
    sweep_topics(state, corpus, aliases, uniforms, config.threads)
    t2 = time.perf_counter()

    # the flags continue each document's own stream after its z uniforms
    flags = np.zeros(corpus.N, bool)
    ptr = corpus.doc_ptr
    for d, gen in enumerate(streams):
        flags[ptr[d]:ptr[d + 1]] = sample_b_flags(gen, state.z[ptr[d]:ptr[d + 1]], state.psi,
                                                  config.alpha)
    state.l = l_from_flags(state.z, flags, state.k_star)
    state.dtable = rebuild_dtable(state.m, corpus.max_doc_len)
    t3 = time.perf_counter()
    state.psi = sample_psi(stream_for(config.seed, iteration, UnitKind.PSI, 0),
                           state.l, config.gamma, state.k_star)
    t4 = time.perf_counter()
    state.counters.phase_ms = dict(phi=(t1 - t0) * 1e3, z=(t2 - t1) * 1e3,
                                   l=(t3 - t2) * 1e3, psi=(t4 - t3) * 1e3)
    state.iteration = iteration
    return state, (make_trace_record(state, corpus, config) if trace else None)
