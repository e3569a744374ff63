import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsehdp.corpus import Corpus
from sparsehdp.state import (
    HdpConfig,
    init_state,
    rebuild_counts,
    rebuild_dtable,
    threshold_counts,
    validate_state,
)


def as_dicts(mat):
    """CSR rows as {row: {col+1: value}} with empty rows dropped."""
    mat = sp.csr_array(mat)
    out = {}
    for r in range(mat.shape[0]):
        lo, hi = mat.indptr[r], mat.indptr[r + 1]
        if hi > lo:
            out[r] = {int(c) + 1: int(v) for c, v in zip(mat.indices[lo:hi], mat.data[lo:hi])}
    return out


def test_config_rejects_bad_values():
    for bad in (dict(k_star=0), dict(alpha=0.0), dict(beta=-1.0), dict(gamma=np.nan),
                dict(threads=0), dict(iterations=0)):
        with pytest.raises(ValueError):
            HdpConfig(**bad)


def test_init_two_docs_of_three_tokens():
    corpus = Corpus([[0, 1, 2], [2, 1, 1]], 3)
    state = init_state(corpus, HdpConfig(k_star=5, seed=3))
    assert as_dicts(state.m) == {0: {1: 3}, 1: {1: 3}}
    assert state.n_totals.tolist() == [6, 0, 0, 0, 0]
    assert state.active_topics().tolist() == [1]
    assert state.l.tolist() == [2, 0, 0, 0, 0]
    assert validate_state(state, corpus) == []


def test_init_empty_corpus_rejected():
    with pytest.raises(ValueError):
        init_state(Corpus([], 3), HdpConfig(k_star=3))
    with pytest.raises(ValueError):
        init_state(Corpus([[], []], 3), HdpConfig(k_star=3))


def test_init_is_deterministic(synthetic_corpus):
    cfg = HdpConfig(k_star=20, seed=11)
    a = init_state(synthetic_corpus, cfg)
    b = init_state(synthetic_corpus, cfg)
    assert np.array_equal(a.psi, b.psi)
    assert (a.phi != b.phi).nnz == 0
    assert validate_state(a, synthetic_corpus) == []


def test_rebuild_counts_hand_example():
    corpus = Corpus([[0, 0], [2]], 3)
    m, n = rebuild_counts(np.array([1, 1, 2]), corpus, 3)
    assert as_dicts(m) == {0: {1: 2}, 1: {2: 1}}
    assert n.toarray().tolist() == [[2, 0, 0], [0, 0, 1], [0, 0, 0]]


def test_rebuild_counts_single_topic():
    corpus = Corpus([[0, 1], [2, 2, 1]], 3)
    m, _ = rebuild_counts(np.full(5, 2), corpus, 4)
    assert np.diff(m.indptr).tolist() == [1, 1]


def test_rebuild_counts_out_of_range():
    corpus = Corpus([[0, 1]], 2)
    with pytest.raises(ValueError):
        rebuild_counts(np.array([1, 4]), corpus, 3)
    with pytest.raises(ValueError):
        rebuild_counts(np.array([0, 1]), corpus, 3)


def dense_m(rows, k_star=2):
    m = np.zeros((len(rows), k_star), np.int64)
    for d, row in enumerate(rows):
        for k, c in row.items():
            m[d, k - 1] = c
    return sp.csr_array(m)


def test_rebuild_dtable_examples():
    dt = rebuild_dtable(dense_m([{1: 3}, {1: 3}]))
    assert as_dicts(dt) == {0: {3: 2}}
    dt = rebuild_dtable(dense_m([{1: 1}, {1: 2}]))
    assert as_dicts(dt) == {0: {1: 1, 2: 1}}
    assert rebuild_dtable(sp.csr_array((0, 4), dtype=np.int64)).nnz == 0


def test_threshold_counts_examples():
    dt = rebuild_dtable(dense_m([{1: 1}, {1: 2}]))
    assert threshold_counts(dt, 1).tolist() == [2, 1]
    assert threshold_counts(dt, 2).tolist() == []
    dt = rebuild_dtable(dense_m([{2: 3}] * 5))
    assert threshold_counts(dt, 2).tolist() == [5, 5, 5]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=10), min_size=1, max_size=6),
       st.data())
def test_count_invariants_hold_for_any_assignment(docs, data):
    corpus = Corpus(docs, 4)
    K = 5
    z = np.array(data.draw(st.lists(st.integers(1, K), min_size=corpus.N, max_size=corpus.N)))
    m, n = rebuild_counts(z, corpus, K)
    assert np.array_equal(np.asarray(m.sum(axis=1)).ravel(), corpus.doc_lengths)
    assert np.array_equal(np.asarray(m.sum(axis=0)).ravel(), np.asarray(n.sum(axis=1)).ravel())
    dt = rebuild_dtable(m, corpus.max_doc_len)
    for k in range(1, K + 1):
        D = threshold_counts(dt, k)
        col = m.toarray()[:, k - 1]
        # D_{k,j} = #docs with at least j tokens, and sum_j D_{k,j} = topic total
        assert D.tolist() == [int((col >= j).sum()) for j in range(1, D.size + 1)]
        assert int(D.sum()) == int(col.sum())


@pytest.fixture
def fresh(two_doc_corpus):
    return init_state(two_doc_corpus, HdpConfig(k_star=4, seed=1)), two_doc_corpus


def test_validate_fresh_state_is_clean(fresh):
    state, corpus = fresh
    assert validate_state(state, corpus) == []


def test_validate_reports_corrupted_m(fresh):
    state, corpus = fresh
    m = state.m.toarray()
    m[0, 0] -= 1
    m[0, 1] += 1
    state.m = sp.csr_array(m)
    issues = validate_state(state, corpus)
    assert any(i.startswith("m: counts disagree") for i in issues)
    assert not any(i.startswith(("n:", "psi:", "phi:", "l:")) for i in issues)


def test_validate_reports_unnormalized_psi(fresh):
    state, corpus = fresh
    state.psi = state.psi * 2
    issues = validate_state(state, corpus)
    assert len(issues) == 1 and issues[0].startswith("psi:")


def test_validate_reports_bad_l_and_z(fresh):
    state, corpus = fresh
    state.l = state.l.copy()
    state.l[2] = 1
    assert any("nonzero for empty topic" in i for i in validate_state(state, corpus))
    state.z = state.z.copy()
    state.z[0] = 9
    assert validate_state(state, corpus)[0].startswith("z:")


def test_copy_is_independent(fresh):
    state, _ = fresh
    other = state.copy()
    other.z[0] = 2
    other.psi[0] = 0.0
    assert state.z[0] == 1 and state.psi[0] > 0
