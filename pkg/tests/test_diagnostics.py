import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsehdp.corpus import Corpus, Vocabulary
from sparsehdp.diagnostics import (
    CheckpointError,
    TraceRecord,
    active_topic_count,
    format_topic_summary,
    joint_log_likelihood,
    load_checkpoint,
    quantile_topic_summary,
    save_checkpoint,
    write_trace,
)
from sparsehdp.sampler import run_chain
from sparsehdp.state import HdpConfig, init_state, rebuild_counts, rebuild_dtable, validate_state


def with_assignment(corpus, config, z, psi=None):
    state = init_state(corpus, config)
    state.z = np.asarray(z, np.int32)
    state.m, state.n = rebuild_counts(state.z, corpus, config.k_star)
    state.n_totals = np.asarray(state.n.sum(axis=1)).ravel().astype(np.int64)
    state.dtable = rebuild_dtable(state.m, corpus.max_doc_len)
    if psi is not None:
        state.psi = np.asarray(psi, float)
    return state


def sequential_log_likelihood(corpus, z, psi, alpha, beta):
    """Chain-rule evaluation token by token: two independent Polya urns."""
    K, V = len(psi), corpus.V
    n = np.zeros((K, V))
    total = 0.0
    for d in range(corpus.D):
        m = np.zeros(K)
        lo = corpus.doc_ptr[d]
        for i, v in enumerate(corpus.doc(d)):
            k = z[lo + i] - 1
            total += np.log((alpha * psi[k] + m[k]) / (alpha + i))
            total += np.log((beta + n[k, v]) / (V * beta + n[k].sum()))
            m[k] += 1
            n[k, v] += 1
    return total


def test_joint_ll_single_token():
    corpus = Corpus([[2]], 5)
    cfg = HdpConfig(k_star=3, alpha=0.7, beta=0.3)
    psi = np.array([0.2, 0.5, 0.3])
    state = with_assignment(corpus, cfg, [2], psi)
    assert joint_log_likelihood(state, corpus, cfg) == pytest.approx(np.log(0.5) + np.log(1 / 5), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 4), min_size=1, max_size=12), min_size=1, max_size=8),
       st.data(), st.floats(0.05, 5), st.floats(0.01, 2))
def test_joint_ll_matches_sequential(docs, data, alpha, beta):
    corpus = Corpus(docs, 5)
    K = 4
    cfg = HdpConfig(k_star=K, alpha=alpha, beta=beta)
    z = data.draw(st.lists(st.integers(1, K), min_size=corpus.N, max_size=corpus.N))
    psi = np.random.default_rng(len(z)).dirichlet(np.ones(K))
    state = with_assignment(corpus, cfg, z, psi)
    ref = sequential_log_likelihood(corpus, z, psi, alpha, beta)
    assert joint_log_likelihood(state, corpus, cfg) == pytest.approx(ref, abs=1e-9)


def test_joint_ll_invariant_to_topic_relabelling_with_psi():
    corpus = Corpus([[0, 1, 1], [2, 0]], 3)
    cfg = HdpConfig(k_star=3)
    psi = np.array([0.6, 0.3, 0.1])
    a = with_assignment(corpus, cfg, [1, 2, 2, 1, 3], psi)
    b = with_assignment(corpus, cfg, [2, 1, 1, 2, 3], psi[[1, 0, 2]])
    assert joint_log_likelihood(a, corpus, cfg) == pytest.approx(joint_log_likelihood(b, corpus, cfg), abs=1e-12)


def test_joint_ll_rejects_inconsistent_counts():
    corpus = Corpus([[0, 1]], 2)
    cfg = HdpConfig(k_star=2)
    state = init_state(corpus, cfg)
    state.n_totals = state.n_totals + 1
    with pytest.raises(ValueError):
        joint_log_likelihood(state, corpus, cfg)


def test_active_topic_count():
    corpus = Corpus([[0, 1], [1]], 2)
    cfg = HdpConfig(k_star=4)
    assert active_topic_count(init_state(corpus, cfg)) == 1
    assert active_topic_count(with_assignment(corpus, cfg, [2, 2, 2])) == 1
    assert active_topic_count(with_assignment(corpus, cfg, [1, 3, 3])) == 2


def summary_state(totals):
    """A state whose topic k holds totals[k-1] tokens of word k-1."""
    K = len(totals)
    docs = [[k] * c for k, c in enumerate(totals) if c]
    corpus = Corpus(docs, K)
    z = np.concatenate([np.full(c, k + 1) for k, c in enumerate(totals) if c])
    return with_assignment(corpus, HdpConfig(k_star=K), z), corpus


def test_quantile_summary_hand_ranking():
    # sizes 2000, 1950, ..., 1050: topic k ranks at position k-1
    totals = [2000 - 50 * i for i in range(20)]
    state, _ = summary_state(totals)
    out = quantile_topic_summary(state)
    picked = {}
    for s in out:
        picked.setdefault(s.quantile, []).append(s.topic)
    assert picked == {
        1.0: [1, 2, 3, 4, 5],
        0.75: [4, 5, 6, 7, 8],
        0.5: [8, 9, 10, 11, 12],
        0.25: [13, 14, 15, 16, 17],
        0.05: [16, 17, 18, 19, 20],
    }
    assert out[0].top_words == [(0, 2000)]


def test_quantile_summary_exactly_five():
    state, _ = summary_state([300, 100, 500, 200, 400])
    out = quantile_topic_summary(state)
    groups = {}
    for s in out:
        groups.setdefault(s.quantile, []).append(s.topic)
    assert len(groups) == 5
    assert all(sorted(g) == [1, 2, 3, 4, 5] for g in groups.values())


def test_quantile_summary_min_tokens_and_vocab():
    state, corpus = summary_state([99, 150, 20])
    assert quantile_topic_summary(summary_state([99, 5])[0]) == []
    vocab = Vocabulary(("alpha", "beta", "gamma"))
    out = quantile_topic_summary(state, vocab, quantiles=(1.0,))
    assert [(s.topic, s.top_words) for s in out] == [(2, [("beta", 150)])]
    text = format_topic_summary(out)
    assert text.splitlines()[1] == "100%\t2\t150\tbeta:150"


def record(i, ll=-1.5):
    return TraceRecord(i, ll, 3, 0, {1: 5}, 0.5, dict(phi=1.0, z=2.0, l=0.5, psi=0.25))


def test_write_trace_shapes(tmp_path):
    p = tmp_path / "t.csv"
    write_trace([], p)
    assert p.read_text().count("\n") == 1
    write_trace([record(1)], p)
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "1,-1.500000,3,0,0.500000,1.000,2.000,0.500,0.250"
    write_trace([record(1)], p, include_timings=False)
    assert p.read_text().splitlines() == ["iteration,joint_ll,active_topics,flag_tokens,max_work_ratio",
                                          "1,-1.500000,3,0,0.500000"]


def test_write_trace_replay(tmp_path, synthetic_corpus):
    cfg = HdpConfig(k_star=8, seed=2, iterations=5)
    for name in ("a", "b"):
        _, recs = run_chain(synthetic_corpus, cfg)
        write_trace(recs, tmp_path / name, include_timings=False)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


@pytest.fixture
def trained(synthetic_corpus):
    cfg = HdpConfig(k_star=10, seed=8, alpha=1.0, beta=0.1, iterations=10)
    state, _ = run_chain(synthetic_corpus, cfg)
    return state, cfg, synthetic_corpus


def test_checkpoint_round_trip(trained, tmp_path):
    state, cfg, corpus = trained
    path = tmp_path / "ck.json"
    save_checkpoint(state, cfg, path, corpus)
    loaded, cfg2 = load_checkpoint(path, corpus)
    assert cfg2 == cfg
    assert loaded.iteration == state.iteration
    assert np.array_equal(loaded.z, state.z)
    assert (loaded.m != state.m).nnz == 0 and (loaded.n != state.n).nnz == 0
    assert np.array_equal(loaded.psi, state.psi)
    assert np.array_equal(loaded.l, state.l)
    assert validate_state(loaded, corpus) == []


def test_checkpoint_resume_matches_uninterrupted(trained, tmp_path):
    state, cfg, corpus = trained
    path = tmp_path / "ck.json"
    save_checkpoint(state, cfg, path, corpus)
    loaded, _ = load_checkpoint(path, corpus)
    resumed, r1 = run_chain(corpus, cfg, iterations=10, state=loaded)
    straight, r2 = run_chain(corpus, cfg, iterations=20)
    assert np.array_equal(resumed.z, straight.z)
    assert np.array_equal(resumed.psi, straight.psi)
    assert [r.joint_log_likelihood for r in r1] == [r.joint_log_likelihood for r in r2[10:]]


def test_checkpoint_corruption_detected(trained, tmp_path):
    state, cfg, corpus = trained
    path = tmp_path / "ck.json"
    save_checkpoint(state, cfg, path, corpus)
    blob = path.read_text()
    path.write_text(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path, corpus)

    envelope = json.loads(blob)
    envelope["payload"]["iteration"] += 1
    path.write_text(json.dumps(envelope))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path, corpus)

    envelope = json.loads(blob)
    envelope["version"] = 99
    path.write_text(json.dumps(envelope))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path, corpus)


def test_checkpoint_rejects_other_corpus(trained, tmp_path):
    state, cfg, corpus = trained
    path = tmp_path / "ck.json"
    save_checkpoint(state, cfg, path, corpus)
    docs = [d.tolist() for d in corpus.docs]
    docs[0][0] = (docs[0][0] + 1) % corpus.V
    with pytest.raises(CheckpointError, match="different corpus"):
        load_checkpoint(path, Corpus(docs, corpus.V))
