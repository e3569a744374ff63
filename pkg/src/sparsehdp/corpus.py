"""Corpus ingestion: UCI bag-of-words, plain text, and Mallet-style preprocessing."""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CorpusFormatError",
    "Vocabulary",
    "Corpus",
    "PreprocessSpec",
    "parse_uci_bow",
    "write_uci_bow",
    "parse_token_lines",
    "preprocess",
    "corpus_stats",
    "load_stoplist",
    "default_stoplist",
]


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {t: i for i, t in enumerate(self.terms)}
        if len(index) != len(self.terms):
            dup = [t for t, c in Counter(self.terms).items() if c > 1]
            raise CorpusFormatError(f"duplicate vocabulary terms: {dup[:5]}")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, i: int) -> str:
        return self.terms[i]


class Corpus:
    """Immutable tokenized documents stored as one flat id array plus offsets.

    Document ``d`` is ``tokens[doc_ptr[d]:doc_ptr[d + 1]]``.
    """

    def __init__(self, docs: Iterable[Sequence[int]], V: int, vocab: Vocabulary | None = None):
        docs = [np.asarray(d, dtype=np.int32).reshape(-1) for d in docs]
        lengths = np.array([len(d) for d in docs], dtype=np.int64)
        doc_ptr = np.zeros(len(docs) + 1, dtype=np.int64)
        np.cumsum(lengths, out=doc_ptr[1:])
        tokens = np.concatenate(docs) if docs else np.zeros(0, np.int32)
        if vocab is not None and len(vocab) != V:
            raise CorpusFormatError(f"vocabulary has {len(vocab)} terms, expected V={V}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
            raise CorpusFormatError("token id outside [0, V)")
        tokens.setflags(write=False)
        doc_ptr.setflags(write=False)
        self.tokens = tokens
        self.doc_ptr = doc_ptr
        self.V = int(V)
        self.vocab = vocab
        assert self.N == int(lengths.sum())

    @property
    def D(self) -> int:
        return len(self.doc_ptr) - 1

    @property
    def N(self) -> int:
        return int(self.doc_ptr[-1])

    @property
    def doc_lengths(self) -> np.ndarray:
        return np.diff(self.doc_ptr)

    @property
    def max_doc_len(self) -> int:
        return int(self.doc_lengths.max()) if self.D else 0

    @property
    def doc_index(self) -> np.ndarray:
        """Document of each token, d(i)."""
        return np.repeat(np.arange(self.D, dtype=np.int64), self.doc_lengths)

    def doc(self, d: int) -> np.ndarray:
        return self.tokens[self.doc_ptr[d]:self.doc_ptr[d + 1]]

    @property
    def docs(self) -> list[np.ndarray]:
        return [self.doc(d) for d in range(self.D)]

    def to_terms(self) -> list[list[str]]:
        if self.vocab is None:
            raise ValueError("corpus has no vocabulary")
        terms = self.vocab.terms
        return [[terms[t] for t in self.doc(d)] for d in range(self.D)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.V == other.V and np.array_equal(self.doc_ptr, other.doc_ptr)
                and np.array_equal(self.tokens, other.tokens) and self.vocab == other.vocab)

    def __repr__(self) -> str:
        return f"Corpus(V={self.V}, D={self.D}, N={self.N})"


@dataclass(frozen=True)
class PreprocessSpec:
    stoplist: frozenset = frozenset()
    min_doc_tokens: int = 10
    rare_word_limit: int = 10

    def __post_init__(self):
        if self.min_doc_tokens < 0 or self.rare_word_limit < 0:
            raise ValueError("preprocessing thresholds must be nonnegative")
        object.__setattr__(self, "stoplist", frozenset(self.stoplist))


# ---------------------------------------------------------------------------
# UCI bag-of-words
# ---------------------------------------------------------------------------

def _as_text(stream) -> str:
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _header_int(lines: list[str], i: int, name: str) -> int:
    try:
        value = int(lines[i].strip())
    except (IndexError, ValueError):
        raise CorpusFormatError(f"malformed docword header: missing or non-integer {name}") from None
    if value < 0:
        raise CorpusFormatError(f"malformed docword header: negative {name}")
    return value


def parse_uci_bow(docword_stream, vocab_stream) -> Corpus:
    """Read a UCI ``docword`` / ``vocab`` pair.

    Each ``docId wordId count`` triple (1-based ids) expands to ``count``
    contiguous tokens; within a document tokens appear in ascending word id.
    """
    lines = _as_text(docword_stream).splitlines()
    D = _header_int(lines, 0, "D")
    V = _header_int(lines, 1, "V")
    nnz = _header_int(lines, 2, "NNZ")
    terms = [t.strip() for t in _as_text(vocab_stream).splitlines()]
    if len(terms) != V:
        raise CorpusFormatError(f"vocab has {len(terms)} lines but header declares V={V}")

    body = [ln for ln in lines[3:] if ln.strip()]
    if len(body) != nnz:
        raise CorpusFormatError(f"header declares NNZ={nnz} but found {len(body)} entries")
    if nnz:
        try:
            triples = np.loadtxt(io.StringIO("\n".join(body)), dtype=np.int64, ndmin=2)
        except ValueError as exc:
            raise CorpusFormatError(f"malformed docword entry: {exc}") from None
        if triples.shape[1] != 3:
            raise CorpusFormatError("docword entries must have three fields")
    else:
        triples = np.zeros((0, 3), np.int64)
    doc_id, word_id, count = triples[:, 0] - 1, triples[:, 1] - 1, triples[:, 2]
    if np.any((doc_id < 0) | (doc_id >= D)):
        raise CorpusFormatError("docId out of range")
    if np.any((word_id < 0) | (word_id >= V)):
        raise CorpusFormatError("wordId out of range")
    if np.any(count < 1):
        raise CorpusFormatError("count must be at least 1")

    order = np.lexsort((word_id, doc_id))
    doc_id, word_id, count = doc_id[order], word_id[order], count[order]
    tokens = np.repeat(word_id, count).astype(np.int32)
    lengths = np.bincount(doc_id, weights=count, minlength=D).astype(np.int64)
    bounds = np.cumsum(lengths)[:-1] if D else []
    docs = np.split(tokens, bounds) if D else []
    return Corpus(docs, V, Vocabulary(tuple(terms)))


def write_uci_bow(corpus: Corpus) -> tuple[str, str]:
    """Serialize to (docword text, vocab text); inverse of :func:`parse_uci_bow` up to token order."""
    rows = []
    for d in range(corpus.D):
        words, counts = np.unique(corpus.doc(d), return_counts=True)
        rows.extend(f"{d + 1} {w + 1} {c}" for w, c in zip(words, counts))
    docword = "\n".join([str(corpus.D), str(corpus.V), str(len(rows)), *rows]) + "\n"
    terms = corpus.vocab.terms if corpus.vocab is not None else [f"w{v}" for v in range(corpus.V)]
    return docword, "\n".join(terms) + ("\n" if terms else "")


# ---------------------------------------------------------------------------
# plain text and preprocessing
# ---------------------------------------------------------------------------

def _normalize(raw: str) -> str:
    tok = raw.lower()
    start, end = 0, len(tok)
    while start < end and not tok[start].isalnum():
        start += 1
    while end > start and not tok[end - 1].isalnum():
        end -= 1
    return tok[start:end]


def parse_token_lines(text_stream) -> list[list[str]]:
    """One document per line; lowercase, whitespace split, punctuation stripped from token edges."""
    text = _as_text(text_stream)
    if not text:
        return []
    docs = []
    for line in text.splitlines():
        docs.append([t for t in map(_normalize, line.split()) if t])
    return docs


def preprocess(raw_docs: Sequence[Sequence[str]], spec: PreprocessSpec) -> Corpus:
    """Stoplist, then rare-word pruning, then minimum document size.

    The rare-word and document-size filters are repeated until neither
    removes anything, so applying the same spec to the output is a no-op.
    """
    docs = [[t for t in doc if t not in spec.stoplist] for doc in raw_docs]
    while True:
        freq = Counter(t for doc in docs for t in doc)
        rare = {t for t, c in freq.items() if c < spec.rare_word_limit}
        if rare:
            docs = [[t for t in doc if t not in rare] for doc in docs]
        kept = [doc for doc in docs if len(doc) >= spec.min_doc_tokens]
        dropped = len(kept) != len(docs)
        docs = kept
        if not rare and not dropped:
            break

    terms: dict[str, int] = {}
    ids = []
    for doc in docs:
        ids.append([terms.setdefault(t, len(terms)) for t in doc])
    return Corpus(ids, len(terms), Vocabulary(tuple(terms)))


def corpus_stats(corpus: Corpus) -> tuple[int, int, int, int]:
    """(V, D, N, max document length)."""
    return corpus.V, corpus.D, corpus.N, corpus.max_doc_len


def load_stoplist(path) -> frozenset:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip() for w in fh if w.strip() and not w.startswith("#"))


def default_stoplist() -> frozenset:
    """English stoplist shipped with the package (see ``data/README-stoplist``)."""
    text = resources.files("sparsehdp").joinpath("data/stoplist_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))
