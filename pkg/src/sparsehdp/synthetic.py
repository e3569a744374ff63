"""Small synthetic corpora drawn from a finite topic mixture, for tests and demos."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Vocabulary


def mixture_corpus(D: int = 50, V: int = 30, doc_len: int = 40, topics: int = 4,
                   block_mass: float = 0.9, doc_concentration: float = 0.5,
                   seed: int = 0) -> tuple[Corpus, np.ndarray]:
    """Corpus from a ``topics``-component mixture with block-structured word distributions.

    Topic ``k`` spends ``block_mass`` of its probability uniformly on the
    ``k``-th contiguous block of the vocabulary and the rest uniformly on
    all words.  Returns the corpus and the generating topic of each token
    (1-based).
    """
    rng = np.random.default_rng(seed)
    blocks = np.array_split(np.arange(V), topics)
    phi = np.full((topics, V), (1.0 - block_mass) / V)
    for k, block in enumerate(blocks):
        phi[k, block] += block_mass / block.size
    docs, truth = [], []
    for _ in range(D):
        theta = rng.dirichlet(np.full(topics, doc_concentration))
        z = rng.choice(topics, size=doc_len, p=theta)
        docs.append(np.array([rng.choice(V, p=phi[k]) for k in z], np.int32))
        truth.append(z + 1)
    vocab = Vocabulary(tuple(f"w{v:02d}" for v in range(V)))
    return Corpus(docs, V, vocab), np.concatenate(truth)
