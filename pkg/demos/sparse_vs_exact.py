"""
Sparse sampler against the exact reference chain
================================================

The fast sampler replaces Dirichlet topic-word rows by sparse Poisson urn
rows and the per-token table flags by a binomial count.  The reference
chain keeps both exact.  At stationarity the two should agree on the
joint log-likelihood and on the number of active topics.
"""
import numpy as np

from sparsehdp import HdpConfig, run_chain
from sparsehdp.synthetic import mixture_corpus

corpus, _ = mixture_corpus(seed=0)
iterations, burn = 1000, 500

for exact in (False, True):
    lls, active = [], []
    for seed in range(3):
        cfg = HdpConfig(alpha=1.0, beta=0.1, k_star=10, seed=seed)
        _, recs = run_chain(corpus, cfg, iterations=iterations, exact=exact)
        lls += [r.joint_log_likelihood for r in recs[burn:]]
        active += [r.active_topics for r in recs[burn:]]
    name = "exact " if exact else "sparse"
    print("%s  joint LL %.1f +- %.1f   active topics %.2f"
          % (name, np.mean(lls), np.std(lls), np.mean(active)))
