"""
Training on a synthetic mixture
===============================

Draw a small corpus from a 4-topic mixture, start every token in topic 1
and let the sampler discover how many topics the data supports.
"""
import numpy as np

from sparsehdp import HdpConfig, run_chain
from sparsehdp.diagnostics import format_topic_summary, quantile_topic_summary
from sparsehdp.synthetic import mixture_corpus

corpus, truth = mixture_corpus(D=50, V=30, doc_len=40, topics=4, seed=0)
print("documents: %d, vocabulary: %d, tokens: %d" % (corpus.D, corpus.V, corpus.N))

###############################################################################
# Run one chain.  K* = 10 is the truncation level; the last topic acts as a
# flag that should stay empty if the truncation is loose enough.

config = HdpConfig(alpha=1.0, beta=0.1, gamma=1.0, k_star=10, seed=1)
state, records = run_chain(corpus, config, iterations=400)

for rec in records[::50]:
    print("iter %4d  joint LL %10.2f  active %d  flag tokens %d"
          % (rec.iteration, rec.joint_log_likelihood, rec.active_topics, rec.flag_topic_tokens))

###############################################################################
# Compare the learned assignment with the generating one.  Each discovered
# topic should be dominated by one true topic.

table = np.zeros((config.k_star, 4), int)
np.add.at(table, (state.z - 1, truth - 1), 1)
print("\nrows: learned topic, columns: true topic")
for k in state.active_topics():
    print("topic %2d  %s" % (k, table[k - 1]))

###############################################################################
# Quantile summary of topics holding at least 100 tokens.

print()
print(format_topic_summary(quantile_topic_summary(state, corpus.vocab, top_words=6)))
