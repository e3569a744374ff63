"""
Table counts without seating customers
======================================

The number of tables l occupied by m customers of a Chinese restaurant
process with concentration theta has the Antoniak law.  The sampler draws
it as a sum of binomials over occupancy levels instead of seating each
customer.  Here both are tabulated side by side.
"""
import numpy as np

from sparsehdp.oracle import antoniak_pmf, l_from_flags, sample_b_flags
from sparsehdp.randdist import UnitKind, stream_for
from sparsehdp.sampler import sample_l_topic

m, theta, draws = 8, 2.0, 50_000
stream = stream_for(0, 0, UnitKind.L_TOPIC, 1)

# one document holding m tokens of the topic: D_k = [1, 1, ..., 1]
binomial = np.array([sample_l_topic(stream, theta, 1.0, np.ones(m, int)) for _ in range(draws)])

# the same count through explicit urn flags: a token is fresh with
# probability theta / (theta + number of earlier tokens of its topic)
z = np.ones(m, int)
psi = np.array([1.0])
flags = np.array([l_from_flags(z, sample_b_flags(stream, z, psi, theta), 1)[0]
                  for _ in range(draws)])

pmf = antoniak_pmf(m, theta)
print(" l   exact    binomial  urn flags")
for t in range(1, m + 1):
    print("%2d  %.4f   %.4f    %.4f" % (t, pmf[t - 1], np.mean(binomial == t), np.mean(flags == t)))
