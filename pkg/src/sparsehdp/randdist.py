"""Reproducible random streams and the distribution primitives used by the samplers.

Every random quantity in a Gibbs iteration is drawn from a stream derived
from a :class:`StreamKey`.  The stream is a pure function of the key, so a
run is bit-reproducible regardless of how work units are scheduled across
threads.  Streams are Philox counter-based generators: the seed is the
Philox key and the (iteration, unit kind, unit index) triple occupies the
high words of the 256-bit counter, leaving the low word for the stream's
own draws.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "UnitKind",
    "StreamKey",
    "derive_stream",
    "draw_beta",
    "draw_poisson",
    "draw_binomial",
    "AliasTable",
    "build_alias",
    "draw_alias",
]

_MASK64 = (1 << 64) - 1


class UnitKind(enum.IntEnum):
    PHI_ROW = 1
    DOCUMENT = 2
    L_TOPIC = 3
    PSI = 4
    INIT = 5


@dataclass(frozen=True)
class StreamKey:
    seed: int
    iteration: int
    unit_kind: UnitKind
    unit_index: int

    def __post_init__(self):
        if self.iteration < 0 or self.unit_index < 0:
            raise ValueError("iteration and unit_index must be nonnegative")


def derive_stream(key: StreamKey) -> np.random.Generator:
    """Return the generator owned by ``key``; identical keys give identical streams."""
    counter = [0, key.unit_index, key.iteration, int(key.unit_kind)]
    bitgen = np.random.Philox(key=key.seed & _MASK64, counter=counter)
    return np.random.Generator(bitgen)


def stream_for(seed: int, iteration: int, kind: UnitKind, index: int = 0) -> np.random.Generator:
    return derive_stream(StreamKey(seed, iteration, kind, index))


# ---------------------------------------------------------------------------
# distribution primitives
# ---------------------------------------------------------------------------

def draw_beta(stream: np.random.Generator, a, b, size=None):
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise ValueError("Beta parameters must be positive")
    return stream.beta(a, b, size=size)


def draw_poisson(stream: np.random.Generator, rate, size=None):
    """Poisson variates; numpy switches from inversion to PTRS rejection at rate 10."""
    r = np.asarray(rate, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise ValueError(f"Poisson rate must be finite and nonnegative, got {rate!r}")
    return stream.poisson(rate, size=size)


def draw_binomial(stream: np.random.Generator, trials, p, size=None):
    t = np.asarray(trials)
    q = np.asarray(p, dtype=float)
    if np.any(t < 0):
        raise ValueError("number of trials must be nonnegative")
    if np.any(~((q >= 0) & (q <= 1))):
        raise ValueError(f"success probability must lie in [0, 1], got {p!r}")
    return stream.binomial(trials, p, size=size)


# ---------------------------------------------------------------------------
# Walker / Vose alias tables
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def vose_fill(weights, prob, alias, small, large):
    """Fill ``prob``/``alias`` in place from nonnegative ``weights``; return the total.

    ``small`` and ``large`` are integer scratch buffers of the same length.
    Entries are local positions in ``weights``.  An all-zero input leaves the
    table untouched and returns 0.
    """
    k = weights.shape[0]
    total = 0.0
    for i in range(k):
        total += weights[i]
    if total <= 0.0:
        return 0.0
    ns = 0
    nl = 0
    for i in range(k):
        prob[i] = weights[i] * k / total
        alias[i] = i
        if prob[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        alias[s] = g
        prob[g] = (prob[g] + prob[s]) - 1.0
        if prob[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    # leftovers differ from 1 only by rounding
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0
    return total


@numba.njit(cache=True, nogil=True, inline="always")
def alias_pick(prob, alias, offset, size, u):
    """Local index drawn from the table slice ``[offset, offset+size)`` with one uniform."""
    x = u * size
    j = int(x)
    if j >= size:
        j = size - 1
    if x - j < prob[offset + j]:
        return j
    return alias[offset + j]


@dataclass
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray
    total_weight: float
    support: np.ndarray

    @property
    def size(self) -> int:
        return int(self.prob.shape[0])

    @property
    def empty(self) -> bool:
        return self.total_weight <= 0.0

    def probabilities(self) -> np.ndarray:
        """Per-entry sampling probabilities implied by the internal tables."""
        k = self.size
        out = self.prob.astype(float).copy()
        np.add.at(out, self.alias, 1.0 - self.prob)
        return out / k


def build_alias(weights, support=None) -> AliasTable:
    """O(K) alias construction over (optionally sparse) ``support`` indices."""
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    if np.any(w < 0) or np.any(~np.isfinite(w)):
        raise ValueError("alias weights must be finite and nonnegative")
    k = w.shape[0]
    if support is None:
        support = np.arange(k, dtype=np.int64)
    else:
        support = np.asarray(support, dtype=np.int64)
        if support.shape != w.shape:
            raise ValueError("support and weights must have equal length")
    prob = np.ones(k, dtype=np.float64)
    alias = np.arange(k, dtype=np.int64)
    total = 0.0
    if k:
        total = vose_fill(w, prob, alias, np.empty(k, np.int64), np.empty(k, np.int64))
    return AliasTable(prob=prob, alias=alias, total_weight=float(total), support=support)


def draw_alias(stream: np.random.Generator, table: AliasTable, size=None):
    if table.empty:
        raise ValueError("cannot draw from an empty alias table")
    k = table.size
    if size is None:
        j = alias_pick(table.prob, table.alias, 0, k, stream.random())
        return int(table.support[j])
    x = stream.random(size) * k
    j = np.minimum(x.astype(np.int64), k - 1)
    keep = (x - j) < table.prob[j]
    return table.support[np.where(keep, j, table.alias[j])]


def log_gamma_variates(stream: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    """log of Gamma(shape, 1) draws, stable for shapes far below one."""
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    boosted = np.where(small, shape + 1.0, shape)
    g = np.log(stream.gamma(boosted))
    if np.any(small):
        u = stream.random(shape.shape)
        g = np.where(small, g + np.log(u) / np.where(small, shape, 1.0), g)
    return g

