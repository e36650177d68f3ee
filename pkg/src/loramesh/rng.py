"""Counter-based deterministic random streams.

Every stochastic draw in the simulator is a pure function of
(scenario seed, stream id, entity keys, draw index).  Draws therefore do
not depend on event ordering or on which other entities exist: adding a
node to a scenario does not perturb the draws seen by the other nodes,
which keeps A/B scenario comparisons meaningful.

The mixing function is the splitmix64 finalizer.  Its constants are fixed
here so that independent implementations can reproduce every schedule and
sample exactly:

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Keys are folded in one at a time with a golden-ratio increment
(0x9E3779B97F4A7C15) between mixing rounds.
"""

from __future__ import annotations

import math
from statistics import NormalDist

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_STD_NORMAL = NormalDist()

# Stream identifiers.  Keep values stable: they are part of the
# reproducibility contract of exported runs.
STREAM_SHADOWING = 1
STREAM_FADING_STATIC = 2
STREAM_FADING_BLOCK = 3
STREAM_PACKET = 4
STREAM_TRAFFIC = 5
STREAM_JOIN = 6
STREAM_INTERFERER = 7
STREAM_MAC = 8
STREAM_MISC = 9


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit lane."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * _MIX1) & _MASK64
    z ^= z >> 27
    z = (z * _MIX2) & _MASK64
    z ^= z >> 31
    return z


def hash_u64(*keys: int) -> int:
    """Fold integer keys into one well-mixed 64-bit value."""
    h = _GOLDEN
    for k in keys:
        h = mix64((h + _GOLDEN) ^ (k & _MASK64))
    return h


class KeyedStream:
    """Sequential draws from one keyed stream.

    The i-th draw of stream (seed, *key) is hash_u64(seed, *key, i);
    instances only cache the folded base key and a counter.
    """

    __slots__ = ("_base", "_count")

    def __init__(self, *keys: int) -> None:
        self._base = hash_u64(*keys)
        self._count = 0

    def u64(self) -> int:
        self._count += 1
        return mix64((self._base + self._count * _GOLDEN) & _MASK64)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa; never returns hi
        u = (self.u64() >> 11) * (2.0 ** -53)
        return lo + u * (hi - lo)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        u = (self.u64() >> 11) * (2.0 ** -53)
        # keep inverse CDF away from the poles
        u = min(max(u, 1e-16), 1.0 - 1e-16)
        return mu + sigma * _STD_NORMAL.inv_cdf(u)

    def exponential(self, mean: float) -> float:
        u = (self.u64() >> 11) * (2.0 ** -53)
        return -mean * math.log1p(-u)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is < n/2**64."""
        return self.u64() % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]


def keyed_uniform(*keys: int) -> float:
    """One-shot uniform in [0, 1) for a fully specified key tuple."""
    return (hash_u64(*keys) >> 11) * (2.0 ** -53)


def keyed_normal(*keys: int, mu: float = 0.0, sigma: float = 1.0) -> float:
    """One-shot normal draw for a fully specified key tuple."""
    u = keyed_uniform(*keys)
    u = min(max(u, 1e-16), 1.0 - 1e-16)
    return mu + sigma * _STD_NORMAL.inv_cdf(u)
