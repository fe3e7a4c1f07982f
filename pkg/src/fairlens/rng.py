"""Fixed, portable pseudo-random generator for reproducible fixtures.

All synthetic fixtures are drawn from xoshiro256** seeded through splitmix64,
so a port in any language that implements the same two algorithms (and the
derived-stream and sampling recipes below) reproduces every fixture bit for
bit. ``random.Random`` / numpy generators are deliberately not used here: their
algorithms are implementation details of their ecosystems.

Sampling recipes (documented because ports must match them exactly):

* ``random()``   -> 53-bit mantissa: ``(next_u64() >> 11) * 2**-53``
* ``randbelow(n)`` -> ``next_u64() % n`` (modulo bias is negligible for the
  small ``n`` used here and keeps ports trivial)
* ``geometric(p)`` -> inversion on one uniform, support {1, 2, ...}
* ``poisson(lam)`` -> Knuth's product-of-uniforms method, split into chunks of
  rate 30 for large ``lam``
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (output, next_state)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return z, state


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a substream seed from a base seed and integer keys.

    Used to give each patient / instance / explanation its own independent
    stream so work can be sharded without changing results.
    """
    h = seed & _MASK64
    for k in keys:
        h, _ = _splitmix64(h ^ (k & _MASK64))
    return h


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 state expansion."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        state = seed & _MASK64
        out = []
        for _ in range(4):
            value, state = _splitmix64(state)
            out.append(value)
        if not any(out):  # all-zero state is the one forbidden state
            out[0] = 1
        self._s0, self._s1, self._s2, self._s3 = out

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        x = (s1 * 5) & _MASK64
        result = (((x << 7) | (x >> 57)) & _MASK64) * 9 & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, high index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def geometric(self, p: float) -> int:
        """Geometric on {1, 2, ...} with success probability p (mean 1/p)."""
        if not 0.0 < p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        u = self.random()
        if p == 1.0 or u <= 0.0:
            return 1
        return 1 + int(math.log1p(-u) / math.log1p(-p))

    def poisson(self, lam: float) -> int:
        if lam < 0:
            raise ValueError("lam must be non-negative")
        total = 0
        while lam > 30.0:  # Poisson(a+b) = Poisson(a) + Poisson(b)
            total += self._poisson_knuth(30.0)
            lam -= 30.0
        return total + self._poisson_knuth(lam)

    def _poisson_knuth(self, lam: float) -> int:
        limit = math.exp(-lam)
        k = 0
        prod = self.random()
        while prod > limit:
            k += 1
            prod *= self.random()
        return k

    def categorical(self, cumulative: list[float]) -> int:
        """Index drawn from a distribution given by cumulative weights.

        ``cumulative`` is non-decreasing with final entry ~1.0; returned index
        is the first position whose cumulative weight exceeds the uniform draw.
        """
        u = self.random()
        lo, hi = 0, len(cumulative) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cumulative[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        return lo
