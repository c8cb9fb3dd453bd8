"""Deterministic, stream-addressable random number generation.

Every stochastic component draws from an ``RngStream`` keyed by a
``(seed, stream)`` pair of 64-bit integers, backed by the counter-based
Philox generator.  Stream 0 is reserved for covariate-matrix generation;
replication ``r`` owns stream ``r``.  Streams with distinct ids are
statistically independent, so replications never share state and can run
in any order (or in parallel) without changing a single draw.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError

_U64_MAX = 2**64


class RngStream:
    """A self-contained random stream identified by ``(seed, stream)``.

    The same pair always reproduces the same draw sequence, and a vector
    draw of length k consumes exactly the same underlying state as k
    successive scalar draws.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        if not isinstance(seed, (int, np.integer)) or not 0 <= seed < _U64_MAX:
            raise InvalidParameterError(
                f"seed must be an integer in [0, 2**64), got {seed!r}"
            )
        if not isinstance(stream, (int, np.integer)) or not 0 <= stream < _U64_MAX:
            raise InvalidParameterError(
                f"stream must be an integer in [0, 2**64), got {stream!r}"
            )
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        )

    def random(self, size=None):
        """Uniform variates on [0, 1)."""
        return self._gen.random(size)

    def integers(self, low, high, size=None):
        """Integers drawn uniformly from ``low`` (inclusive) to ``high`` (exclusive)."""
        return self._gen.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def make_stream(seed: int, stream: int = 0) -> RngStream:
    """Convenience factory mirroring the ``RngStream`` constructor."""
    return RngStream(seed, stream)
