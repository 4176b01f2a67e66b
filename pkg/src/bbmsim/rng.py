"""Deterministic stream derivation and buffered draws.

Replicate i of an experiment with master seed m uses the PCG64 stream seeded
with mix64(m, i).  mix64 is a splitmix64-style finalizer; it is documented
here (and in the README) so that an independent implementation can reproduce
the exact streams:

    z = (m + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64
    z = ((z ^ (z >> 30)) * 0xBF58476D1E3561E5) mod 2^64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    mix64(m, i) = z ^ (z >> 31)

Sub-streams of a replicate (e.g. the two populations of a paired run) are
derived by chaining: mix64(mix64(m, i), j).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1E3561E5
_MIX2 = 0x94D049BB133111EB


def mix64(seed: int, index: int) -> int:
    """Derive a 64-bit stream seed for stream `index` from `seed`."""
    z = (int(seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, index: int) -> int:
    """Seed of the stream used by replicate `index`."""
    return mix64(master_seed, index)


class StreamRng:
    """Buffered wrapper around numpy's PCG64 generator.

    Scalar draws are served from typed buffers that are refilled in growing
    blocks; the draw sequence is a pure function of the seed and the sequence
    of requests, so results are bit-reproducible within a build.
    """

    _FIRST_BLOCK = 64
    _MAX_BLOCK = 65536

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.generator = np.random.Generator(np.random.PCG64(self.seed))
        self._norm = np.empty(0)
        self._norm_i = 0
        self._norm_block = self._FIRST_BLOCK
        self._exp = np.empty(0)
        self._exp_i = 0
        self._exp_block = self._FIRST_BLOCK

    def normal(self) -> float:
        if self._norm_i >= self._norm.shape[0]:
            self._norm = self.generator.standard_normal(self._norm_block)
            self._norm_i = 0
            self._norm_block = min(self._norm_block * 4, self._MAX_BLOCK)
        v = self._norm[self._norm_i]
        self._norm_i += 1
        return v

    def normals(self, n: int) -> np.ndarray:
        # Large requests bypass the buffer; small ones drain it first.
        if n >= 256:
            return self.generator.standard_normal(n)
        out = np.empty(n)
        have = self._norm.shape[0] - self._norm_i
        take = min(have, n)
        if take:
            out[:take] = self._norm[self._norm_i:self._norm_i + take]
            self._norm_i += take
        if take < n:
            self._norm = self.generator.standard_normal(self._norm_block)
            self._norm_i = n - take
            self._norm_block = min(self._norm_block * 4, self._MAX_BLOCK)
            out[take:] = self._norm[:n - take]
        return out

    def exponential(self) -> float:
        if self._exp_i >= self._exp.shape[0]:
            self._exp = self.generator.standard_exponential(self._exp_block)
            self._exp_i = 0
            self._exp_block = min(self._exp_block * 4, self._MAX_BLOCK)
        v = self._exp[self._exp_i]
        self._exp_i += 1
        return v

    def uniform(self, n: int) -> np.ndarray:
        return self.generator.random(n)
