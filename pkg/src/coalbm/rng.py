"""Reproducible random streams for parallel Monte Carlo.

Streams are counter-based (Philox).  A stream is identified by
``(master_seed, stream_id)``; the same pair always reproduces the same
draw sequence, and distinct stream ids give statistically independent
streams.  Replicates own one stream each and never share it.

Two access patterns are supported:

* sequential draws from the stream's own generator (fast path), and
* keyed draws addressed by ``(step, domain)`` counters, which yield the
  same values no matter which subset of a system is being simulated.
  This is what makes common-random-number coupling between a full run
  and a subsystem run possible.
"""

from __future__ import annotations

import numpy as np

# Counter layout: word0 free-runs inside a domain, word1 = step block,
# word2 = sub-channel (e.g. gap id), word3 = domain tag.
_DOMAIN_STEP = 1
_DOMAIN_EVENT = 2

# Keyed step randomness is produced in blocks of this many steps to
# amortize bit-generator construction.
_STEP_BLOCK = 64


class RngStream:
    """One replicate's random stream.

    Parameters
    ----------
    master_seed : int
        Seed shared by a whole experiment.
    stream_id : int
        Replicate index; distinct ids give independent streams.
    """

    __slots__ = ("master_seed", "stream_id", "_key", "_gen", "_block_cache")

    def __init__(self, master_seed: int, stream_id: int = 0):
        if master_seed < 0 or stream_id < 0:
            raise ValueError("master_seed and stream_id must be nonnegative")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        self._key = seq.generate_state(2, np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=self._key))
        self._block_cache: dict = {}

    # -- sequential access ------------------------------------------------

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, scale: float = 1.0, size=None):
        return self._gen.normal(0.0, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def poisson(self, mean, size=None):
        return self._gen.poisson(mean, size)

    def snapshot(self) -> "RngStream":
        """Copy of this stream frozen at the current position."""
        dup = RngStream(self.master_seed, self.stream_id)
        dup._gen.bit_generator.state = self._gen.bit_generator.state
        return dup

    # -- keyed access (structure-independent) -----------------------------

    def _keyed(self, word1: int, word2: int, word3: int) -> np.random.Generator:
        bg = np.random.Philox(key=self._key, counter=[0, word1, word2, word3])
        return np.random.Generator(bg)

    def step_block(self, step: int, n: int):
        """Per-step randomness for step ``step`` of an ``n``-particle system.

        Returns ``(normals, uniforms)``, each of shape ``(n,)``.  The value
        in slot ``p`` depends only on (stream, step, p, n-block layout), so
        a run restricted to a subset of particles sees the same numbers.
        """
        block = step // _STEP_BLOCK
        row = step % _STEP_BLOCK
        cached = self._block_cache.get("step")
        if cached is None or cached[0] != block or cached[1] != n:
            gen = self._keyed(block, 0, _DOMAIN_STEP)
            normals = gen.standard_normal((_STEP_BLOCK, n))
            uniforms = gen.random((_STEP_BLOCK, n))
            cached = (block, n, normals, uniforms)
            self._block_cache["step"] = cached
        return cached[2][row], cached[3][row]

    def event_stream(self, step: int, channel: int) -> np.random.Generator:
        """Fresh generator for refinement/cascade work at one step and gap.

        ``channel`` is a structural identity (a gap id), so coupled runs
        that examine the same gap at the same step consume identical
        randomness.
        """
        return self._keyed(step, channel + 1, _DOMAIN_EVENT)


def replicate_streams(master_seed: int, count: int) -> list[RngStream]:
    """Streams for replicates 0..count-1."""
    return [RngStream(master_seed, r) for r in range(count)]
