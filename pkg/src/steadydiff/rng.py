"""Random streams.

Every stochastic routine draws from numpy's counter-based Philox bit generator.
A stream is addressed by ``(seed, *key)`` through ``SeedSequence.spawn_key`` so
that replicate blocks get independent, reproducible streams no matter in which
order (or on which thread) they are consumed.
"""

import numpy as np

# replicates are grouped in blocks of this size; block b uses stream (seed, tag, b)
REPLICATE_BLOCK = 64


def generator(seed, *key):
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class BlockNormals:
    """Standard normal increments for ``reps`` replicates, served step-chunk by step-chunk.

    Replicate ``r`` always receives the numbers of block ``r // REPLICATE_BLOCK``,
    so results do not depend on how many replicates are simulated together.
    """

    def __init__(self, seed, reps, dim, tag=0):
        self.reps = reps
        self.dim = dim
        nblocks = -(-reps // REPLICATE_BLOCK)
        self._gens = [generator(seed, tag, b) for b in range(nblocks)]
        self._sizes = [min(REPLICATE_BLOCK, reps - b * REPLICATE_BLOCK) for b in range(nblocks)]

    def draw(self, steps):
        # full blocks are always drawn so a replicate's numbers never depend on ``reps``
        parts = [g.standard_normal((steps, REPLICATE_BLOCK, self.dim))[:, :size]
                 for g, size in zip(self._gens, self._sizes)]
        return np.concatenate(parts, axis=1)
