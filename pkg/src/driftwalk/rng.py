"""Counter-based random streams.

Every trajectory owns a Philox stream keyed by ``(seed, index)``, so a
trajectory's randomness does not depend on how trajectories are batched or
which worker simulates them.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, index=0):
    """Return the generator for trajectory ``index`` under ``seed``."""
    seed = int(seed)
    index = int(index)
    if seed < 0 or index < 0:
        raise ValueError("seed and stream index must be non-negative")
    key = ((index & _MASK64) << 64) | (seed & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


class UniformStreams:
    """Uniform draws for a contiguous block of trajectory streams.

    ``next(steps)`` returns an array of shape ``(batch, steps, width)``
    holding the next ``steps * width`` doubles of each stream, so drawing in
    chunks of any size reproduces the same sequence per trajectory.
    """

    def __init__(self, seed, indices, width=1):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.width = int(width)
        self._gens = [stream(seed, i) for i in self.indices]

    @classmethod
    def from_generators(cls, gens, indices):
        """Wrap generators that have already been advanced (e.g. after drawing start values)."""
        out = cls.__new__(cls)
        out.indices = np.asarray(indices, dtype=np.int64)
        out.width = 1
        out._gens = list(gens)
        return out

    def __len__(self):
        return len(self._gens)

    def next(self, steps=1):
        out = np.empty((len(self._gens), steps, self.width))
        for row, gen in enumerate(self._gens):
            out[row] = gen.random((steps, self.width))
        return out

    def subset(self, mask):
        """Keep only the streams selected by a boolean mask."""
        keep = np.flatnonzero(mask)
        sub = UniformStreams.from_generators([self._gens[k] for k in keep], self.indices[keep])
        sub.width = self.width
        return sub


def uniform_block(seed, n_streams, count, start=0):
    """Draw ``count`` uniforms from each of ``n_streams`` consecutive streams."""
    out = np.empty((n_streams, count))
    for row in range(n_streams):
        out[row] = stream(seed, start + row).random(count)
    return out
