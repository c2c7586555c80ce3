"""
Counter-based random streams.

Every random quantity in the package is drawn from a Philox generator whose
key is (seed, path) and whose counter carries (block, purpose). A stream is
therefore a pure function of its coordinates: the noise of step k on path i
does not depend on how many paths run, in which order, or on how many
workers share the work.
"""

from typing import Dict, Optional, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
BLOCK = 128

NOISE = 0
BRIDGE = 1
MCMC = 2
REJECTION = 3
SAMPLER = 4
SEARCH = 5
FEASIBLE = 6


def check_seed(seed) -> int:
    if seed is None:
        raise ValueError("an explicit seed is required")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed {seed} is outside the unsigned 64-bit range")
    return seed


def keyed_generator(seed: int, path: int = 0, block: int = 0,
                    purpose: int = NOISE) -> np.random.Generator:
    """Generator for the stream addressed by (seed, path, block, purpose)."""
    key = np.array([check_seed(seed), int(path) & MASK64], dtype=np.uint64)
    counter = np.array([0, int(block) & MASK64, int(purpose), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def block_normals(seed: int, path: int, block: int, dim: int,
                  purpose: int = NOISE) -> np.ndarray:
    """Standard normals for steps [block·BLOCK, (block+1)·BLOCK) of one path."""
    return keyed_generator(seed, path, block, purpose).standard_normal((BLOCK, dim))


class PathNoise:
    """Standard-normal increments of one path, addressed by step index."""

    def __init__(self, seed: int, path: int, dim: int):
        self.seed = check_seed(seed)
        self.path = int(path)
        self.dim = int(dim)
        self._block = -1
        self._cache: Optional[np.ndarray] = None

    def normals(self, step: int) -> np.ndarray:
        block, offset = divmod(int(step), BLOCK)
        if block != self._block:
            self._cache = block_normals(self.seed, self.path, block, self.dim)
            self._block = block
        return self._cache[offset]

    def bridge(self, step: int) -> np.ndarray:
        """Extra normals used to split step ``step`` into two half steps."""
        block, offset = divmod(int(step), BLOCK)
        return block_normals(self.seed, self.path, block, self.dim, BRIDGE)[offset]


class EnsembleNoise:
    """Per-path streams for a fixed list of path indices, drawn block by block."""

    def __init__(self, seed: int, paths: Sequence[int], dim: int):
        self.seed = check_seed(seed)
        self.paths = [int(p) for p in paths]
        self.dim = int(dim)
        self._block = -1
        self._cache: Optional[np.ndarray] = None
        self._bridges: Dict[int, np.ndarray] = {}

    def normals(self, step: int) -> np.ndarray:
        block, offset = divmod(int(step), BLOCK)
        if block != self._block:
            self._cache = np.stack([block_normals(self.seed, p, block, self.dim)
                                    for p in self.paths], axis=0)
            self._block = block
            self._bridges = {}
        return self._cache[:, offset, :]

    def bridge(self, step: int, rows: np.ndarray) -> np.ndarray:
        block, offset = divmod(int(step), BLOCK)
        out = np.empty((len(rows), self.dim))
        for n, r in enumerate(rows):
            p = self.paths[int(r)]
            if p not in self._bridges:
                self._bridges[p] = block_normals(self.seed, p, block, self.dim, BRIDGE)
            out[n] = self._bridges[p][offset]
        return out
