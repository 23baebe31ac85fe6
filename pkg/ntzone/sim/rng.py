"""Per-path random number substreams.

Every path draws its Gaussian increments from its own counter-based Philox
generator keyed on (seed, path index). A path therefore sees the same noise
whatever batch or worker it runs in, and whatever fixed cost or band width is
being compared.
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..types import NDArrayF64

RNG_ALGORITHM = "Philox4x64-10 (numpy Generator, ziggurat normals)"

# steps drawn per call; every path always draws whole chunks
CHUNK_STEPS = 512


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Generator of one path, keyed on the 128-bit word (path_index, seed)."""
    if not 0 <= seed < 2**64 or not 0 <= path_index < 2**64:
        raise ValueError("seed and path index must be 64-bit unsigned integers")
    return np.random.Generator(np.random.Philox(key=(int(path_index) << 64) | int(seed)))


class PathNoise:
    """Standard normal increments for a batch of paths, chunk by chunk."""

    def __init__(self, seed: int, path_indices: Sequence[int], d: int) -> None:
        """Creates an instance of the class.

        Args:
            seed (int): Run seed shared by all paths.
            path_indices (Sequence[int]): Global indices of the batch paths.
            d (int): Number of Brownian motions.
        """
        self.d = d
        self._generators = [path_generator(seed, int(i)) for i in path_indices]

    def next_chunk(self) -> NDArrayF64:
        """Draw the next CHUNK_STEPS increments, shape [B, CHUNK_STEPS, d]."""
        return np.stack(
            [g.standard_normal((CHUNK_STEPS, self.d)) for g in self._generators]
        )
