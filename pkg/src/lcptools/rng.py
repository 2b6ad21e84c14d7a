"""Counter-based random number generation.

Parallel Monte Carlo reproducibility rests on one rule: the random stream
used for a cell is a pure function of (seed, cell_index), independent of
which worker draws it or in what order. We get this from numpy's Philox4x64
counter-based bit generator keyed per cell.

The exact scheme, fixed because bit-exactness claims depend on it:

* the per-cell key is ``mix64(seed, cell_index)`` (a splitmix64-style
  avalanche of the seed xor a golden-ratio multiple of the index);
* uniforms are built from the top 53 bits of each Philox draw as
  ``(k + 0.5) * 2**-53``, strictly inside (0, 1);
* standard normals come from the inverse normal CDF (``scipy.special.ndtri``)
  applied to those uniforms, not Box-Muller or ziggurat.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(a: int, b: int) -> int:
    """Mix two 64-bit integers into one well-distributed 64-bit key.

    splitmix64 finalizer applied to ``a XOR (b * golden ratio)``. Small
    changes in either input flip about half of the output bits, so adjacent
    cell indices get unrelated streams.
    """
    x = (a ^ ((b * _GOLDEN) & _MASK64)) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def keyed_generator(key: int) -> np.random.Generator:
    """Philox4x64 generator whose stream depends only on ``key``."""
    return np.random.Generator(np.random.Philox(key=key & _MASK64))


def uniforms(key: int, shape: tuple[int, ...]) -> np.ndarray:
    """Open-interval (0, 1) uniforms from the keyed Philox stream."""
    gen = keyed_generator(key)
    bits = gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
    return (bits.astype(np.float64) + 0.5) * (2.0 ** -53)


def standard_normals(key: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal variates via inverse CDF of the keyed uniforms."""
    return ndtri(uniforms(key, shape))
