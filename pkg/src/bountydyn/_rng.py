"""Counter-based random streams built on the splitmix64 finalizer.

Every draw in the simulation side of the package is a pure function of
(seed, stream index), so any collection of trajectories or programs can be
generated in any order, in parallel, or lazily, with identical results.
The same arithmetic is implemented three times — python ints here, numpy
vectors here, and scalars inside the numba kernels — and the variants are
held together by tests.

Streams are laid out as:

    substream_seed(seed, i) = mix64(mix64(seed) + (i + 1) * GAMMA)
    draw(t, k)              = to_unit(mix64(mix64(t) + (k + 1) * GAMMA))

where GAMMA is the 64-bit golden-ratio increment. ``to_unit`` maps the top
53 bits into (0, 1]; draws are never exactly 0, which keeps log transforms
finite.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(GAMMA)
_U_C1 = np.uint64(_C1)
_U_C2 = np.uint64(_C2)
_TWO_NEG53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 output function on a 64-bit integer."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _C1) & MASK64
    x ^= x >> 27
    x = (x * _C2) & MASK64
    x ^= x >> 31
    return x


def substream_seed(seed: int, index: int) -> int:
    """Derive the seed of substream ``index`` from a parent seed."""
    return mix64((mix64(seed) + ((index + 1) * GAMMA & MASK64)) & MASK64)


def to_unit(x: int) -> float:
    """Map a 64-bit integer to the unit interval (0, 1]."""
    return ((x >> 11) + 1) * _TWO_NEG53


def stream_unit(t: int, k: int) -> float:
    """Draw ``k``-th uniform of the stream seeded by ``t`` (k >= 0)."""
    return to_unit(mix64((mix64(t) + ((k + 1) * GAMMA & MASK64)) & MASK64))


def mix64_np(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _U_C1
    x ^= x >> np.uint64(27)
    x *= _U_C2
    x ^= x >> np.uint64(31)
    return x


def substream_seeds_np(seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized substream_seed for an int64/uint64 index array."""
    base = np.uint64(mix64(seed))
    idx = indices.astype(np.uint64) + np.uint64(1)
    return mix64_np(base + idx * _U_GAMMA)


def stream_units_np(t: int, ks: np.ndarray) -> np.ndarray:
    """Vectorized stream_unit: uniforms at indices ``ks`` of stream ``t``."""
    bits = substream_seeds_np(t, ks)
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53


def stream_normals_np(t: int, n: int, offset: int = 0) -> np.ndarray:
    """``n`` standard normals from stream ``t`` via Box-Muller.

    Normal ``j`` (0-based) consumes the uniforms at stream indices
    (offset + 2j, offset + 2j + 1), so disjoint index ranges stay disjoint.
    """
    j = np.arange(n, dtype=np.uint64)
    ua = stream_units_np(t, (np.uint64(offset) + j * np.uint64(2)))
    ub = stream_units_np(t, (np.uint64(offset) + j * np.uint64(2) + np.uint64(1)))
    return np.sqrt(-2.0 * np.log(ua)) * np.cos(2.0 * np.pi * ub)
