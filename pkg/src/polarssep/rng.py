"""Deterministic replica-indexed random streams.

The event kernel uses an inline xoshiro256++ generator whose 4-word state is
derived here.  The contract is bit-reproducibility given (seed, replica).
"""

import numpy as np
from numba import njit, uint64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _splitmix_fill(state, z):
    for i in range(state.shape[0]):
        z = uint64(z + uint64(0x9E3779B97F4A7C15))
        x = z
        x = uint64((x ^ (x >> uint64(30))) * uint64(0xBF58476D1CE4E5B9))
        x = uint64((x ^ (x >> uint64(27))) * uint64(0x94D049BB133111EB))
        state[i] = uint64(x ^ (x >> uint64(31)))
    return z


def stream_state(seed: int, replica: int = 0) -> np.ndarray:
    """xoshiro256++ state for one replica; distinct replicas get disjoint streams."""
    mask = (1 << 64) - 1
    mixed = ((seed & mask) * int(_GOLDEN) + (replica & mask) * int(_MIX1) + int(_MIX2)) & mask
    state = np.empty(4, np.uint64)
    _splitmix_fill(state, np.uint64(mixed))
    if not state.any():  # all-zero state is the one forbidden xoshiro seed
        state[0] = _GOLDEN
    return state


def numpy_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Companion numpy generator (initial configurations, test utilities)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))
