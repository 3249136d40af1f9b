"""Reproducible random streams.

Every trial owns an independent xoshiro256** stream whose 256-bit state is
expanded with splitmix64 from ``(key, trial_index)``.  The 64-bit ``key`` is
derived once per (master seed, stream tag) through :class:`numpy.random.SeedSequence`,
so results depend only on the seed and the trial index, never on thread count
or scheduling order.
"""
from __future__ import annotations

import zlib

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INDEX_MULT = np.uint64(0xD1B54A32D192ED03)


def stream_key(seed: int, tag: str = "") -> np.uint64:
    """64-bit stream key for a master seed and a textual stream tag."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode())])
    return ss.generate_state(1, dtype=np.uint64)[0]


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _splitmix(x):
    x = x + _GOLDEN
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return x, z ^ (z >> np.uint64(31))


@njit(cache=True)
def seed_state(key, index, state):
    """Fill ``state`` (uint64[4]) for trial ``index`` of stream ``key``."""
    x = np.uint64(key) + (np.uint64(index) + np.uint64(1)) * _INDEX_MULT
    for i in range(4):
        x, z = _splitmix(x)
        state[i] = z
    if state[0] == 0 and state[1] == 0 and state[2] == 0 and state[3] == 0:
        state[0] = _GOLDEN


@njit(cache=True)
def next_u64(state):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return result


@njit(cache=True)
def next_direction(state):
    """Uniform integer in {0, 1, 2, 3} from the top two bits."""
    return np.int64(next_u64(state) >> np.uint64(62))


@njit(cache=True)
def next_bit(state):
    return np.int64(next_u64(state) >> np.uint64(63))


@njit(cache=True)
def next_uniform(state):
    """Uniform double in [0, 1) with 53 random bits."""
    return np.float64(next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


class Stream:
    """A single seeded stream usable from plain Python code."""

    def __init__(self, seed: int = 0, index: int = 0, tag: str = ""):
        self.seed = seed
        self.index = index
        self.tag = tag
        self.state = np.zeros(4, dtype=np.uint64)
        seed_state(stream_key(seed, tag), index, self.state)

    def direction(self) -> int:
        return int(next_direction(self.state))

    def uniform(self) -> float:
        return float(next_uniform(self.state))

    def copy(self) -> "Stream":
        other = Stream.__new__(Stream)
        other.seed, other.index, other.tag = self.seed, self.index, self.tag
        other.state = self.state.copy()
        return other
