"""Deterministic, labeled random streams.

Every consumer of randomness asks for a stream by (scenario seed, purpose
label).  The derivation is pinned so logs replay bit-for-bit anywhere:

1. the label is hashed with FNV-1a (64-bit, offset 14695981039346656037,
   prime 1099511628211) over its UTF-8 bytes;
2. the scenario seed (mod 2^64) is XORed with the label hash;
3. two rounds of the SplitMix64 output function expand that word into a
   128-bit key;
4. the key seeds a PCG64 bit generator (numpy's implementation of the
   O'Neill PCG XSL-RR 128/64 algorithm).

Distinct labels therefore give independent substreams of one scenario
seed, and the mapping involves no interpreter-salted hashing.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def stream_key(seed: int, label: str) -> int:
    """128-bit PCG64 seed for one (seed, label) pair."""
    state = (seed & _MASK64) ^ fnv1a64(label.encode("utf-8"))
    state, lo = splitmix64(state)
    _, hi = splitmix64(state)
    return (hi << 64) | lo


def random_stream(seed: int, label: str) -> np.random.Generator:
    """Independent deterministic generator for one purpose label."""
    return np.random.Generator(np.random.PCG64(stream_key(seed, label)))
