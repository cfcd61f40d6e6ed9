"""xorshift64* generator.

State update ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` followed by the
output multiply ``x * 0x2545F4914F6CDD1D`` (mod 2**64). Seeds are expanded
with one splitmix64 step so that small or zero seeds give a nonzero state.
Uniform doubles take the top 53 bits of the output. The same integer seed
yields the same stream on every platform.
"""
from __future__ import annotations

import numba as nb
import numpy as np

_MASK = (1 << 64) - 1
_U12 = np.uint64(12)
_U25 = np.uint64(25)
_U27 = np.uint64(27)
_U11 = np.uint64(11)
_MULT = np.uint64(0x2545F4914F6CDD1D)
_INV53 = 1.0 / 9007199254740992.0


def splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z or 0x9E3779B97F4A7C15


def new_state(seed: int) -> np.ndarray:
    """One-element uint64 state array for the jitted helpers."""
    return np.array([splitmix64(int(seed) & _MASK)], dtype=np.uint64)


@nb.njit(cache=True)
def next_u64(state):
    x = state[0]
    x ^= x >> _U12
    x ^= x << _U25
    x ^= x >> _U27
    state[0] = x
    return x * _MULT


@nb.njit(cache=True)
def uniform(state):
    return (next_u64(state) >> _U11) * _INV53


@nb.njit(cache=True)
def randint(state, n):
    """Integer in [0, n)."""
    k = np.int64(uniform(state) * n)
    return k if k < n else n - 1


@nb.njit(cache=True)
def shuffle_inplace(state, a):
    for i in range(a.shape[0] - 1, 0, -1):
        j = randint(state, i + 1)
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp


@nb.njit(cache=True)
def randint_array(state, n, size):
    out = np.empty(size, dtype=np.int64)
    for i in range(size):
        out[i] = randint(state, n)
    return out


class Xorshift64Star:
    """Python-side handle around a jitted generator state."""

    def __init__(self, seed: int):
        self.state = new_state(seed)

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def random(self) -> float:
        return float(uniform(self.state))

    def integers(self, n: int, size: int) -> np.ndarray:
        return randint_array(self.state, n, size)

    def permutation(self, n: int) -> np.ndarray:
        a = np.arange(n, dtype=np.int64)
        shuffle_inplace(self.state, a)
        return a

    def spawn_seed(self) -> int:
        return self.next_u64()
