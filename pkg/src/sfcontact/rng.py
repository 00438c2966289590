"""Counter-based hashing used for seed streams and pair-keyed edge draws.

All helpers work on unsigned 64-bit integers and are compiled with numba so the
same arithmetic is shared by the Python-level API and the compiled loops.
"""

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PAIR = np.uint64(0xD6E8FEB86659FD93)
_MASK64 = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True)
def fmix64(z):
    """SplitMix64 output finalizer on a uint64."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_stream_seed(master, stream_index):
    """Derive an independent 64-bit seed for stream ``stream_index``.

    Applies the SplitMix64 finalizer to ``master + stream_index * 0x9E3779B97F4A7C15``
    (mod 2^64).
    """
    z = (int(master) + int(stream_index) * int(GOLDEN)) & _MASK64
    return int(fmix64(np.uint64(z)))


@numba.njit(cache=True)
def pair_uniform(seed, a, b):
    """Uniform in [0, 1) keyed by ``seed`` and the unordered key pair {a, b}."""
    lo = min(a, b)
    hi = max(a, b)
    h = fmix64(seed ^ fmix64(lo + GOLDEN))
    h = fmix64(h + hi * _PAIR)
    return float(h >> np.uint64(11)) * _INV53


@numba.njit(cache=True)
def key_uniform(seed, a):
    """Uniform in [0, 1) keyed by ``seed`` and a single key."""
    h = fmix64(seed ^ fmix64(a * _PAIR + GOLDEN))
    return float(h >> np.uint64(11)) * _INV53


@numba.njit(cache=True)
def _pair_uniform_many(seed, a, b, out):
    for i in range(a.shape[0]):
        out[i] = pair_uniform(seed, a[i], b[i])


def pair_uniforms(seed, a, b):
    """Vectorized :func:`pair_uniform` over key arrays."""
    a = np.ascontiguousarray(a, dtype=np.uint64)
    b = np.ascontiguousarray(b, dtype=np.uint64)
    out = np.empty(a.shape[0], dtype=np.float64)
    _pair_uniform_many(np.uint64(int(seed) & _MASK64), a, b, out)
    return out


def as_u64(seed):
    """Reduce an arbitrary Python integer seed to a numpy uint64."""
    return np.uint64(int(seed) & _MASK64)
