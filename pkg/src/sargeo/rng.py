"""Counter-based deterministic random streams.

Every random draw in the simulator is a pure function of
(seed, stream tag, item index, counter). There is no generator state, so
any subset of items can be sampled in any order, on any number of
workers, and produce identical values. The mixing function is the
splitmix64 finalizer; uniforms map the top 53 bits into the open
interval (0, 1); Gaussians go through the inverse normal CDF.

The numpy implementations operate on uint64 arrays (numpy scalar uint64
arithmetic emits overflow warnings; array arithmetic wraps silently,
which is what we want here). `sargeo.kernels` compiles the same mixing
chain with numba for use inside the trace kernel; the two must stay in
lockstep.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# Stream tags. Keeping them distinct guarantees the Monte Carlo direction
# stream never collides with the reflection-jitter stream.
STREAM_MC_DIRECTION = 0x11
STREAM_REFLECT_JITTER = 0x22

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TO_UNIT = 2.0 ** -53


def mix64_int(z: int) -> int:
    """splitmix64 finalizer on Python ints (masked to 64 bits)."""
    z = (z + _GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays."""
    z = z + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def stream_prefix(seed: int, stream: int) -> int:
    """Fold (seed, stream) into the 64-bit prefix all draws of the stream share."""
    return mix64_int(mix64_int(seed & _MASK) ^ stream)


def hash_u64(seed: int, stream: int, index, counter) -> np.ndarray:
    """Hash (seed, stream, index, counter) to uint64; index/counter broadcast as 1-d arrays."""
    index = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    counter = np.atleast_1d(np.asarray(counter, dtype=np.uint64))
    h = mix64(np.uint64(stream_prefix(seed, stream)) ^ index)
    return mix64(h ^ counter)


def uniform01(seed: int, stream: int, index, counter) -> np.ndarray:
    """Uniform float64 in the open interval (0, 1), one per (index, counter) pair."""
    bits = hash_u64(seed, stream, index, counter)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TO_UNIT


def uniform_sym(seed: int, stream: int, index, counter) -> np.ndarray:
    """Uniform float64 in (-1, 1)."""
    return 2.0 * uniform01(seed, stream, index, counter) - 1.0


def gaussian(seed: int, stream: int, index, counter) -> np.ndarray:
    """Standard normal deviates via the inverse CDF (fixed one-draw cost per value)."""
    return ndtri(uniform01(seed, stream, index, counter))


def pack_jitter_counter(bounce: int, attempt: int, lane: int) -> int:
    """Counter for one reflection-jitter draw; mirrored by the numba kernel."""
    return (bounce << 8) | (attempt << 4) | lane
