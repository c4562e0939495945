"""Counter-based Gaussian noise for reproducible path ensembles.

Every Brownian increment is addressed by the tuple (seed, path, step, lane)
and produced by hashing that tuple with a keyed splitmix64 finalizer followed
by a Box-Muller transform.  No generator state exists: path i's noise does not
depend on how many paths are simulated, on chunking, or on evaluation order,
so ensembles are bit-identical across runs and across parallel schedules.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_SEED_SALT = _U64(0x5851F42D4C957F2D)

# Counter layout (64 bits): path:30 | step:26 | lane:8.
_LANE_BITS = _U64(8)
_STEP_BITS = _U64(26)
MAX_LANES = 1 << 8
MAX_STEPS = 1 << 26
MAX_PATHS = 1 << 30


def _mix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> _U64(30))) * _MIX1
        x = (x ^ (x >> _U64(27))) * _MIX2
        return x ^ (x >> _U64(31))


def _key(seed):
    return _mix64(_U64(int(seed) & 0xFFFFFFFFFFFFFFFF) ^ _SEED_SALT)


def _words(seed, counters):
    """Hash uint64 counters into uniform uint64 words under the given seed."""
    key = _key(seed)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(counters + key) ^ key)


def _counters(paths, step, lanes):
    paths = np.asarray(paths, dtype=np.uint64)
    if np.any(paths >= MAX_PATHS):
        raise ValueError(f"path index must be < {MAX_PATHS}")
    if not 0 <= step < MAX_STEPS:
        raise ValueError(f"step index must be < {MAX_STEPS}")
    base = (paths << (_STEP_BITS + _LANE_BITS)) | (_U64(step) << _LANE_BITS)
    return base[:, None] | np.asarray(lanes, dtype=np.uint64)[None, :]


def _uniforms(words, open_low):
    # 53-bit mantissa; open_low shifts into (0, 1] so log() is safe.
    u = (words >> _U64(11)).astype(np.float64)
    if open_low:
        u += 1.0
    return u * (1.0 / 9007199254740992.0)


def gaussian_block(seed, paths, step, m):
    """Standard normal draws of shape (len(paths), m) for one time step.

    Deterministic in (seed, path, step, lane); vectorized over paths.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    paths = np.atleast_1d(np.asarray(paths, dtype=np.uint64))
    n_pairs = (m + 1) // 2
    if 2 * n_pairs > MAX_LANES:
        raise ValueError(f"noise dimension {m} exceeds lane budget {MAX_LANES // 2}")
    lanes = np.arange(2 * n_pairs, dtype=np.uint64)
    words = _words(seed, _counters(paths, step, lanes))
    u1 = _uniforms(words[:, 0::2], open_low=True)
    u2 = _uniforms(words[:, 1::2], open_low=False)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty((paths.shape[0], 2 * n_pairs))
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out[:, :m]


def sample_increments(seed, path, step, m, dt=1.0):
    """Brownian increment ~ N(0, dt I_m) for one (seed, path, step) tuple."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    g = gaussian_block(seed, np.array([path], dtype=np.uint64), step, m)[0]
    return np.sqrt(dt) * g


def derive_seed(seed, *parts):
    """Derive an independent child seed from a base seed and hashable tags."""
    s = _key(seed)
    for part in parts:
        if isinstance(part, str):
            data = part.encode()
            for i in range(0, len(data), 8):
                chunk = int.from_bytes(data[i : i + 8], "little")
                s = _mix64(s ^ _mix64(_U64(chunk)))
        else:
            s = _mix64(s ^ _mix64(_U64(int(part) & 0xFFFFFFFFFFFFFFFF)))
    return int(s)
