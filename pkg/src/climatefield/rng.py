"""Stateless counter-based random streams (splitmix64).

Rendering jitter is keyed on (seed, pixel, sample) so the result is a pure
function of those integers: identical across runs, thread counts, and tile
shapes.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hash_combine(*keys):
    """Fold integer keys (scalars or uint64 arrays) into one uint64 state."""
    h = np.uint64(0)
    for k in keys:
        h = _mix(np.asarray(k, dtype=np.uint64) + _GOLDEN + h)
    return h


def uniform01(*keys):
    """U[0,1) floats derived from the hashed keys (broadcasting)."""
    h = hash_combine(*keys)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def stratified_t(seed, ray_keys, t0, t1, n_samples):
    """Stratified sample positions and interval lengths along rays.

    ray_keys: (R,) integer identity of each ray. Returns t (R, S) and
    delta (R, S) with delta[-1] reaching t1, so sum(delta) = t1 - t[0].
    """
    ray_keys = np.asarray(ray_keys, dtype=np.uint64)
    s_idx = np.arange(n_samples, dtype=np.uint64)
    u = uniform01(np.uint64(seed), ray_keys[:, None], s_idx[None, :])
    span = (t1 - t0)[:, None]
    t = t0[:, None] + (np.arange(n_samples)[None, :] + u) * span / n_samples
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = t1 - t[:, -1]
    return t, delta
