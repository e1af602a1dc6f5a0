"""Pure-NumPy fallback for the hash-grid gather/scatter kernels.

Forward output is bit-identical to kernels._gridcore (weights and feature
accumulation both in float64, corner order shared). Backward visits scatter
targets in a different order, so colliding gradients agree only to float64
rounding. Slower than the compiled backend (see benchmarks/bench_kernels.py)
but always available.
"""

import numpy as np

HASH_PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)


def backend_name():
    return "numpy"


def _corner_setup(x01, res):
    """Base corner and fractional offset per point for one level."""
    p = x01 * float(res)
    c0 = np.floor(p).astype(np.int64)
    np.clip(c0, 0, res - 1, out=c0)
    frac = p - c0
    return c0, frac


def _corner_indices(cx, cy, cz, res, size, dense):
    if dense:
        return cx + (res + 1) * (cy + (res + 1) * cz)
    h = (
        cx.astype(np.uint64) * HASH_PRIMES[0]
        ^ cy.astype(np.uint64) * HASH_PRIMES[1]
        ^ cz.astype(np.uint64) * HASH_PRIMES[2]
    )
    return (h % np.uint64(size)).astype(np.int64)


def hash_encode_forward(x01, tables, res, offsets, sizes, dense):
    """Trilinearly interpolated features for unit-cube points, all levels.

    x01: (N, 3) float64 in [0, 1]. tables: (T, F). Returns (N, L*F) in the
    table dtype.
    """
    n_pts = x01.shape[0]
    n_lvl = len(res)
    n_feat = tables.shape[1]
    out = np.empty((n_pts, n_lvl * n_feat), dtype=tables.dtype)
    for lvl in range(n_lvl):
        c0, frac = _corner_setup(x01, int(res[lvl]))
        acc = np.zeros((n_pts, n_feat), dtype=np.float64)
        for c in range(8):
            bits = np.array([c & 1, (c >> 1) & 1, (c >> 2) & 1], dtype=np.int64)
            w = np.where(bits[None, :] == 1, frac, 1.0 - frac)
            w = (w[:, 0] * w[:, 1]) * w[:, 2]
            corner = c0 + bits[None, :]
            idx = _corner_indices(
                corner[:, 0], corner[:, 1], corner[:, 2],
                int(res[lvl]), int(sizes[lvl]), bool(dense[lvl]),
            )
            acc += w[:, None] * tables[int(offsets[lvl]) + idx]
        out[:, lvl * n_feat:(lvl + 1) * n_feat] = acc.astype(tables.dtype)
    return out


def hash_encode_backward(x01, dfeats, res, offsets, sizes, dense, grad_out):
    """Scatter-accumulate dL/dtables (+=) into the float64 buffer grad_out."""
    n_pts = x01.shape[0]
    n_lvl = len(res)
    n_feat = grad_out.shape[1]
    for lvl in range(n_lvl):
        c0, frac = _corner_setup(x01, int(res[lvl]))
        d = dfeats[:, lvl * n_feat:(lvl + 1) * n_feat]
        for c in range(8):
            bits = np.array([c & 1, (c >> 1) & 1, (c >> 2) & 1], dtype=np.int64)
            w = np.where(bits[None, :] == 1, frac, 1.0 - frac)
            w = (w[:, 0] * w[:, 1]) * w[:, 2]
            corner = c0 + bits[None, :]
            idx = _corner_indices(
                corner[:, 0], corner[:, 1], corner[:, 2],
                int(res[lvl]), int(sizes[lvl]), bool(dense[lvl]),
            )
            np.add.at(grad_out, int(offsets[lvl]) + idx, w[:, None] * d)
