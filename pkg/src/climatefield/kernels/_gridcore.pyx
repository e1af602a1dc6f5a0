# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled gather/scatter kernels for multi-resolution hash-grid encoding.

Same contract as kernels.grid_numpy; selected at import by climatefield.kernels.
Interpolation weights are computed in double precision and features accumulate
in double regardless of table dtype, so both backends agree bit-for-bit.
"""

import numpy as np

cimport cython
from libc.math cimport floor

ctypedef fused table_t:
    float
    double

cdef extern from *:
    """
    static const unsigned long long HASH_P0 = 1ULL;
    static const unsigned long long HASH_P1 = 2654435761ULL;
    static const unsigned long long HASH_P2 = 805459861ULL;
    """
    unsigned long long HASH_P0
    unsigned long long HASH_P1
    unsigned long long HASH_P2


cdef inline long long _corner_index(long long ix, long long iy, long long iz,
                                    long long res, long long size,
                                    unsigned char dense) nogil:
    cdef unsigned long long h
    if dense:
        return ix + (res + 1) * (iy + (res + 1) * iz)
    h = (<unsigned long long> ix * HASH_P0) \
        ^ (<unsigned long long> iy * HASH_P1) \
        ^ (<unsigned long long> iz * HASH_P2)
    return <long long> (h % <unsigned long long> size)


def backend_name():
    return "cython"


def hash_encode_forward(double[:, ::1] x01, table_t[:, ::1] tables,
                        long long[::1] res, long long[::1] offsets,
                        long long[::1] sizes, unsigned char[::1] dense):
    """Trilinearly interpolated features for unit-cube points, all levels.

    x01: (N, 3) in [0, 1]. tables: (T, F) concatenated per-level rows.
    Returns (N, L*F) in the table dtype.
    """
    cdef Py_ssize_t n_pts = x01.shape[0]
    cdef Py_ssize_t n_lvl = res.shape[0]
    cdef Py_ssize_t n_feat = tables.shape[1]

    if table_t is float:
        out_arr = np.empty((n_pts, n_lvl * n_feat), dtype=np.float32)
    else:
        out_arr = np.empty((n_pts, n_lvl * n_feat), dtype=np.float64)
    cdef table_t[:, ::1] out = out_arr

    cdef Py_ssize_t n, l, f, c
    cdef double px, py, pz, fx, fy, fz, wx, wy, wz, w
    cdef double acc[16]
    cdef long long r, size, off, x0, y0, z0, ix, iy, iz, idx
    cdef unsigned char dns

    with nogil:
        for n in range(n_pts):
            for l in range(n_lvl):
                r = res[l]
                size = sizes[l]
                off = offsets[l]
                dns = dense[l]
                px = x01[n, 0] * r
                py = x01[n, 1] * r
                pz = x01[n, 2] * r
                x0 = <long long> floor(px)
                y0 = <long long> floor(py)
                z0 = <long long> floor(pz)
                if x0 < 0: x0 = 0
                if y0 < 0: y0 = 0
                if z0 < 0: z0 = 0
                if x0 > r - 1: x0 = r - 1
                if y0 > r - 1: y0 = r - 1
                if z0 > r - 1: z0 = r - 1
                fx = px - x0
                fy = py - y0
                fz = pz - z0
                for f in range(n_feat):
                    acc[f] = 0.0
                for c in range(8):
                    ix = x0 + (c & 1)
                    iy = y0 + ((c >> 1) & 1)
                    iz = z0 + ((c >> 2) & 1)
                    wx = fx if (c & 1) else 1.0 - fx
                    wy = fy if ((c >> 1) & 1) else 1.0 - fy
                    wz = fz if ((c >> 2) & 1) else 1.0 - fz
                    w = wx * wy * wz
                    idx = off + _corner_index(ix, iy, iz, r, size, dns)
                    for f in range(n_feat):
                        acc[f] += w * <double> tables[idx, f]
                for f in range(n_feat):
                    out[n, l * n_feat + f] = <table_t> acc[f]
    return out_arr


def hash_encode_backward(double[:, ::1] x01, double[:, ::1] dfeats,
                         long long[::1] res, long long[::1] offsets,
                         long long[::1] sizes, unsigned char[::1] dense,
                         double[:, ::1] grad_out):
    """Scatter-accumulate dL/dtables (+=) from per-point feature adjoints.

    Accumulation order is (point, level, corner); grad_out is float64 and the
    caller owns zeroing it.
    """
    cdef Py_ssize_t n_pts = x01.shape[0]
    cdef Py_ssize_t n_lvl = res.shape[0]
    cdef Py_ssize_t n_feat = grad_out.shape[1]

    cdef Py_ssize_t n, l, f, c
    cdef double px, py, pz, fx, fy, fz, wx, wy, wz, w
    cdef long long r, size, off, x0, y0, z0, ix, iy, iz, idx
    cdef unsigned char dns

    with nogil:
        for n in range(n_pts):
            for l in range(n_lvl):
                r = res[l]
                size = sizes[l]
                off = offsets[l]
                dns = dense[l]
                px = x01[n, 0] * r
                py = x01[n, 1] * r
                pz = x01[n, 2] * r
                x0 = <long long> floor(px)
                y0 = <long long> floor(py)
                z0 = <long long> floor(pz)
                if x0 < 0: x0 = 0
                if y0 < 0: y0 = 0
                if z0 < 0: z0 = 0
                if x0 > r - 1: x0 = r - 1
                if y0 > r - 1: y0 = r - 1
                if z0 > r - 1: z0 = r - 1
                fx = px - x0
                fy = py - y0
                fz = pz - z0
                for c in range(8):
                    ix = x0 + (c & 1)
                    iy = y0 + ((c >> 1) & 1)
                    iz = z0 + ((c >> 2) & 1)
                    wx = fx if (c & 1) else 1.0 - fx
                    wy = fy if ((c >> 1) & 1) else 1.0 - fy
                    wz = fz if ((c >> 2) & 1) else 1.0 - fz
                    w = wx * wy * wz
                    idx = off + _corner_index(ix, iy, iz, r, size, dns)
                    for f in range(n_feat):
                        grad_out[idx, f] += w * dfeats[n, l * n_feat + f]
    return None
