"""Multi-resolution hash-grid feature tables with trilinear interpolation.

Levels whose corner lattice fits the table use dense injective indexing; the
rest are indexed by the XOR-of-primes spatial hash. The heavy gather/scatter
loops live in climatefield.kernels (compiled when available).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .geometry import Aabb

HASH_PRIMES = (1, 2654435761, 805459861)


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    base_resolution: int = 16
    growth_factor: float = 1.2030250360821555  # finest level ~256 cells/axis
    table_size_log2: int = 15
    features_per_level: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidInputError("levels must be >= 1")
        if self.base_resolution < 2:
            raise InvalidInputError("base_resolution must be >= 2")
        if self.growth_factor <= 1.0:
            raise InvalidInputError("growth_factor must be > 1")
        if self.table_size_log2 < 10:
            raise InvalidInputError("table_size_log2 must be >= 10")
        if not 1 <= self.features_per_level <= 16:
            raise InvalidInputError("features_per_level must be in [1, 16]")

    @property
    def out_dim(self):
        return self.levels * self.features_per_level

    def level_resolutions(self):
        res = [
            int(np.floor(self.base_resolution * self.growth_factor**lvl))
            for lvl in range(self.levels)
        ]
        return np.array(res, dtype=np.int64)


class HashGrid:
    """Learnable feature tables over a scene box.

    tables: (total_rows, F) array; per-level rows are contiguous. Levels with
    (res+1)^3 <= 2^table_size_log2 store every corner (injective).
    """

    def __init__(self, config: HashGridConfig, bounds: Aabb, rng=None,
                 dtype=np.float32, init_scale=1e-4):
        self.config = config
        self.bounds = bounds
        self.resolutions = config.level_resolutions()
        cap = 1 << config.table_size_log2
        sizes = []
        dense = []
        for r in self.resolutions:
            corners = (int(r) + 1) ** 3
            if corners <= cap:
                sizes.append(corners)
                dense.append(1)
            else:
                sizes.append(cap)
                dense.append(0)
        self.sizes = np.array(sizes, dtype=np.int64)
        self.dense = np.array(dense, dtype=np.uint8)
        self.offsets = np.concatenate(
            [[0], np.cumsum(self.sizes)[:-1]]
        ).astype(np.int64)
        total = int(np.sum(self.sizes))
        if rng is None:
            self.tables = np.zeros((total, config.features_per_level), dtype=dtype)
        else:
            self.tables = rng.uniform(
                -init_scale, init_scale, size=(total, config.features_per_level)
            ).astype(dtype)

    @property
    def out_dim(self):
        return self.config.out_dim

    def encode_unit(self, x01):
        """Features for points already mapped to the unit cube (no checks)."""
        x01 = np.ascontiguousarray(x01, dtype=np.float64)
        return kernels.hash_encode_forward(
            x01, self.tables, self.resolutions, self.offsets, self.sizes,
            self.dense,
        )

    def encode_unit_backward(self, x01, dfeats):
        """Float64 dL/dtables for the given feature adjoints."""
        x01 = np.ascontiguousarray(x01, dtype=np.float64)
        dfeats = np.ascontiguousarray(dfeats, dtype=np.float64)
        grad = np.zeros(self.tables.shape, dtype=np.float64)
        kernels.hash_encode_backward(
            x01, dfeats, self.resolutions, self.offsets, self.sizes,
            self.dense, grad,
        )
        return grad

    def level_index(self, lvl, corner):
        """Table row of an integer corner at one level (for tests/tools)."""
        r = int(self.resolutions[lvl])
        cx, cy, cz = (int(c) for c in corner)
        if self.dense[lvl]:
            local = cx + (r + 1) * (cy + (r + 1) * cz)
        else:
            h = (
                np.uint64(cx) * np.uint64(HASH_PRIMES[0])
                ^ np.uint64(cy) * np.uint64(HASH_PRIMES[1])
                ^ np.uint64(cz) * np.uint64(HASH_PRIMES[2])
            )
            local = int(h % np.uint64(self.sizes[lvl]))
        return int(self.offsets[lvl]) + local


def hash_encode(points, grid: HashGrid, return_clamped=False):
    """Concatenated multi-level features for world-space points.

    Points outside the grid bounds are clamped onto the box; pass
    return_clamped=True to also get the mask of clamped points. Non-finite
    coordinates raise InvalidInputError.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("hash_encode: non-finite coordinates")
    unit = grid.bounds.normalize(pts)
    clamped = np.any((unit < 0.0) | (unit > 1.0), axis=-1)
    if np.any(clamped):
        unit = np.clip(unit, 0.0, 1.0)
    feats = grid.encode_unit(unit)
    if return_clamped:
        return feats, clamped
    return feats


class Hash2D:
    """Bilinear 2-D hash grid over the image plane, for transient masks."""

    PRIMES = (1, 2654435761)

    def __init__(self, levels=6, base_resolution=8, growth_factor=1.45,
                 table_size_log2=12, features_per_level=2, rng=None,
                 dtype=np.float32, init_scale=1e-4):
        self.levels = levels
        self.features_per_level = features_per_level
        self.resolutions = np.array(
            [int(np.floor(base_resolution * growth_factor**l)) for l in range(levels)],
            dtype=np.int64,
        )
        cap = 1 << table_size_log2
        self.sizes = np.array(
            [min((int(r) + 1) ** 2, cap) for r in self.resolutions], dtype=np.int64
        )
        self.dense = self.sizes == (self.resolutions + 1) ** 2
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        total = int(np.sum(self.sizes))
        if rng is None:
            self.tables = np.zeros((total, features_per_level), dtype=dtype)
        else:
            self.tables = rng.uniform(
                -init_scale, init_scale, size=(total, features_per_level)
            ).astype(dtype)

    @property
    def out_dim(self):
        return self.levels * self.features_per_level

    def _corners(self, uv01, lvl):
        r = int(self.resolutions[lvl])
        p = uv01 * r
        c0 = np.clip(np.floor(p).astype(np.int64), 0, r - 1)
        frac = p - c0
        return c0, frac, r

    def _index(self, cu, cv, lvl):
        r = int(self.resolutions[lvl])
        if self.dense[lvl]:
            local = cu + (r + 1) * cv
        else:
            h = (
                cu.astype(np.uint64) * np.uint64(self.PRIMES[0])
                ^ cv.astype(np.uint64) * np.uint64(self.PRIMES[1])
            )
            local = (h % np.uint64(self.sizes[lvl])).astype(np.int64)
        return int(self.offsets[lvl]) + local

    def encode(self, uv01):
        uv01 = np.asarray(uv01, dtype=np.float64)
        n = uv01.shape[0]
        out = np.empty((n, self.out_dim), dtype=self.tables.dtype)
        f = self.features_per_level
        for lvl in range(self.levels):
            c0, frac, _ = self._corners(uv01, lvl)
            acc = np.zeros((n, f), dtype=np.float64)
            for c in range(4):
                bits = np.array([c & 1, (c >> 1) & 1], dtype=np.int64)
                w = np.where(bits[None, :] == 1, frac, 1.0 - frac)
                w = w[:, 0] * w[:, 1]
                corner = c0 + bits[None, :]
                idx = self._index(corner[:, 0], corner[:, 1], lvl)
                acc += w[:, None] * self.tables[idx]
            out[:, lvl * f:(lvl + 1) * f] = acc.astype(self.tables.dtype)
        return out

    def encode_backward(self, uv01, dfeats):
        uv01 = np.asarray(uv01, dtype=np.float64)
        dfeats = np.asarray(dfeats, dtype=np.float64)
        grad = np.zeros(self.tables.shape, dtype=np.float64)
        f = self.features_per_level
        for lvl in range(self.levels):
            c0, frac, _ = self._corners(uv01, lvl)
            d = dfeats[:, lvl * f:(lvl + 1) * f]
            for c in range(4):
                bits = np.array([c & 1, (c >> 1) & 1], dtype=np.int64)
                w = np.where(bits[None, :] == 1, frac, 1.0 - frac)
                w = w[:, 0] * w[:, 1]
                corner = c0 + bits[None, :]
                idx = self._index(corner[:, 0], corner[:, 1], lvl)
                np.add.at(grad, idx, w[:, None] * d)
        return grad
