"""Small geometric helpers: axis-aligned boxes and vector utilities."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by two corners, lo < hi componentwise."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise InvalidInputError("Aabb corners must be 3-vectors")
        if not np.all(lo < hi):
            raise InvalidInputError("Aabb requires lo < hi on every axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    @property
    def lo_arr(self):
        return np.array(self.lo, dtype=np.float64)

    @property
    def hi_arr(self):
        return np.array(self.hi, dtype=np.float64)

    @property
    def size(self):
        return self.hi_arr - self.lo_arr

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.size))

    def normalize(self, points):
        """Map world points into [0,1]^3 (no clamping)."""
        return (np.asarray(points, dtype=np.float64) - self.lo_arr) / self.size

    def denormalize(self, unit):
        return np.asarray(unit, dtype=np.float64) * self.size + self.lo_arr

    def contains(self, points):
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.lo_arr) & (p <= self.hi_arr), axis=-1)

    def ray_range(self, origins, directions):
        """Entry/exit parameters of rays against the box (slab test).

        Returns (t0, t1); a ray misses the box when t0 >= t1.
        """
        o = np.asarray(origins, dtype=np.float64)
        d = np.asarray(directions, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            ta = (self.lo_arr - o) * inv
            tb = (self.hi_arr - o) * inv
        # Parallel rays: +-inf from the division give the right slab limits
        # unless the origin sits exactly on a face (nan); treat that as inside.
        ta = np.nan_to_num(ta, nan=-np.inf)
        tb = np.nan_to_num(tb, nan=np.inf)
        t0 = np.max(np.minimum(ta, tb), axis=-1)
        t1 = np.min(np.maximum(ta, tb), axis=-1)
        return t0, t1

    def to_json(self):
        return {"min": list(self.lo), "max": list(self.hi)}

    @classmethod
    def from_json(cls, obj):
        return cls(lo=tuple(obj["min"]), hi=tuple(obj["max"]))


def normalize_vec(v, eps=0.0):
    """Unit-length copy of v; raises on (near-)zero length unless eps > 0."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n <= eps or n == 0.0:
        raise InvalidInputError("cannot normalize a zero-length vector")
    return v / n


def orthonormal_tangents(n):
    """Two unit tangents completing n to a right-handed frame."""
    n = np.asarray(n, dtype=np.float64)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(n, up))) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    t1 = np.cross(up, n)
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return t1, t2


def reflect(d, n):
    """Mirror direction(s) d about normal n: d - 2 (d.n) n."""
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    dn = np.sum(d * n, axis=-1, keepdims=True)
    return d - 2.0 * dn * n
