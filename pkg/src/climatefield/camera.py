"""Pinhole cameras and ray generation.

Convention: camera-to-world pose, camera frame x right / y down / z forward,
world +z up. Pixel (px, py) is sampled at continuous image coordinates
(px + jx, py + jy); jitter (0, 0) is the pixel center, so project() of a
centered ray lands back on integer (px, py).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: tuple      # 3x3 camera-to-world, row tuples
    translation: tuple   # camera center in world
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("Camera: focal lengths must be positive")
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise InvalidInputError("Camera: rotation must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise InvalidInputError("Camera: rotation must be orthonormal")
        object.__setattr__(self, "rotation", tuple(map(tuple, r.tolist())))
        t = np.asarray(self.translation, dtype=np.float64)
        object.__setattr__(self, "translation", tuple(t.tolist()))

    @property
    def r_mat(self):
        return np.asarray(self.rotation, dtype=np.float64)

    @property
    def t_vec(self):
        return np.asarray(self.translation, dtype=np.float64)

    def scaled(self, s: int):
        """Supersampled twin: s x s subpixel centers of this camera's pixels."""
        return Camera(
            fx=self.fx * s, fy=self.fy * s,
            cx=self.cx * s + (s - 1) / 2.0, cy=self.cy * s + (s - 1) / 2.0,
            rotation=self.rotation, translation=self.translation,
            width=self.width * s, height=self.height * s,
        )

    def to_json(self):
        return {
            "rotation": [list(row) for row in self.rotation],
            "translation": list(self.translation),
            "intrinsics": {
                "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
            },
        }

    @classmethod
    def from_json(cls, obj):
        intr = obj["intrinsics"]
        return cls(
            fx=intr["fx"], fy=intr["fy"], cx=intr["cx"], cy=intr["cy"],
            rotation=tuple(map(tuple, obj["rotation"])),
            translation=tuple(obj["translation"]),
            width=int(intr["width"]), height=int(intr["height"]),
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float = 0.0
    t_far: float = np.inf

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise InvalidInputError("Ray: direction must be unit length")
        if not self.t_near < self.t_far:
            raise InvalidInputError("Ray: t_near must be < t_far")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d)


def generate_ray(camera: Camera, px, py, subpixel_jitter=(0.0, 0.0)) -> Ray:
    """Back-project one pixel; jitter is an offset from the pixel center."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise InvalidInputError(f"generate_ray: pixel ({px}, {py}) out of range")
    u = px + float(subpixel_jitter[0])
    v = py + float(subpixel_jitter[1])
    d_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    d_world = camera.r_mat @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(origin=camera.t_vec, direction=d_world)


def generate_rays(camera: Camera):
    """Vectorized pixel-center rays, row-major order. Returns (origins, dirs)."""
    px = np.arange(camera.width, dtype=np.float64)
    py = np.arange(camera.height, dtype=np.float64)
    u, v = np.meshgrid(px, py)
    d_cam = np.stack(
        [(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, np.ones_like(u)],
        axis=-1,
    ).reshape(-1, 3)
    d_world = d_cam @ camera.r_mat.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.t_vec, d_world.shape).copy()
    return origins, d_world


def project(camera: Camera, point):
    """World point -> continuous pixel coordinates (u, v) and depth z."""
    p_cam = camera.r_mat.T @ (np.asarray(point, dtype=np.float64) - camera.t_vec)
    z = p_cam[2]
    if z <= 0:
        raise InvalidInputError("project: point is behind the camera")
    u = camera.fx * p_cam[0] / z + camera.cx
    v = camera.fy * p_cam[1] / z + camera.cy
    return u, v, z


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world rotation with +z forward toward target, y down."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n == 0:
        raise InvalidInputError("look_at: eye and target coincide")
    fwd = fwd / n
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        upv = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, upv)
        rn = np.linalg.norm(right)
    right /= rn
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd], axis=1)
    return r
