"""Pinhole camera, raster containers and the projection primitives.

Conventions used throughout the package:

* poses are stored world-to-camera: ``x_cam = R @ x_world + t``;
* integer pixel ``(u, v)`` samples the continuous image point
  ``(u + 0.5, v + 0.5)``, so the pixel containing a continuous point
  ``(x, y)`` is ``(floor(x), floor(y))``;
* rasters are channel-last numpy arrays of shape ``(H, W[, C])``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DimensionMismatchError

BEHIND_EPS = 1e-9
_FRAME_RE = re.compile(r"^(world|camera:.+)$")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (int(self.width) > 0 and int(self.height) > 0):
            raise ValueError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "fx", float(self.fx))
        object.__setattr__(self, "fy", float(self.fy))
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def from_fov(cls, width, height, fov_x_deg, rotation=None, translation=None):
        f = 0.5 * width / np.tan(np.deg2rad(fov_x_deg) / 2)
        return cls(f, f, width / 2, height / 2, width, height,
                   np.eye(3) if rotation is None else rotation,
                   np.zeros(3) if translation is None else translation)

    @classmethod
    def look_at(cls, eye, target, up, *, fx, fy, cx, cy, width, height):
        """Camera at ``eye`` whose +z axis points at ``target`` (y down)."""
        eye = np.asarray(eye, float)
        z = np.asarray(target, float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(-np.asarray(up, float), z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(fx, fy, cx, cy, width, height, R, -R @ eye)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def K(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def with_pose(self, rotation, translation) -> "PinholeCamera":
        return PinholeCamera(self.fx, self.fy, self.cx, self.cy, self.width,
                             self.height, rotation, translation)

    def world_to_camera(self, points):
        return np.asarray(points, float) @ self.rotation.T + self.translation

    def camera_to_world(self, points):
        return (np.asarray(points, float) - self.translation) @ self.rotation

    def pixel_centers(self):
        """Continuous coordinates of every pixel center, shape (H, W, 2)."""
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if v.ndim != 2 or v.shape != m.shape:
            raise DimensionMismatchError("depth values and validity must be 2-D and equal shape")
        m = m & np.isfinite(v) & (v > 0)
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "valid", _readonly(m))

    @classmethod
    def from_array(cls, values):
        """Validity inferred from the data: finite and strictly positive."""
        v = np.asarray(values, dtype=np.float64)
        return cls(v, np.isfinite(v) & (v > 0))

    @property
    def shape(self):
        return self.values.shape

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    def filled(self, fill=0.0):
        return np.where(self.valid, self.values, fill)


@dataclass(frozen=True)
class RayMap:
    origins: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origins, dtype=np.float64)
        d = np.asarray(self.directions, dtype=np.float64)
        if o.ndim != 3 or o.shape[-1] != 3 or o.shape != d.shape:
            raise DimensionMismatchError("ray origins/directions must both be (H, W, 3)")
        if d.size and np.abs(np.linalg.norm(d, axis=-1) - 1).max() > 1e-6:
            raise ValueError("ray directions must have unit norm")
        object.__setattr__(self, "origins", _readonly(o))
        object.__setattr__(self, "directions", _readonly(d))

    @classmethod
    def from_camera(cls, camera: PinholeCamera) -> "RayMap":
        """Rays through every pixel center, in world coordinates."""
        pix = camera.pixel_centers()
        x = (pix[..., 0] - camera.cx) / camera.fx
        y = (pix[..., 1] - camera.cy) / camera.fy
        d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        d = d_cam @ camera.rotation
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(camera.center, d.shape)
        return cls(o, d)

    @property
    def shape(self):
        return self.origins.shape[:2]


@dataclass(frozen=True)
class ImageBuffer:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[..., None]
        if v.ndim != 3 or v.shape[-1] not in (1, 3):
            raise DimensionMismatchError("image must be (H, W, 1) or (H, W, 3)")
        if not np.isfinite(v).all():
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def channels(self):
        return self.values.shape[-1]

    @property
    def shape(self):
        return self.values.shape[:2]


@dataclass(frozen=True)
class PointMap:
    points: np.ndarray
    valid: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if p.ndim != 3 or p.shape[-1] != 3 or p.shape[:2] != m.shape:
            raise DimensionMismatchError("points must be (H, W, 3) with an (H, W) validity mask")
        if not _FRAME_RE.match(self.frame):
            raise ValueError(f"frame must be 'world' or 'camera:<id>', got {self.frame!r}")
        object.__setattr__(self, "points", _readonly(p))
        object.__setattr__(self, "valid", _readonly(m))

    @property
    def shape(self):
        return self.valid.shape


def project_points(camera: PinholeCamera, points_world):
    """Vectorised projection; returns ``(pixels[..., 2], depth[...])``.

    No behind-camera check is made here: callers mask ``depth``.
    """
    pc = camera.world_to_camera(points_world)
    z = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * pc[..., 0] / z + camera.cx
        v = camera.fy * pc[..., 1] / z + camera.cy
    return np.stack([u, v], axis=-1), z


def project(camera: PinholeCamera, point_world):
    """Project one world point; raises :class:`BehindCameraError` if z <= 1e-9."""
    pix, z = project_points(camera, np.asarray(point_world, float).reshape(3))
    if not z > BEHIND_EPS:
        raise BehindCameraError(f"point is behind the camera (z={float(z):.3g})")
    return pix, float(z)


def unproject_points(camera: PinholeCamera, pixels, depth):
    pixels = np.asarray(pixels, float)
    depth = np.asarray(depth, float)
    x = (pixels[..., 0] - camera.cx) / camera.fx * depth
    y = (pixels[..., 1] - camera.cy) / camera.fy * depth
    return camera.camera_to_world(np.stack([x, y, depth], axis=-1))


def unproject(camera: PinholeCamera, pixel, depth: float) -> np.ndarray:
    if not depth > 0:
        raise ValueError("depth must be positive")
    return unproject_points(camera, np.asarray(pixel, float).reshape(2), depth)


def _check_shape(camera, shape):
    if tuple(shape) != camera.shape:
        raise DimensionMismatchError(f"raster {tuple(shape)} does not match camera {camera.shape}")


def depth_to_points(camera: PinholeCamera, depth: DepthMap) -> PointMap:
    """Unproject every pixel center; invalid depth stays invalid."""
    _check_shape(camera, depth.shape)
    pts = unproject_points(camera, camera.pixel_centers(), depth.filled(1.0))
    return PointMap(pts, depth.valid, "world")


def ray_points(rays: RayMap, depth: DepthMap, offset=None) -> PointMap:
    """Points ``o + (D + dD) d`` along each pixel ray.

    ``offset`` may be a :class:`DepthMap`, a raw array or None (zero). A pixel
    is invalid if its depth is invalid or ``D + dD <= 0``.
    """
    if rays.shape != depth.shape:
        raise DimensionMismatchError("ray map and depth map sizes differ")
    if offset is None:
        off = 0.0
    else:
        off = offset.values if isinstance(offset, DepthMap) else np.asarray(offset, float)
        if off.shape != depth.shape:
            raise DimensionMismatchError("depth offset size differs from depth map")
    total = depth.values + off
    valid = depth.valid & np.isfinite(total) & (total > 0)
    pts = rays.origins + total[..., None] * rays.directions
    return PointMap(pts, valid, "world")


def z_depth_to_range(camera: PinholeCamera, depth: DepthMap) -> DepthMap:
    """Convert camera z-depth to distance along each pixel's unit ray."""
    _check_shape(camera, depth.shape)
    pix = camera.pixel_centers()
    x = (pix[..., 0] - camera.cx) / camera.fx
    y = (pix[..., 1] - camera.cy) / camera.fy
    return DepthMap(depth.values * np.sqrt(x * x + y * y + 1.0), depth.valid)


def rotation_angle(R) -> float:
    """Axis-angle magnitude of a rotation matrix, in [0, pi]."""
    R = np.asarray(R, float)
    # atan2 form stays accurate near 0 and pi where acos loses precision
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(np.linalg.norm(w) / 2, (np.trace(R) - 1) / 2))


def pose_distance_angle(a: PinholeCamera, b: PinholeCamera):
    """Camera-center distance and relative rotation angle (radians)."""
    d = float(np.linalg.norm(a.center - b.center))
    return d, rotation_angle(a.rotation @ b.rotation.T)
