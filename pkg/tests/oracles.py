"""Reference implementations the tests compare the package against.

They are written independently of the package internals: analytic ray
casting against planar quads, explicit per-pixel loops and dense solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from splatpipe.camera import PinholeCamera


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_camera(rng, width=64, height=48) -> PinholeCamera:
    f = rng.uniform(40, 120)
    cx = rng.uniform(0.3, 0.7) * width
    cy = rng.uniform(0.3, 0.7) * height
    return PinholeCamera(f, f * rng.uniform(0.9, 1.1), cx, cy, width, height,
                         random_rotation(rng), rng.uniform(-2, 2, 3))


@dataclass
class Quad:
    """Planar parallelogram ``origin + a*e1 + b*e2`` for a, b in [0, 1]."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, float)
        self.e1 = np.asarray(self.e1, float)
        self.e2 = np.asarray(self.e2, float)

    def intersect(self, o, d):
        """Ray parameters ``t`` of the hits (inf where the ray misses)."""
        n = np.cross(self.e1, self.e2)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((self.origin - o) @ n) / (d @ n)
        p = o + t[..., None] * d - self.origin
        a = p @ self.e1 / (self.e1 @ self.e1)
        b = p @ self.e2 / (self.e2 @ self.e2)
        hit = np.isfinite(t) & (t > 0) & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
        return np.where(hit, t, np.inf)


def box(lo, hi):
    """Axis-aligned box as six quads."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    dx, dy, dz = np.diag(hi - lo)
    return [Quad(lo, dx, dy), Quad(lo + dz, dx, dy), Quad(lo, dx, dz),
            Quad(lo + dy, dx, dz), Quad(lo, dy, dz), Quad(lo + dx, dy, dz)]


def pixel_rays(cam: PinholeCamera):
    """World-space (unnormalised) rays through pixel centres, camera-z = 1."""
    Kinv = np.linalg.inv(cam.K)
    u, v = np.meshgrid(np.arange(cam.width) + 0.5, np.arange(cam.height) + 0.5)
    pix = np.stack([u, v, np.ones_like(u)], -1)
    d_cam = pix @ Kinv.T
    return d_cam @ cam.rotation  # R^T applied row-wise


def ray_cast(cam: PinholeCamera, quads):
    """Return ``(z_depth, hit_id)``; ``z_depth`` is 0 and ``hit_id`` -1 on misses.

    Because the rays have camera-z 1, the ray parameter is the z-depth.
    """
    o = -cam.rotation.T @ cam.translation
    d = pixel_rays(cam)
    ts = np.stack([q.intersect(o, d) for q in quads])
    hit_id = np.argmin(ts, axis=0)
    t = np.min(ts, axis=0)
    hit = np.isfinite(t)
    return np.where(hit, t, 0.0), np.where(hit, hit_id, -1)


def segment_blocked(a, p, quads, eps=1e-6):
    """True where the open segment from ``a`` to ``p`` crosses any quad."""
    d = p - a
    blocked = np.zeros(p.shape[:-1], bool)
    for q in quads:
        t = q.intersect(a, d)
        blocked |= t < 1 - eps
    return blocked


def point_visibility(target: PinholeCamera, depth, context: PinholeCamera, quads):
    """Per target pixel: is its surface point unoccluded and inside the context image?"""
    pts = target.camera_to_world(pixel_rays_cam(target) * depth[..., None])
    pc = context.world_to_camera(pts)
    z = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = context.fx * pc[..., 0] / z + context.cx
        v = context.fy * pc[..., 1] / z + context.cy
    inside = (z > 0) & (u >= 0) & (u < context.width) & (v >= 0) & (v < context.height)
    c = -context.rotation.T @ context.translation
    return inside & ~segment_blocked(c, pts, quads) & (depth > 0), np.stack([u, v], -1)


def pixel_rays_cam(cam: PinholeCamera):
    u, v = np.meshgrid(np.arange(cam.width) + 0.5, np.arange(cam.height) + 0.5)
    return np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], -1)


def coverage_loop(a_cam, a_depth, a_nonsky, b_cam, b_depth, delta=0.05):
    """Per-pixel loop version of the coverage fraction (slow, obvious)."""
    Ka = np.linalg.inv(a_cam.K)
    Ra, ta = a_cam.rotation, a_cam.translation
    Rb, tb = b_cam.rotation, b_cam.translation
    hits = total = 0
    for v in range(a_cam.height):
        for u in range(a_cam.width):
            if not a_nonsky[v, u]:
                continue
            total += 1
            z = a_depth[v, u]
            if not z > 0:
                continue
            xc = z * (Ka @ np.array([u + 0.5, v + 0.5, 1.0]))
            xw = Ra.T @ (xc - ta)
            y = Rb @ xw + tb
            if y[2] <= 1e-9:
                continue
            ub = math.floor(b_cam.fx * y[0] / y[2] + b_cam.cx)
            vb = math.floor(b_cam.fy * y[1] / y[2] + b_cam.cy)
            if not (0 <= ub < b_cam.width and 0 <= vb < b_cam.height):
                continue
            zb = b_depth[vb, ub]
            if zb > 0 and abs(math.log(zb) - math.log(y[2])) < delta:
                hits += 1
    return hits / total


def pose_between_loop(c1: PinholeCamera, c2: PinholeCamera, c: PinholeCamera) -> bool:
    """Interpolation predicate via scipy rotation magnitudes."""
    def dist(a, b):
        return np.linalg.norm((-a.rotation.T @ a.translation) - (-b.rotation.T @ b.translation))

    def ang(a, b):
        return Rotation.from_matrix(a.rotation @ b.rotation.T).magnitude()

    d12, t12 = dist(c1, c2), ang(c1, c2)
    d1j, t1j = dist(c1, c), ang(c1, c)
    dj2, tj2 = dist(c, c2), ang(c, c2)
    return d1j < d12 and dj2 < d12 and t1j < t12 and tj2 < t12


def conv2d_loop(x, kernel, bias, pad):
    """Direct six-nested-loop cross-correlation, channel-last input."""
    H, W, Cin = x.shape
    Cout, _, k, _ = kernel.shape
    Ho, Wo = H + 2 * pad - k + 1, W + 2 * pad - k + 1
    out = np.zeros((Ho, Wo, Cout))
    for o in range(Cout):
        for i in range(Ho):
            for j in range(Wo):
                acc = bias[o]
                for c in range(Cin):
                    for dy in range(k):
                        for dx in range(k):
                            yy, xx = i + dy - pad, j + dx - pad
                            if 0 <= yy < H and 0 <= xx < W:
                                acc += kernel[o, c, dy, dx] * x[yy, xx, c]
                out[i, j, o] = acc
    return out


def wls_dense(P, Q, W):
    """Solve the 4-unknown weighted problem with a generic least-squares solver."""
    n = len(P)
    A = np.zeros((3 * n, 4))
    A[:, 0] = P.reshape(-1)
    for k in range(3):
        A[k::3, 1 + k] = 1.0
    sw = np.sqrt(np.repeat(W, 3))
    x, *_ = np.linalg.lstsq(A * sw[:, None], Q.reshape(-1) * sw, rcond=None)
    return x[0], x[1:]


def slab_scene(size=256):
    """Target at the origin, a context shifted sideways, a slab in front of a wall."""
    f = 0.5 * size / np.tan(np.deg2rad(30))
    intr = dict(fx=f, fy=f, cx=size / 2, cy=size / 2, width=size, height=size)
    target = PinholeCamera(**intr)
    context = PinholeCamera.look_at([1.2, 0.1, 0.0], [0.0, 0.0, 10.0], [0, -1, 0], **intr)
    quads = [Quad([-30, -30, 10], [60, 0, 0], [0, 60, 0]),
             Quad([-0.6, -1.0, 5], [1.0, 0, 0], [0, 2.0, 0])]
    return target, context, quads


def ring_scene(n_views=10, size=40, seed=0, arc_deg=100.0):
    """Outward-looking cameras on a jittered ring inside a polygonal room with boxes."""
    rng = np.random.default_rng(seed)
    f = 0.5 * size / np.tan(np.deg2rad(27))
    intr = dict(fx=f, fy=f, cx=size / 2, cy=size / 2, width=size, height=size)
    quads = []
    sides, radius = 24, 10.0
    for k in range(sides):
        a0, a1 = 2 * np.pi * k / sides, 2 * np.pi * (k + 1) / sides
        p0 = radius * np.array([np.sin(a0), 0.0, np.cos(a0)])
        p1 = radius * np.array([np.sin(a1), 0.0, np.cos(a1)])
        quads.append(Quad(p0 + [0, -3, 0], p1 - p0, [0, 6, 0]))
    quads += box([-1.0, -0.8, 5.0], [0.6, 0.9, 6.2]) + box([4.5, -1.2, 2.0], [5.5, 0.4, 3.5])
    cams = []
    phis = np.deg2rad(np.linspace(0.0, arc_deg, n_views) + rng.uniform(-3, 3, n_views))
    for phi in phis:
        out = np.array([np.sin(phi), 0.0, np.cos(phi)])
        eye = 1.5 * out + [0, rng.uniform(-0.1, 0.1), 0]
        cams.append(PinholeCamera.look_at(eye, eye + 6 * out + rng.uniform(-0.3, 0.3, 3), [0, -1, 0], **intr))
    return cams, quads
