"""Forward Gaussian splatting: EWA projection, tile binning, compositing, metrics."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import ImageBuffer, PinholeCamera
from .errors import DimensionMismatchError, EmptyMaskError
from .gaussians import GaussianSet
from .sh import sh_to_color

TILE = 16
DILATION = 0.3
NEAR = 0.01
PSNR_CAP = 100.0
THREADS_ENV = "SPLATPIPE_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "")))
    except ValueError:
        return os.cpu_count() or 1


def quat_to_rotmat(q) -> np.ndarray:
    q = np.asarray(q, float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def cov3d(rotation, scale) -> np.ndarray:
    """``R diag(s)^2 R^T`` for one primitive or a batch."""
    R = quat_to_rotmat(rotation)
    M = R * np.asarray(scale, float)[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    view_depth: float
    rgb: np.ndarray
    alpha: float


@dataclass
class Projection:
    """Batched projection result; ``keep`` flags primitives surviving culling."""

    means2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    radius: np.ndarray
    keep: np.ndarray


def project_gaussians(camera: PinholeCamera, means, rotations, scales, dilation=DILATION) -> Projection:
    means = np.asarray(means, float).reshape(-1, 3)
    n = len(means)
    pc = camera.world_to_camera(means)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    in_front = z >= NEAR
    zs = np.where(in_front, z, 1.0)
    mean2d = np.stack([camera.fx * x / zs + camera.cx, camera.fy * y / zs + camera.cy], -1)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = camera.fx / zs
    J[:, 0, 2] = -camera.fx * x / (zs * zs)
    J[:, 1, 1] = camera.fy / zs
    J[:, 1, 2] = -camera.fy * y / (zs * zs)
    T = J @ camera.rotation
    cov = T @ cov3d(rotations, scales) @ np.swapaxes(T, 1, 2)
    cov[:, 0, 0] += dilation
    cov[:, 1, 1] += dilation
    mid = 0.5 * (cov[:, 0, 0] + cov[:, 1, 1])
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] ** 2
    lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam, 0.0))
    on_screen = ((mean2d[:, 0] + radius > 0) & (mean2d[:, 0] - radius < camera.width)
                 & (mean2d[:, 1] + radius > 0) & (mean2d[:, 1] - radius < camera.height))
    keep = in_front & on_screen & (det > 0) & np.isfinite(mean2d).all(1)
    return Projection(mean2d, cov, z, radius, keep)


def project_gaussian(camera: PinholeCamera, mean, rotation, scale, alpha=1.0, rgb=(0.0, 0.0, 0.0)):
    """Project one primitive; returns ``None`` when it is culled."""
    p = project_gaussians(camera, mean, np.reshape(rotation, (1, 4)), np.reshape(scale, (1, 3)))
    if not p.keep[0]:
        return None
    return ProjectedGaussian(p.means2d[0], p.cov2d[0], float(p.depth[0]), np.asarray(rgb, float), float(alpha))


@dataclass(frozen=True)
class RenderOutput:
    color: ImageBuffer
    accum_alpha: np.ndarray
    expected_depth: np.ndarray | None = None


def bin_tiles(means2d, radius, order, width, height, tile=TILE):
    """CSR tile lists holding primitive ids in ``order``.

    Returns ``(offsets, ids)``; tile ``t`` owns ``ids[offsets[t]:offsets[t+1]]``.
    """
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    m = means2d[order]
    r = radius[order]
    tx0 = np.clip(np.floor((m[:, 0] - r) / tile), 0, tiles_x - 1).astype(np.int64)
    tx1 = np.clip(np.floor((m[:, 0] + r) / tile), 0, tiles_x - 1).astype(np.int64)
    ty0 = np.clip(np.floor((m[:, 1] - r) / tile), 0, tiles_y - 1).astype(np.int64)
    ty1 = np.clip(np.floor((m[:, 1] + r) / tile), 0, tiles_y - 1).astype(np.int64)
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    g = np.repeat(np.arange(len(order)), counts)
    start = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total) - start
    nxr = nx[g]
    tile_id = (ty0[g] + local // nxr) * tiles_x + tx0[g] + local % nxr
    # stable sort keeps depth order inside each tile
    srt = np.argsort(tile_id, kind="stable")
    ids = np.ascontiguousarray(order[g[srt]], dtype=np.int64)
    offsets = np.zeros(tiles_x * tiles_y + 1, dtype=np.int64)
    np.cumsum(np.bincount(tile_id, minlength=tiles_x * tiles_y), out=offsets[1:])
    return offsets, ids


def rasterize(gaussians: GaussianSet, camera: PinholeCamera, threads=None, backend=None,
              colors=None) -> RenderOutput:
    """Render front-to-back over a black background.

    ``colors`` overrides SH evaluation with fixed per-primitive RGB.
    """
    H, W = camera.height, camera.width
    composite = _kernels.get_composite(backend)
    threads = default_threads() if threads is None else max(1, int(threads))
    if len(gaussians) == 0:
        return RenderOutput(ImageBuffer(np.zeros((H, W, 3))), np.zeros((H, W)), np.zeros((H, W)))
    proj = project_gaussians(camera, gaussians.means, gaussians.rotations, gaussians.scales)
    idx = np.flatnonzero(proj.keep)
    # global depth sort; ties resolved by primitive index
    order = idx[np.argsort(proj.depth[idx], kind="stable")]
    if colors is None:
        dirs = gaussians.means - camera.center
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
        rgb = sh_to_color(gaussians.sh, dirs)
    else:
        rgb = np.asarray(colors, float).reshape(-1, 3)
    cov = proj.cov2d
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        conics = np.stack([cov[:, 1, 1] / det, -cov[:, 0, 1] / det, cov[:, 0, 0] / det], -1)
    conics[~proj.keep] = 0.0
    offsets, ids = bin_tiles(proj.means2d, proj.radius, order, W, H)
    means2d = np.ascontiguousarray(np.where(proj.keep[:, None], proj.means2d, 0.0))
    color, alpha, zacc = composite(
        means2d, np.ascontiguousarray(conics), np.ascontiguousarray(rgb),
        np.ascontiguousarray(gaussians.opacities, dtype=float),
        np.ascontiguousarray(np.where(proj.keep, proj.depth, 0.0)),
        offsets, ids, W, H, TILE, threads)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(alpha > 0, zacc / alpha, 0.0)
    return RenderOutput(ImageBuffer(np.clip(color, 0.0, 1.0)), np.clip(alpha, 0.0, 1.0), depth)


def _as_array(img):
    return img.values if isinstance(img, ImageBuffer) else np.asarray(img, float)


def masked_mse(rendered, target, mask=None) -> float:
    """Mean squared channel difference over the masked pixels."""
    a = _as_array(rendered)
    b = _as_array(target)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    bits = np.ones(a.shape[:2], bool) if mask is None else np.asarray(getattr(mask, "bits", mask), bool)
    if bits.shape != a.shape[:2]:
        raise DimensionMismatchError("mask size differs from image")
    if not bits.any():
        raise EmptyMaskError("mask selects no pixels")
    d = (a - b)[bits]
    return float(np.mean(d * d))


def psnr(a, b, mask=None) -> float:
    """PSNR in dB for peak 1.0, capped at 100 dB for identical inputs."""
    mse = masked_mse(a, b, mask)
    if mse <= 10 ** (-PSNR_CAP / 10):
        return PSNR_CAP
    return float(10 * np.log10(1.0 / mse))


def photometric_loss(rendered, target, mask, lpips=None, lpips_weight=0.5) -> float:
    """Masked MSE plus an optional externally supplied perceptual term.

    ``lpips`` is a callable ``(masked_target, masked_render) -> float``; it is
    not provided by this package.
    """
    loss = masked_mse(rendered, target, mask)
    if lpips is not None:
        bits = np.asarray(getattr(mask, "bits", mask), bool)[..., None]
        loss += lpips_weight * float(lpips(_as_array(target) * bits, _as_array(rendered) * bits))
    return loss
