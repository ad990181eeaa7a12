"""Robust scale/shift alignment of relative depth to sparse metric depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import DepthMap
from .errors import DegenerateError, NoModelFoundError


@dataclass(frozen=True)
class SparseDepth:
    pixels: np.ndarray  # (N, 2) integer (u, v)
    depths: np.ndarray  # (N,)

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        d = np.asarray(self.depths, dtype=np.float64).reshape(-1)
        if len(p) != len(d):
            raise ValueError("pixels and depths differ in length")
        if not (np.isfinite(d).all() and (d > 0).all()):
            raise ValueError("sparse depths must be finite and positive")
        object.__setattr__(self, "pixels", p)
        object.__setattr__(self, "depths", d)

    def __len__(self):
        return len(self.depths)

    def check_bounds(self, width, height):
        u, v = self.pixels.T
        if ((u < 0) | (u >= width) | (v < 0) | (v >= height)).any():
            raise ValueError("sparse depth pixel outside the image")


@dataclass(frozen=True)
class ScaleShift:
    scale: float
    shift: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def inverse(self) -> "ScaleShift":
        return ScaleShift(1.0 / self.scale, -self.shift / self.scale)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 1000
    inlier_log_threshold: float = 0.05
    min_inliers: int | None = None  # None -> max(10, 20% of samples)
    seed: int = 0


def fit_scale_shift(pred, ref) -> ScaleShift:
    """Least-squares fit minimising ``sum (scale*pred + shift - ref)^2``.

    Raises :class:`DegenerateError` when all predictions coincide or the
    optimum flips depth ordering (scale <= 0).
    """
    x = np.asarray(pred, float)
    y = np.asarray(ref, float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pred and ref must be 1-D and equal length")
    if len(x) < 2:
        raise ValueError("need at least two samples")
    # centred normal equations of the 2x2 system
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = dx @ dx
    if not sxx > 1e-300 or np.ptp(x) == 0:
        raise DegenerateError("predicted values are all identical")
    s = (dx @ (y - ym)) / sxx
    if not s > 0:
        raise DegenerateError(f"fitted scale {s:.3g} is not positive")
    return ScaleShift(float(s), float(ym - s * xm))


def _sample_pairs(rng, n, k):
    i = rng.integers(0, n, size=k)
    j = rng.integers(0, n - 1, size=k)
    j = j + (j >= i)  # distinct second index
    return i, j


def ransac_scale_shift(pred_depth: DepthMap, sparse: SparseDepth, cfg: RansacConfig = RansacConfig()):
    """RANSAC over 2-sample exact fits, scored by log-depth inlier count.

    Returns ``(ScaleShift, inlier_flags)`` where ``inlier_flags`` is aligned
    with ``sparse`` (samples with invalid predictions are never inliers).
    """
    sparse.check_bounds(pred_depth.width, pred_depth.height)
    u, v = sparse.pixels.T
    usable = pred_depth.valid[v, u]
    idx = np.flatnonzero(usable)
    if len(idx) < 2:
        raise ValueError("too few sparse samples with valid predicted depth")
    x = pred_depth.values[v[idx], u[idx]]
    y = sparse.depths[idx]
    log_y = np.log(y)
    n = len(idx)
    min_inl = cfg.min_inliers if cfg.min_inliers is not None else max(10, int(np.ceil(0.2 * len(sparse))))
    thr = cfg.inlier_log_threshold

    rng = np.random.default_rng(cfg.seed)
    i, j = _sample_pairs(rng, n, cfg.iterations)
    dx = x[j] - x[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (y[j] - y[i]) / dx
    t = y[i] - s * x[i]
    ok = (dx != 0) & np.isfinite(s) & (s > 0)

    best = None  # (count, residual sum, hypothesis index)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, cfg.iterations, chunk):
        sl = slice(start, min(start + chunk, cfg.iterations))
        z = s[sl, None] * x[None, :] + t[sl, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(np.log(z) - log_y[None, :])
        inl = (z > 0) & (r < thr)
        inl &= ok[sl, None]
        cnt = inl.sum(axis=1)
        rsum = np.where(inl, r, 0.0).sum(axis=1)
        cand = np.flatnonzero(cnt >= min_inl)
        if len(cand):
            k = cand[np.lexsort((cand, rsum[cand], -cnt[cand]))[0]]
            key = (-int(cnt[k]), float(rsum[k]), start + int(k))
            if best is None or key < best:
                best = key
    if best is None:
        raise NoModelFoundError("no hypothesis reached the minimum inlier count")

    k = best[2]
    z = s[k] * x + t[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        inl = (z > 0) & (np.abs(np.log(z) - log_y) < thr)
    try:
        model = fit_scale_shift(x[inl], y[inl])
    except DegenerateError:
        model = ScaleShift(float(s[k]), float(t[k]))
    flags = np.zeros(len(sparse), dtype=bool)
    flags[idx[inl]] = True
    return model, flags


def apply_scale_shift(pred_depth: DepthMap, ss: ScaleShift) -> DepthMap:
    out = ss.scale * pred_depth.values + ss.shift
    return DepthMap(out, pred_depth.valid & (out > 0))
