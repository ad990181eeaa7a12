"""Cross-view depth consistency: visibility masks, coverage and view mining."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .camera import DepthMap, ImageBuffer, PinholeCamera, depth_to_points, pose_distance_angle, project_points
from .errors import DegenerateError, DimensionMismatchError

DELTA = 0.05
COVERAGE_THRESHOLD = 0.5
VISIBILITY_THRESHOLD = 0.9
SKY_CUTOFF = 0.5
_ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class VisibilityMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise DimensionMismatchError("mask must be 2-D")
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def shape(self):
        return self.bits.shape

    def fraction(self, domain=None) -> float:
        if domain is None:
            return float(self.bits.mean())
        n = int(domain.sum())
        if n == 0:
            raise DegenerateError("empty pixel domain")
        return float((self.bits & domain).sum() / n)


@dataclass(frozen=True)
class SkyProbability:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatchError("sky probability must be 2-D")
        if not (np.isfinite(v).all() and (v >= 0).all() and (v <= 1).all()):
            raise ValueError("sky probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape))

    def sky(self, cutoff=SKY_CUTOFF):
        return self.values >= cutoff


@dataclass(frozen=True)
class ViewRecord:
    id: Hashable
    camera: PinholeCamera
    depth: DepthMap
    sky: SkyProbability = None

    def __post_init__(self):
        if self.sky is None:
            object.__setattr__(self, "sky", SkyProbability.zeros(self.camera.shape))
        if self.depth.shape != self.camera.shape or self.sky.values.shape != self.camera.shape:
            raise DimensionMismatchError(f"view {self.id!r}: raster sizes differ from camera")

    def non_sky(self, cutoff=SKY_CUTOFF):
        return ~self.sky.sky(cutoff)


@dataclass(frozen=True)
class ViewSet:
    context_ids: tuple
    target_ids: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.context_ids) != 2 or self.context_ids[0] == self.context_ids[1]:
            raise ValueError("a view set needs exactly two distinct context views")
        if set(self.target_ids) & set(self.context_ids):
            raise ValueError("targets must be disjoint from contexts")


def log_depth_residual(src: ViewRecord, dst: ViewRecord):
    """Warp ``src`` depth into ``dst`` and compare log depths on the src grid.

    Returns ``(residual, valid)``; residual is 0 wherever ``valid`` is False.
    The destination depth is sampled nearest-neighbour at the warped point.
    """
    pts = depth_to_points(src.camera, src.depth)
    pix, z = project_points(dst.camera, pts.points)
    H, W = dst.camera.shape
    valid = pts.valid & (z > 1e-9) & np.isfinite(pix).all(axis=-1)
    with np.errstate(invalid="ignore"):
        iu = np.floor(np.where(valid, pix[..., 0], -1)).astype(np.int64)
        iv = np.floor(np.where(valid, pix[..., 1], -1)).astype(np.int64)
    valid &= (iu >= 0) & (iu < W) & (iv >= 0) & (iv < H)
    iu = np.where(valid, iu, 0)
    iv = np.where(valid, iv, 0)
    valid &= dst.depth.valid[iv, iu]
    sampled = dst.depth.values[iv, iu]
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.where(valid, np.abs(np.log(np.where(valid, sampled, 1.0)) - np.log(np.where(valid, z, 1.0))), 0.0)
    return ImageBuffer(res), VisibilityMask(valid)


def consistent_pixels(src: ViewRecord, dst: ViewRecord, delta=DELTA) -> np.ndarray:
    res, valid = log_depth_residual(src, dst)
    return valid.bits & (res.values[..., 0] < delta)


def visibility_mask(target: ViewRecord, contexts: Sequence[ViewRecord], delta=DELTA) -> VisibilityMask:
    """1 where some context sees the target pixel's surface consistently."""
    if not contexts:
        raise ValueError("at least one context view is required")
    bits = np.zeros(target.camera.shape, dtype=bool)
    for ctx in contexts:
        bits |= consistent_pixels(target, ctx, delta)
    return VisibilityMask(bits)


def extend_with_sky(mask: VisibilityMask, sky: SkyProbability, cutoff=SKY_CUTOFF) -> VisibilityMask:
    if mask.shape != sky.values.shape:
        raise DimensionMismatchError("mask and sky map sizes differ")
    return VisibilityMask(mask.bits | sky.sky(cutoff))


def coverage(a: ViewRecord, b: ViewRecord, delta=DELTA, sky_cutoff=SKY_CUTOFF) -> float:
    """Fraction of a's non-sky pixels whose surface is consistently seen by b."""
    domain = a.non_sky(sky_cutoff)
    n = int(domain.sum())
    if n == 0:
        raise DegenerateError(f"view {a.id!r} has no non-sky pixels")
    hit = consistent_pixels(a, b, delta) & domain
    return float(hit.sum()) / n


def symmetric_coverage(a: ViewRecord, b: ViewRecord, delta=DELTA, sky_cutoff=SKY_CUTOFF) -> float:
    return min(coverage(a, b, delta, sky_cutoff), coverage(b, a, delta, sky_cutoff))


def rank_context_partners(views: Sequence[ViewRecord], seed_id, delta=DELTA,
                          cov_threshold=COVERAGE_THRESHOLD, sky_cutoff=SKY_CUTOFF):
    """``[(other_id, coverage)]`` above threshold, best first, ties by id."""
    by_id = {v.id: v for v in views}
    if seed_id not in by_id:
        raise KeyError(f"seed view {seed_id!r} not found")
    seed = by_id[seed_id]
    scored = []
    for v in views:
        if v.id == seed_id:
            continue
        c = symmetric_coverage(seed, v, delta, sky_cutoff)
        if c > cov_threshold:
            scored.append((v.id, c))
    scored.sort(key=lambda ic: (-ic[1], ic[0]))
    return scored


def select_context_pairs(views: Sequence[ViewRecord], seed_id, delta=DELTA,
                         cov_threshold=COVERAGE_THRESHOLD, sky_cutoff=SKY_CUTOFF):
    ranked = rank_context_partners(views, seed_id, delta, cov_threshold, sky_cutoff)
    return [(seed_id, vid) for vid, _ in ranked]


def is_interpolated(ctx1: PinholeCamera, ctx2: PinholeCamera, cand: PinholeCamera) -> bool:
    """Candidate lies between the contexts in both position and orientation."""
    d12, t12 = pose_distance_angle(ctx1, ctx2)
    if d12 <= 1e-12:
        raise DegenerateError("context cameras share the same center")
    d1j, t1j = pose_distance_angle(ctx1, cand)
    dj2, tj2 = pose_distance_angle(cand, ctx2)
    if t12 <= _ANGLE_EPS:
        # equal context orientations: only an equally oriented candidate is "between"
        angles_ok = t1j <= _ANGLE_EPS and tj2 <= _ANGLE_EPS
    else:
        angles_ok = t1j < t12 and tj2 < t12
    return d1j < d12 and dj2 < d12 and angles_ok


def select_targets(ctx1: ViewRecord, ctx2: ViewRecord, candidates: Sequence[ViewRecord],
                   delta=DELTA, vis_threshold=VISIBILITY_THRESHOLD, sky_cutoff=SKY_CUTOFF):
    if ctx1.id == ctx2.id:
        raise ValueError("context views must differ")
    if pose_distance_angle(ctx1.camera, ctx2.camera)[0] <= 1e-12:
        raise DegenerateError("context cameras share the same center")
    out = []
    for cand in candidates:
        if cand.id in (ctx1.id, ctx2.id):
            continue
        if not is_interpolated(ctx1.camera, ctx2.camera, cand.camera):
            continue
        mask = visibility_mask(cand, [ctx1, ctx2], delta)
        domain = cand.non_sky(sky_cutoff)
        if not domain.any():
            continue
        if mask.fraction(domain) >= vis_threshold:
            out.append(cand.id)
    return out


def mine_view_sets(views: Sequence[ViewRecord], seed_id, delta=DELTA, cov_threshold=COVERAGE_THRESHOLD,
                   vis_threshold=VISIBILITY_THRESHOLD, sky_cutoff=SKY_CUTOFF):
    """Full mining pass for one seed: every qualifying context pair with its targets."""
    by_id = {v.id: v for v in views}
    sets = []
    a = seed_id
    for b, cov in rank_context_partners(views, seed_id, delta, cov_threshold, sky_cutoff):
        rest = [v for v in views if v.id not in (a, b)]
        try:
            targets = select_targets(by_id[a], by_id[b], rest, delta, vis_threshold, sky_cutoff)
        except DegenerateError:
            targets = []
        sets.append((ViewSet((a, b), targets), cov))
    return sets
