"""Weighted least-squares scale + translation alignment of predicted Gaussians."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .camera import PointMap
from .errors import DegenerateError, DimensionMismatchError
from .gaussians import GaussianSet
from .visibility import SKY_CUTOFF, ViewRecord, log_depth_residual

GAMMA = 10.0
REJECT_THRESHOLD = 0.5
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class AlignmentWeights:
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.values, float)
        if w.ndim != 2 or not (np.isfinite(w).all() and (w >= 0).all() and (w <= 1).all()):
            raise ValueError("alignment weights must be a 2-D raster in [0, 1]")
        object.__setattr__(self, "values", w)


@dataclass(frozen=True)
class SimScaleTranslation:
    a: float
    b: np.ndarray

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", np.asarray(self.b, float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(1.0, np.zeros(3))

    def apply(self, points):
        return self.a * np.asarray(points, float) + self.b


def consistency_weights(v1: ViewRecord, v2: ViewRecord, gamma=GAMMA, sky_cutoff=SKY_CUTOFF):
    """``exp(-gamma * |log-depth residual|)`` per view; 0 on sky or failed warps."""

    def one(src, dst):
        res, valid = log_depth_residual(src, dst)
        w = np.exp(-gamma * res.values[..., 0])
        return AlignmentWeights(np.where(valid.bits & src.non_sky(sky_cutoff), w, 0.0))

    return one(v1, v2), one(v2, v1)


def _stack(pred: Sequence[PointMap], ref: Sequence[PointMap], weights: Sequence[AlignmentWeights]):
    if not (len(pred) == len(ref) == len(weights)):
        raise DimensionMismatchError("pred, ref and weights must list the same views")
    P, Q, W = [], [], []
    for p, q, w in zip(pred, ref, weights):
        if not (p.shape == q.shape == w.values.shape):
            raise DimensionMismatchError("point maps and weights differ in size")
        m = p.valid & q.valid & (w.values > 0)
        P.append(p.points[m])
        Q.append(q.points[m])
        W.append(w.values[m])
    return np.concatenate(P), np.concatenate(Q), np.concatenate(W)


def solve_scale_translation(P, Q, W) -> SimScaleTranslation:
    """Minimise ``sum W ||a P + b - Q||^2`` over scale ``a`` and translation ``b``.

    Works on weighted-centroid-centred points, where the 4x4 normal matrix
    decouples into a scalar for ``a`` and ``sum(W) * I`` for ``b``.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    W = np.asarray(W, float)
    sw = W.sum()
    if not sw > 0:
        raise DegenerateError("total weight is zero")
    pbar = W @ P / sw
    qbar = W @ Q / sw
    Pc = P - pbar
    Qc = Q - qbar
    spp = float(np.einsum("i,ij,ij->", W, Pc, Pc))
    spq = float(np.einsum("i,ij,ij->", W, Pc, Qc))
    # condition number of the centred normal matrix diag(spp, sw, sw, sw)
    hi, lo = max(spp, sw), min(spp, sw)
    if not lo > 0 or hi / lo > MAX_CONDITION:
        raise DegenerateError("normal matrix is singular or ill-conditioned")
    a = spq / spp
    if not a > 0:
        raise DegenerateError(f"estimated scale {a:.3g} is not positive")
    return SimScaleTranslation(a, qbar - a * pbar)


def wls_scale_translation(pred: Sequence[PointMap], ref: Sequence[PointMap],
                          weights: Sequence[AlignmentWeights]) -> SimScaleTranslation:
    return solve_scale_translation(*_stack(pred, ref, weights))


def weighted_objective(P, Q, W, t: SimScaleTranslation) -> float:
    r = t.apply(P) - Q
    return float(W @ np.einsum("ij,ij->i", r, r))


def alignment_residual(pred: Sequence[PointMap], ref: Sequence[PointMap],
                       weights: Sequence[AlignmentWeights], t: SimScaleTranslation) -> float:
    """Weighted squared error per unit weight."""
    P, Q, W = _stack(pred, ref, weights)
    sw = W.sum()
    if not sw > 0:
        raise DegenerateError("total weight is zero")
    return weighted_objective(P, Q, W, t) / sw


def should_reject(residual: float, threshold=REJECT_THRESHOLD) -> bool:
    return bool(residual > threshold)


def apply_alignment(g: GaussianSet, t: SimScaleTranslation) -> GaussianSet:
    return replace(g, means=t.apply(g.means), scales=t.a * g.scales)
