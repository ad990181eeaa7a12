"""Pixel-aligned Gaussian construction and appearance-conditioned colors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .camera import DepthMap, RayMap, ray_points
from .errors import DimensionMismatchError
from .sh import degree_from_coeffs, num_coeffs

EMBEDDING_DIM = 32
DEFAULT_SH_DEGREE = 1
MIN_SCALE = 1e-6
SCALE_CAP_FRACTION = 0.1
ACTIVATIONS = ("identity", "relu")


@dataclass(frozen=True)
class GaussianSet:
    """Primitives stored as parallel arrays.

    ``rotations`` are unit quaternions ``(w, x, y, z)``; ``sh`` has shape
    ``(N, K, 3)`` with ``K = (degree + 1) ** 2``.
    """

    means: np.ndarray
    opacities: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.means, float).reshape(-1, 3)
        n = len(mu)
        a = np.asarray(self.opacities, float).reshape(n)
        r = np.asarray(self.rotations, float).reshape(n, 4)
        s = np.asarray(self.scales, float).reshape(n, 3)
        sh = np.asarray(self.sh, float)
        if sh.ndim != 3 or sh.shape[0] != n or sh.shape[2] != 3:
            raise DimensionMismatchError("sh must be (N, K, 3)")
        degree_from_coeffs(sh.shape[1])
        if n:
            if not ((a > 0) & (a < 1)).all():
                raise ValueError("opacities must lie in (0, 1)")
            if np.abs(np.linalg.norm(r, axis=1) - 1).max() > 1e-6:
                raise ValueError("rotations must be unit quaternions")
            if not (s > 0).all():
                raise ValueError("scales must be positive")
            if not all(np.isfinite(x).all() for x in (mu, sh)):
                raise ValueError("non-finite Gaussian parameters")
        for name, val in (("means", mu), ("opacities", a), ("rotations", r), ("scales", s), ("sh", sh)):
            object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.means)

    @property
    def sh_degree(self) -> int:
        return degree_from_coeffs(self.sh.shape[1])

    @classmethod
    def empty(cls, sh_degree=DEFAULT_SH_DEGREE):
        k = num_coeffs(sh_degree)
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros((0, k, 3)))

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        if not sets:
            return cls.empty()
        if len({s.sh.shape[1] for s in sets}) != 1:
            raise DimensionMismatchError("cannot concatenate sets of different SH degree")
        return cls(*(np.concatenate([getattr(s, f) for s in sets])
                     for f in ("means", "opacities", "rotations", "scales", "sh")))

    def with_sh(self, sh) -> "GaussianSet":
        return replace(self, sh=sh)


@dataclass(frozen=True)
class RawHeadOutputs:
    """Per-pixel pre-activation head outputs for one view."""

    opacity_logit: np.ndarray  # (H, W)
    rotation_raw: np.ndarray  # (H, W, 4)
    scale_log: np.ndarray  # (H, W, 3)
    depth_offset: np.ndarray  # (H, W)
    features: np.ndarray  # (H, W, d_l)

    def __post_init__(self):
        a = np.asarray(self.opacity_logit, float)
        H, W = a.shape
        shapes = {"rotation_raw": (H, W, 4), "scale_log": (H, W, 3), "depth_offset": (H, W)}
        for name, shp in shapes.items():
            v = np.asarray(getattr(self, name), float)
            if v.shape != shp:
                raise DimensionMismatchError(f"{name} has shape {v.shape}, expected {shp}")
            object.__setattr__(self, name, v)
        f = np.asarray(self.features, float)
        if f.ndim != 3 or f.shape[:2] != (H, W) or f.shape[2] < 1:
            raise DimensionMismatchError("features must be (H, W, d_l) with d_l >= 1")
        object.__setattr__(self, "opacity_logit", a)
        object.__setattr__(self, "features", f)

    @property
    def shape(self):
        return self.opacity_logit.shape

    def geometry_raster(self) -> np.ndarray:
        """Opacity, rotation, scale and offset packed as a 9-channel raster."""
        return np.concatenate([self.opacity_logit[..., None], self.rotation_raw,
                               self.scale_log, self.depth_offset[..., None]], axis=-1)

    @classmethod
    def from_rasters(cls, geometry, features):
        g = np.asarray(geometry, float)
        if g.ndim != 3 or g.shape[2] != 9:
            raise DimensionMismatchError("geometry raster must have 9 channels")
        return cls(g[..., 0], g[..., 1:5], g[..., 5:8], g[..., 8], features)


@dataclass(frozen=True)
class AppearanceEmbedding:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float).reshape(-1)
        if not np.isfinite(v).all():
            raise ValueError("embedding must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return len(self.values)


@dataclass(frozen=True)
class ConvLayer:
    kernel: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)
    padding: int | None = None  # None -> same padding

    def __post_init__(self):
        k = np.asarray(self.kernel, float)
        b = np.asarray(self.bias, float).reshape(-1)
        if k.ndim != 4 or k.shape[2] != k.shape[3] or k.shape[0] != len(b):
            raise DimensionMismatchError("kernel must be (out, in, k, k) with matching bias")
        pad = k.shape[2] // 2 if self.padding is None else int(self.padding)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "padding", pad)

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def size(self):
        return self.kernel.shape[2]


@dataclass(frozen=True)
class ConvHeadWeights:
    layer1: ConvLayer
    layer2: ConvLayer
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.layer1.out_channels != self.layer2.in_channels:
            raise DimensionMismatchError("layer widths do not chain")
        if self.layer2.out_channels % 3:
            raise DimensionMismatchError("output channels must be 3 * SH coefficient count")
        degree_from_coeffs(self.layer2.out_channels // 3)

    @property
    def sh_degree(self):
        return degree_from_coeffs(self.layer2.out_channels // 3)

    @classmethod
    def identity_equivalent(cls, d_l, d_g=EMBEDDING_DIM, sh_degree=DEFAULT_SH_DEGREE, size=3):
        """Head whose SH DC output equals feature channels 0..2 exactly.

        The hidden layer carries ``[f, -f]`` so the ReLU passes both signs.
        """
        if d_l < 3:
            raise ValueError("identity head needs at least three feature channels")
        c = size // 2
        k1 = np.zeros((6, d_l + d_g, size, size))
        for ch in range(3):
            k1[ch, ch, c, c] = 1.0
            k1[3 + ch, ch, c, c] = -1.0
        k2 = np.zeros((3 * num_coeffs(sh_degree), 6, size, size))
        for ch in range(3):
            k2[ch, ch, c, c] = 1.0
            k2[ch, 3 + ch, c, c] = -1.0
        return cls(ConvLayer(k1, np.zeros(6)), ConvLayer(k2, np.zeros(len(k2))), "relu")

    @classmethod
    def random(cls, d_l, d_g=EMBEDDING_DIM, sh_degree=DEFAULT_SH_DEGREE, hidden=16, size=3,
               activation="relu", seed=0, std=0.1):
        rng = np.random.default_rng(seed)
        out = 3 * num_coeffs(sh_degree)
        l1 = ConvLayer(rng.normal(0, std, (hidden, d_l + d_g, size, size)), rng.normal(0, std, hidden))
        l2 = ConvLayer(rng.normal(0, std, (out, hidden, size, size)), rng.normal(0, std, out))
        return cls(l1, l2, activation)


def activate_params(raw: RawHeadOutputs, scale_cap=np.inf):
    """Map raw head outputs to ``(opacity, unit quaternion, scale)`` rasters."""
    alpha = 1.0 / (1.0 + np.exp(-raw.opacity_logit))
    q = raw.rotation_raw
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    ident = np.zeros_like(q)
    ident[..., 0] = 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rot = np.where(n > 0, q / np.where(n > 0, n, 1.0), ident)
    scale = np.clip(np.exp(raw.scale_log), MIN_SCALE, max(scale_cap, MIN_SCALE))
    return alpha, rot, scale


def conv2d_forward(x, layer: ConvLayer) -> np.ndarray:
    """Stride-1 cross-correlation of an ``(H, W, C_in)`` raster, zero padded."""
    x = np.asarray(x, float)
    if x.ndim != 3 or x.shape[2] != layer.in_channels:
        raise DimensionMismatchError(f"input has {x.shape[-1]} channels, layer expects {layer.in_channels}")
    k, p = layer.size, layer.padding
    H, W = x.shape[:2]
    Ho, Wo = H + 2 * p - k + 1, W + 2 * p - k + 1
    if Ho <= 0 or Wo <= 0:
        raise DimensionMismatchError("kernel larger than padded input")
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    out = np.empty((Ho, Wo, layer.out_channels))
    out[:] = layer.bias
    for dy in range(k):
        for dx in range(k):
            out += xp[dy:dy + Ho, dx:dx + Wo, :] @ layer.kernel[:, :, dy, dx].T
    return out


def appearance_head(features, embedding: AppearanceEmbedding, weights: ConvHeadWeights) -> np.ndarray:
    """SH raster ``(H, W, K*3)`` from features concatenated with the broadcast embedding.

    Channel ``k * 3 + c`` holds coefficient ``k`` of color channel ``c``.
    """
    f = np.asarray(features, float)
    if f.ndim != 3:
        raise DimensionMismatchError("features must be (H, W, d_l)")
    if f.shape[2] + embedding.dim != weights.layer1.in_channels:
        raise DimensionMismatchError(
            f"features ({f.shape[2]}) + embedding ({embedding.dim}) != head input ({weights.layer1.in_channels})")
    e = np.broadcast_to(embedding.values, f.shape[:2] + (embedding.dim,))
    h = conv2d_forward(np.concatenate([f, e], axis=-1), weights.layer1)
    if weights.activation == "relu":
        h = np.maximum(h, 0.0)
    return conv2d_forward(h, weights.layer2)


def interpolate_embedding(e1: AppearanceEmbedding, e2: AppearanceEmbedding, t: float) -> AppearanceEmbedding:
    if e1.dim != e2.dim:
        raise DimensionMismatchError("embeddings differ in dimension")
    return AppearanceEmbedding((1.0 - t) * e1.values + t * e2.values)


def assemble_gaussians(rays: RayMap, depth: DepthMap, raw: RawHeadOutputs, sh_raster) -> GaussianSet:
    """One primitive per valid pixel, in row-major pixel order."""
    sh_raster = np.asarray(sh_raster, float)
    if not (rays.shape == depth.shape == raw.shape == sh_raster.shape[:2]):
        raise DimensionMismatchError("ray, depth, head and SH rasters differ in size")
    if sh_raster.shape[2] % 3:
        raise DimensionMismatchError("SH raster channels must be a multiple of 3")
    pts = ray_points(rays, depth, raw.depth_offset)
    valid = pts.valid
    mu = pts.points[valid]
    cap = np.inf
    if len(mu):
        cap = SCALE_CAP_FRACTION * float(np.linalg.norm(mu.max(0) - mu.min(0)))
        cap = cap if cap > 0 else np.inf
    alpha, rot, scale = activate_params(raw, cap)
    k = sh_raster.shape[2] // 3
    sh = sh_raster[valid].reshape(-1, k, 3)
    # sigmoid saturates to exactly 0/1 in float64 for |logit| > ~37
    a = np.clip(alpha[valid], 1e-12, 1 - 1e-12)
    return GaussianSet(mu, a, rot[valid], scale[valid], sh)


def build_view_gaussians(rays: RayMap, depth: DepthMap, raw: RawHeadOutputs,
                         embedding: AppearanceEmbedding, weights: ConvHeadWeights) -> GaussianSet:
    return assemble_gaussians(rays, depth, raw, appearance_head(raw.features, embedding, weights))
