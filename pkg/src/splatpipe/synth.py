"""Deterministic synthetic scenes standing in for trained networks and real photos.

A scene is a ground-truth :class:`GaussianSet` (a textured backdrop wall plus
foreground blobs) seen by cameras on a jittered arc. For every view the
generator writes what the rest of the pipeline consumes:

* ``render_v<k>.wsrf`` / ``image_v<k>.png``: ground-truth renders per lighting variant;
* ``depth.wsrf``: aligned (metric) z-depth, 0 where nothing was hit;
* ``sky.wsrf``: ``1 - accumulated alpha``;
* ``mono_depth.wsrf`` + ``sparse.txt``: affinely distorted depth and sparse
  samples (with outliers) for ``align-depth``;
* ``rays.wsrf``, ``pred_depth.wsrf``, ``head.wsrf``, ``features.wsrf``: the
  stand-in network outputs, expressed in a "model frame" related to the world
  by ``world = model_scale * model + model_shift``.

Camera 0 is the world origin with identity rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .camera import DepthMap, PinholeCamera, RayMap, z_depth_to_range
from .depth_align import SparseDepth
from .gaussians import EMBEDDING_DIM, AppearanceEmbedding, ConvHeadWeights, GaussianSet
from .render import rasterize
from .sh import C0, num_coeffs, rgb_to_dc

MIN_RENDER_ALPHA = 0.5


@dataclass
class SynthConfig:
    n_gaussians: int = 500
    n_views: int = 4
    width: int = 256
    height: int = 256
    seed: int = 0
    n_variants: int = 2
    fov_deg: float = 50.0
    arc_deg: float = 16.0
    sh_degree: int = 1
    feature_dim: int = 8
    embedding_dim: int = EMBEDDING_DIM
    model_scale: float = 2.5
    model_shift: tuple = (0.3, -0.2, 0.1)
    splat_sigma_px: float = 0.5
    splat_opacity: float = 0.97
    sparse_samples: int = 400
    sparse_outlier_fraction: float = 0.1
    # identical poses for every view (coverage 1.0 between all of them)
    identical_poses: bool = False

    def validate(self):
        if self.n_gaussians < 1:
            raise ValueError("n_gaussians must be >= 1")
        if self.n_views < 2:
            raise ValueError("n_views must be >= 2")
        if self.width < 8 or self.height < 8:
            raise ValueError("image must be at least 8x8")
        if self.n_variants < 1:
            raise ValueError("need at least one lighting variant")
        if self.feature_dim < 3:
            raise ValueError("feature_dim must be >= 3")


@dataclass
class SyntheticScene:
    gaussians: GaussianSet
    cameras: list
    renders: list  # [view][variant] -> (H, W, 3)
    depths: list  # z-depth rasters, 0 = invalid
    sky: list
    tints: np.ndarray  # (n_variants, 3)
    embeddings: list
    config: SynthConfig = field(default_factory=SynthConfig)


def scene_gaussians(cfg: SynthConfig, rng) -> GaussianSet:
    k = num_coeffs(cfg.sh_degree)
    n_wall = max(1, int(round(0.6 * cfg.n_gaussians)))
    n_obj = cfg.n_gaussians - n_wall
    ny = max(1, int(round(np.sqrt(n_wall * 0.6))))
    nx = int(np.ceil(n_wall / ny))
    gx, gy = np.meshgrid(np.linspace(-5.0, 5.0, nx), np.linspace(-1.8, 3.8, ny))
    wall_xy = np.stack([gx.ravel(), gy.ravel()], -1)[:n_wall]
    spacing = max(10.0 / max(nx - 1, 1), 5.6 / max(ny - 1, 1))
    wall_xy = wall_xy + rng.uniform(-0.15, 0.15, wall_xy.shape) * spacing
    wall_z = 7.0 + 0.15 * wall_xy[:, 0] + rng.normal(0, 0.02, n_wall)
    wall_mu = np.column_stack([wall_xy, wall_z])
    wall_s = np.column_stack([np.full(n_wall, 0.75 * spacing), np.full(n_wall, 0.75 * spacing),
                              np.full(n_wall, 0.03)])
    u = (wall_xy[:, 0] + 5) / 10
    v = (wall_xy[:, 1] + 1.8) / 5.6
    wall_rgb = np.column_stack([0.35 + 0.4 * u, 0.3 + 0.35 * v, 0.65 - 0.3 * u])
    wall_rgb += rng.normal(0, 0.03, wall_rgb.shape)
    wall_a = rng.uniform(0.9, 0.99, n_wall)

    n_clusters = 4
    centers = np.array([[-1.2, 0.6, 6.0], [0.9, 1.1, 6.2], [0.1, -0.3, 6.4], [1.8, 0.0, 5.8]])
    base = np.array([[0.85, 0.3, 0.25], [0.25, 0.75, 0.35], [0.9, 0.8, 0.2], [0.3, 0.4, 0.9]])
    lab = np.arange(n_obj) % n_clusters
    obj_mu = centers[lab] + rng.normal(0, 0.3, (n_obj, 3)) * [1, 1, 0.5]
    obj_s = rng.uniform(0.08, 0.2, (n_obj, 3))
    obj_rgb = np.clip(base[lab] + rng.normal(0, 0.05, (n_obj, 3)), 0.02, 0.98)
    obj_a = rng.uniform(0.93, 0.99, n_obj)

    mu = np.vstack([wall_mu, obj_mu])
    s = np.vstack([wall_s, obj_s])
    rgb = np.clip(np.vstack([wall_rgb, obj_rgb]), 0.02, 0.98)
    q = np.zeros((cfg.n_gaussians, 4))
    q[:, 0] = 1.0
    q[n_wall:] = rng.normal(0, 1, (n_obj, 4))
    q[n_wall:] /= np.linalg.norm(q[n_wall:], axis=1, keepdims=True)
    sh = np.zeros((cfg.n_gaussians, k, 3))
    sh[:, 0, :] = rgb_to_dc(rgb)
    return GaussianSet(mu, np.concatenate([wall_a, obj_a]), q, s, sh)


def ring_cameras(cfg: SynthConfig, rng) -> list:
    f = 0.5 * cfg.width / np.tan(np.deg2rad(cfg.fov_deg) / 2)
    intr = dict(fx=f, fy=f, cx=cfg.width / 2, cy=cfg.height / 2, width=cfg.width, height=cfg.height)
    cams = [PinholeCamera(**intr)]
    pivot = np.array([0.0, 0.0, 5.0])
    radius = 5.0
    angles = np.linspace(0.0, np.deg2rad(cfg.arc_deg), cfg.n_views)
    for i in range(1, cfg.n_views):
        if cfg.identical_poses:
            cams.append(PinholeCamera(**intr))
            continue
        phi = angles[i] + rng.uniform(-0.15, 0.15) * np.deg2rad(cfg.arc_deg) / cfg.n_views
        eye = pivot + radius * np.array([np.sin(phi), 0.0, -np.cos(phi)])
        eye[1] += rng.uniform(-0.05, 0.05)
        target = pivot + rng.uniform(-0.05, 0.05, 3)
        cams.append(PinholeCamera.look_at(eye, target, [0, -1, 0], **intr))
    return cams


def tint_gaussians(g: GaussianSet, tint) -> GaussianSet:
    """Scale the DC color of every primitive by ``tint`` (per channel)."""
    sh = g.sh.copy()
    tint = np.asarray(tint, float)
    # same as (tint * (0.5 + C0 * dc) - 0.5) / C0, but exact for tint == 1
    sh[:, 0, :] = tint * sh[:, 0, :] + (tint - 1.0) * (0.5 / C0)
    return g.with_sh(sh)


def make_scene(cfg: SynthConfig, threads=None) -> SyntheticScene:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    g = scene_gaussians(cfg, rng)
    cams = ring_cameras(cfg, rng)
    tints = np.ones((cfg.n_variants, 3))
    if cfg.n_variants > 1:
        tints[1:] = rng.uniform(0.55, 1.25, (cfg.n_variants - 1, 3))
    embs = [AppearanceEmbedding(rng.normal(0, 1, cfg.embedding_dim)) for _ in range(cfg.n_variants)]
    variants = [tint_gaussians(g, t) for t in tints]
    renders, depths, skies = [], [], []
    for cam in cams:
        per = []
        for k, gv in enumerate(variants):
            out = rasterize(gv, cam, threads=threads)
            per.append(out.color.values)
            if k == 0:
                hit = out.accum_alpha >= MIN_RENDER_ALPHA
                depths.append(np.where(hit, out.expected_depth, 0.0))
                skies.append(np.clip(1.0 - out.accum_alpha, 0.0, 1.0))
        renders.append(per)
    return SyntheticScene(g, cams, renders, depths, skies, tints, embs, cfg)


def model_outputs(cfg: SynthConfig, cam: PinholeCamera, depth, rgb, rng):
    """Stand-in network outputs for one view, in the model frame."""
    a = cfg.model_scale
    b = np.asarray(cfg.model_shift, float)
    rays = RayMap.from_camera(cam)
    origins = (rays.origins - b) / a
    dm = DepthMap.from_array(depth)
    rng_depth = z_depth_to_range(cam, dm).filled(0.0) / a
    H, W = depth.shape
    z_model = np.where(depth > 0, depth, 1.0) / a
    head = np.zeros((H, W, 9))
    head[..., 0] = np.log(cfg.splat_opacity / (1 - cfg.splat_opacity))
    head[..., 1] = 1.0
    head[..., 5:8] = np.log(cfg.splat_sigma_px * z_model / cam.fx)[..., None]
    feats = np.empty((H, W, cfg.feature_dim))
    feats[..., :3] = rgb_to_dc(rgb)
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    for c in range(3, cfg.feature_dim):
        fx, fy, ph = rng.uniform(1, 6, 3)
        feats[..., c] = np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    return np.concatenate([origins, rays.directions], -1), rng_depth, head, feats


def sparse_samples(cfg: SynthConfig, depth, rng) -> SparseDepth:
    vv, uu = np.nonzero(depth > 0)
    n = min(cfg.sparse_samples, len(uu))
    pick = rng.choice(len(uu), size=n, replace=False)
    d = depth[vv[pick], uu[pick]].copy()
    n_out = int(round(cfg.sparse_outlier_fraction * n))
    d[:n_out] *= rng.uniform(2.0, 5.0, n_out)
    return SparseDepth(np.column_stack([uu[pick], vv[pick]]), d)


def write_scene(out_dir, cfg: SynthConfig, threads=None) -> Path:
    """Generate a scene and write it under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = make_scene(cfg, threads)
    rng = np.random.default_rng([cfg.seed, 1])
    io.write_gaussians(out / "gt.wsgs", scene.gaussians)
    io.write_embeddings(out / "embeddings.wsem", scene.embeddings)
    io.write_weights(out / "head_identity.wscw",
                     ConvHeadWeights.identity_equivalent(cfg.feature_dim, cfg.embedding_dim, cfg.sh_degree))
    entries = []
    for i, cam in enumerate(scene.cameras):
        vid = str(i)
        vdir = out / f"view_{vid}"
        vdir.mkdir(exist_ok=True)
        rel = lambda name: f"view_{vid}/{name}"  # noqa: E731
        files = {}
        for k, img in enumerate(scene.renders[i]):
            io.write_raster(vdir / f"render_v{k}.wsrf", img)
            io.write_png(vdir / f"image_v{k}.png", img)
        files["image"] = rel("image_v0.png")
        depth = scene.depths[i]
        io.write_raster(vdir / "depth.wsrf", depth)
        files["depth"] = rel("depth.wsrf")
        io.write_raster(vdir / "sky.wsrf", scene.sky[i])
        files["sky"] = rel("sky.wsrf")
        # relative depth that align-depth must map back to metric depth
        mscale, mshift = rng.uniform(0.3, 0.8), rng.uniform(-0.5, 0.5)
        mono = np.where(depth > 0, (depth - mshift) / mscale, 0.0)
        io.write_raster(vdir / "mono_depth.wsrf", mono)
        files["mono_depth"] = rel("mono_depth.wsrf")
        io.write_sparse(vdir / "sparse.txt", sparse_samples(cfg, depth, rng))
        files["sparse"] = rel("sparse.txt")
        rays, pred, head, feats = model_outputs(cfg, cam, depth, scene.renders[i][0], rng)
        io.write_raster(vdir / "rays.wsrf", rays)
        io.write_raster(vdir / "pred_depth.wsrf", pred)
        io.write_raster(vdir / "head.wsrf", head)
        io.write_raster(vdir / "features.wsrf", feats)
        files.update(rays=rel("rays.wsrf"), pred_depth=rel("pred_depth.wsrf"),
                     head=rel("head.wsrf"), features=rel("features.wsrf"))
        entries.append(io.ViewEntry(vid, cam, files))
    extra = {
        "gt": "gt.wsgs",
        "embeddings": "embeddings.wsem",
        "weights": "head_identity.wscw",
        "variants": str(cfg.n_variants),
        "tints": " ".join(repr(float(x)) for x in scene.tints.ravel()),
        "model_scale": repr(float(cfg.model_scale)),
        "model_shift": " ".join(repr(float(x)) for x in cfg.model_shift),
        "seed": str(cfg.seed),
    }
    path = out / "scene.ini"
    io.write_manifest(path, io.SceneManifest(f"synth-{cfg.seed}", entries, out, extra))
    return path
