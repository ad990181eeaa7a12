"""Command-line entry point: ``splatpipe <subcommand> ...``."""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .align import GAMMA, REJECT_THRESHOLD, alignment_residual, apply_alignment, consistency_weights, \
    should_reject, wls_scale_translation
from .camera import RayMap, depth_to_points, ray_points
from .depth_align import RansacConfig, apply_scale_shift, ransac_scale_shift
from .errors import SplatError
from .gaussians import appearance_head, assemble_gaussians, interpolate_embedding, GaussianSet
from .render import THREADS_ENV, masked_mse, psnr, rasterize
from .synth import SynthConfig, write_scene
from .visibility import DELTA, COVERAGE_THRESHOLD, SKY_CUTOFF, VISIBILITY_THRESHOLD, extend_with_sky, \
    mine_view_sets, visibility_mask


def _fail_cleanly(fn):
    """Turn library errors into a one-line diagnostic and exit code 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SplatError, ValueError, KeyError, OSError) as e:
            msg = e.args[0] if isinstance(e, KeyError) and e.args else e
            click.echo(f"error: {msg}", err=True)
            sys.exit(1)

    return wrapper


def _ids(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _threads(ctx):
    return ctx.obj.get("threads") if ctx.obj else None


@click.group()
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help=f"Worker threads (default: ${THREADS_ENV} or CPU count).")
@click.pass_context
def main(ctx, threads):
    """Geometry and rendering tools for feed-forward Gaussian splatting."""
    ctx.ensure_object(dict)
    if threads is not None:
        os.environ[THREADS_ENV] = str(threads)
    ctx.obj["threads"] = threads


@main.command("align-depth")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sparse", "sparse_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--iters", default=1000, show_default=True, type=click.IntRange(min=1))
@click.option("--thresh", default=0.05, show_default=True, type=float)
@click.option("--min-inliers", default=None, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
@_fail_cleanly
def align_depth(pred_path, sparse_path, out_path, iters, thresh, min_inliers, seed):
    """Fit scale/shift of a relative depth raster to sparse metric depth."""
    pred = io.read_depth(pred_path)
    sparse = io.read_sparse(sparse_path)
    ss, inliers = ransac_scale_shift(pred, sparse, RansacConfig(iters, thresh, min_inliers, seed))
    io.write_depth(out_path, apply_scale_shift(pred, ss))
    _emit({"scale": ss.scale, "shift": ss.shift, "inliers": int(inliers.sum()), "samples": len(sparse)})


@main.command("mine-views")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed-view", required=True)
@click.option("--delta", default=DELTA, show_default=True, type=float)
@click.option("--cov", default=COVERAGE_THRESHOLD, show_default=True, type=float)
@click.option("--vis", default=VISIBILITY_THRESHOLD, show_default=True, type=float)
@click.option("--sky-cutoff", default=SKY_CUTOFF, show_default=True, type=float)
@_fail_cleanly
def mine_views(manifest, seed_view, delta, cov, vis, sky_cutoff):
    """List context pairs around a seed view and their interpolated targets."""
    man = io.read_manifest(manifest)
    views = [man.view_record(v) for v in man.ids()]
    sets = mine_view_sets(views, seed_view, delta, cov, vis, sky_cutoff)
    _emit([{"context": list(vs.context_ids), "coverage": c, "targets": vs.target_ids} for vs, c in sets])


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True)
@click.option("--contexts", required=True, help="Comma-separated context view ids.")
@click.option("--delta", default=DELTA, show_default=True, type=float)
@click.option("--sky-cutoff", default=SKY_CUTOFF, show_default=True, type=float)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False),
              help="Visibility mask raster [mask_<target>.wsrf].")
@click.option("--out-sky", "out_sky", default=None, type=click.Path(dir_okay=False),
              help="Sky-extended mask raster [mask_sky_<target>.wsrf].")
@_fail_cleanly
def mask(manifest, target, contexts, delta, sky_cutoff, out_path, out_sky):
    """Write the visibility mask of a target view and its sky-extended version."""
    man = io.read_manifest(manifest)
    tgt = man.view_record(target)
    ctxs = [man.view_record(c) for c in _ids(contexts)]
    m = visibility_mask(tgt, ctxs, delta)
    ms = extend_with_sky(m, tgt.sky, sky_cutoff)
    out_path = out_path or f"mask_{target}.wsrf"
    out_sky = out_sky or f"mask_sky_{target}.wsrf"
    io.write_raster(out_path, m.bits.astype(float))
    io.write_raster(out_sky, ms.bits.astype(float))
    _emit({"mask": str(out_path), "mask_sky": str(out_sky),
           "visible_fraction": m.fraction(), "visible_sky_fraction": ms.fraction(),
           "non_sky_visibility": m.fraction(tgt.non_sky(sky_cutoff)) if tgt.non_sky(sky_cutoff).any() else None})


def _load_embedding(path, index):
    embs = io.read_embeddings(path)
    if not 0 <= index < len(embs):
        raise ValueError(f"embedding index {index} out of range ({len(embs)} stored)")
    return embs[index]


def _view_inputs(man, vid):
    r = io.read_raster(man.file(vid, "rays"))
    if r.shape[2] != 6:
        raise ValueError(f"view {vid}: ray raster must have 6 channels")
    rays = RayMap(r[..., :3], r[..., 3:])
    return rays, io.read_depth(man.file(vid, "pred_depth")), man.head_outputs(vid)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--view", "view_ids", required=True, help="View id, or comma-separated ids to concatenate.")
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embedding", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embedding-index", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_fail_cleanly
def build(manifest, view_ids, weights, embedding, embedding_index, out_path):
    """Assemble pixel-aligned Gaussians with appearance-conditioned colors."""
    man = io.read_manifest(manifest)
    w = io.read_weights(weights)
    e = _load_embedding(embedding, embedding_index)
    sets = []
    for vid in _ids(view_ids):
        rays, depth, raw = _view_inputs(man, vid)
        sets.append(assemble_gaussians(rays, depth, raw, appearance_head(raw.features, e, w)))
    g = GaussianSet.concat(sets)
    io.write_gaussians(out_path, g)
    _emit({"out": str(out_path), "count": len(g), "sh_degree": g.sh_degree})


@main.command()
@click.option("--gauss", "gauss_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--views", default=None, help="Two context view ids [first two in manifest].")
@click.option("--gamma", default=GAMMA, show_default=True, type=float)
@click.option("--reject", default=REJECT_THRESHOLD, show_default=True, type=float)
@click.option("--sky-cutoff", default=SKY_CUTOFF, show_default=True, type=float)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False),
              help="Aligned Gaussian file [<gauss>.aligned.wsgs].")
@_fail_cleanly
def align(gauss_path, manifest, views, gamma, reject, sky_cutoff, out_path):
    """Scale/translate predicted Gaussians into the dataset frame."""
    man = io.read_manifest(manifest)
    ids = _ids(views) if views else man.ids()[:2]
    if len(ids) != 2:
        raise ValueError("alignment needs exactly two context views")
    recs = [man.view_record(v) for v in ids]
    weights = consistency_weights(recs[0], recs[1], gamma, sky_cutoff)
    pred, ref = [], []
    for vid, rec in zip(ids, recs):
        rays, depth, _ = _view_inputs(man, vid)
        pred.append(ray_points(rays, depth))
        ref.append(depth_to_points(rec.camera, rec.depth))
    t = wls_scale_translation(pred, ref, weights)
    res = alignment_residual(pred, ref, weights, t)
    g = apply_alignment(io.read_gaussians(gauss_path), t)
    out_path = out_path or str(Path(gauss_path).with_suffix(".aligned.wsgs"))
    io.write_gaussians(out_path, g)
    _emit({"out": out_path, "scale": t.a, "translation": t.b.tolist(), "residual": res,
           "threshold": reject, "rejected": should_reject(res, reject)})


def _camera(man_path, spec):
    if Path(spec).is_file():
        return io.read_camera(spec)
    if man_path is None:
        raise ValueError(f"camera {spec!r} is not a file; pass --manifest to look up a view id")
    return io.read_manifest(man_path).view(spec).camera


@main.command()
@click.option("--gauss", "gauss_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "camera_spec", required=True, help="Camera file or view id from --manifest.")
@click.option("--manifest", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--raster", "raster_path", default=None, type=click.Path(dir_okay=False),
              help="Also write float color raster.")
@click.option("--depth", "depth_path", default=None, type=click.Path(dir_okay=False))
@click.option("--alpha", "alpha_path", default=None, type=click.Path(dir_okay=False))
@click.pass_context
@_fail_cleanly
def render(ctx, gauss_path, camera_spec, manifest, out_path, raster_path, depth_path, alpha_path):
    """Rasterize a Gaussian file into a PNG."""
    cam = _camera(manifest, camera_spec)
    out = rasterize(io.read_gaussians(gauss_path), cam, threads=_threads(ctx))
    io.write_png(out_path, out.color)
    if raster_path:
        io.write_raster(raster_path, out.color.values)
    if depth_path:
        io.write_raster(depth_path, out.expected_depth)
    if alpha_path:
        io.write_raster(alpha_path, out.accum_alpha)
    _emit({"out": str(out_path), "mean_alpha": float(out.accum_alpha.mean())})


@main.command()
@click.option("--gauss-geom", "geom_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--views", required=True, help="View ids the geometry was built from, in order.")
@click.option("--e1", "e1_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--e2", "e2_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--e1-index", default=0, show_default=True, type=int)
@click.option("--e2-index", default=0, show_default=True, type=int)
@click.option("--steps", required=True, type=click.IntRange(min=2))
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "camera_spec", required=True, help="Camera file or view id.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
@_fail_cleanly
def interp(ctx, geom_path, manifest, views, e1_path, e2_path, e1_index, e2_index, steps, weights,
           camera_spec, out_dir):
    """Render a sweep between two appearance embeddings over fixed geometry."""
    man = io.read_manifest(manifest)
    geom = io.read_gaussians(geom_path)
    w = io.read_weights(weights)
    e1 = _load_embedding(e1_path, e1_index)
    e2 = _load_embedding(e2_path, e2_index)
    cam = _camera(manifest, camera_spec)
    inputs = [_view_inputs(man, v) for v in _ids(views)]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, t in enumerate(np.linspace(0.0, 1.0, steps)):
        e = interpolate_embedding(e1, e2, float(t))
        shs = []
        for rays, depth, raw in inputs:
            valid = ray_points(rays, depth, raw.depth_offset).valid
            k = w.layer2.out_channels // 3
            shs.append(appearance_head(raw.features, e, w)[valid].reshape(-1, k, 3))
        sh = np.concatenate(shs)
        if len(sh) != len(geom) or sh.shape[1] != geom.sh.shape[1]:
            raise ValueError("geometry file does not match the listed views and head")
        out = rasterize(geom.with_sh(sh), cam, threads=_threads(ctx))
        path = out_dir / f"interp_{i:03d}.png"
        io.write_png(path, out.color)
        written.append({"t": float(t), "out": str(path)})
    _emit(written)


def _load_image(path):
    if str(path).endswith(".wsrf"):
        return io.read_raster(path)
    return io.read_png(path)


@main.command("eval")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", "mask_path", default=None, type=click.Path(exists=True, dir_okay=False))
@_fail_cleanly
def eval_(a_path, b_path, mask_path):
    """PSNR (and masked MSE) between two images (PNG or float raster)."""
    a = _load_image(a_path)
    b = _load_image(b_path)
    m = None
    if mask_path:
        m = io.read_raster(mask_path)[..., 0] > 0.5
    click.echo(f"PSNR: {psnr(a, b, m):.2f} dB")
    click.echo(f"MSE: {masked_mse(a, b, m):.6g}")


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--n-gaussians", default=500, show_default=True, type=int)
@click.option("--views", "n_views", default=4, show_default=True, type=int)
@click.option("--size", default=256, show_default=True, type=int, help="Square image size in pixels.")
@click.option("--variants", default=2, show_default=True, type=int)
@click.option("--identical-poses", is_flag=True, help="Place every camera at the same pose.")
@click.pass_context
@_fail_cleanly
def synth(ctx, out_dir, seed, n_gaussians, n_views, size, variants, identical_poses):
    """Generate a deterministic synthetic scene on disk."""
    cfg = SynthConfig(n_gaussians=n_gaussians, n_views=n_views, width=size, height=size, seed=seed,
                      n_variants=variants, identical_poses=identical_poses)
    path = write_scene(out_dir, cfg, threads=_threads(ctx))
    _emit({"manifest": str(path), "views": n_views})


if __name__ == "__main__":
    main()
