"""Invariants checked over generated inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splatpipe import io
from splatpipe.align import solve_scale_translation
from splatpipe.camera import PinholeCamera, project, unproject
from splatpipe.depth_align import ScaleShift, fit_scale_shift
from splatpipe.gaussians import AppearanceEmbedding, GaussianSet, interpolate_embedding
from splatpipe.render import rasterize

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)


@given(seed=seeds, x=st.floats(-3, 3), y=st.floats(-3, 3), z=st.floats(0.1, 50))
def test_project_unproject_round_trip(seed, x, y, z):
    rng = np.random.default_rng(seed)
    from oracles import random_camera

    cam = random_camera(rng)
    p = cam.camera_to_world([x, y, z])
    pix, depth = project(cam, p)
    assert np.allclose(unproject(cam, pix, depth), p, atol=1e-9 * max(1.0, np.abs(p).max()))


@given(scale=st.floats(0.01, 100), shift=st.floats(-50, 50), seed=seeds)
def test_exact_affine_recovered(scale, shift, seed):
    x = np.random.default_rng(seed).uniform(1, 10, 20)
    ss = fit_scale_shift(x, scale * x + shift)
    assert np.isclose(ss.scale, scale, rtol=1e-9)
    assert np.isclose(ss.shift, shift, rtol=1e-9, atol=1e-9 * (1 + abs(scale)))


@given(scale=st.floats(0.01, 100), shift=finite, v=finite)
def test_scale_shift_inverse(scale, shift, v):
    ss = ScaleShift(scale, shift)
    inv = ss.inverse()
    assert np.isclose(inv.scale * (ss.scale * v + ss.shift) + inv.shift, v, rtol=1e-9, atol=1e-9 * (1 + abs(shift)))


@given(seed=seeds, n=st.integers(0, 30))
@settings(max_examples=60, deadline=None)
def test_accumulated_alpha_in_unit_interval(seed, n):
    rng = np.random.default_rng(seed)
    mu = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(-1, 6, n)])
    q = rng.normal(size=(n, 4)) + 1e-9
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    g = GaussianSet(mu, rng.uniform(1e-6, 1 - 1e-6, n), q, np.exp(rng.uniform(-5, 1, (n, 3))),
                    rng.normal(0, 2, (n, 4, 3)))
    out = rasterize(g, PinholeCamera(20, 20, 12, 10, 24, 20))
    a = out.accum_alpha
    assert a.min() >= 0 and a.max() <= 1
    c = out.color.values
    assert c.min() >= 0 and c.max() <= 1


@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_raster_bytes_round_trip(a):
    blob = io.encode_raster(a)
    assert io.encode_raster(io.decode_raster(blob)) == blob


@given(seed=seeds, t=st.floats(0, 1))
def test_interpolation_symmetric(seed, t):
    rng = np.random.default_rng(seed)
    e1 = AppearanceEmbedding(rng.normal(size=5))
    e2 = AppearanceEmbedding(rng.normal(size=5))
    a = interpolate_embedding(e1, e2, t).values
    b = interpolate_embedding(e2, e1, 1 - t).values
    assert np.allclose(a, b, atol=1e-12)


@given(seed=seeds, c=st.floats(1e-3, 1e3))
def test_wls_invariant_to_weight_scale(seed, c):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(50, 3))
    Q = 1.5 * P + 0.3 + rng.normal(0, 0.1, (50, 3))
    W = rng.uniform(0.1, 1, 50)
    a = solve_scale_translation(P, Q, W)
    b = solve_scale_translation(P, Q, c * W)
    assert np.isclose(a.a, b.a, rtol=1e-9) and np.allclose(a.b, b.b, rtol=1e-9, atol=1e-12)
