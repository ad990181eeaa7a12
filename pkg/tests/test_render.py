import numpy as np
import pytest

from splatpipe import _kernels
from splatpipe.camera import PinholeCamera
from splatpipe.errors import DimensionMismatchError, EmptyMaskError
from splatpipe.gaussians import GaussianSet
from splatpipe.render import (DILATION, bin_tiles, cov3d, masked_mse, photometric_loss, project_gaussian,
                              project_gaussians, psnr, quat_to_rotmat, rasterize)
from splatpipe.sh import rgb_to_dc
from scipy.spatial.transform import Rotation

BACKENDS = sorted(_kernels.BACKENDS)


def _one(mean, scale, alpha, rgb, sh_degree=0):
    sh = np.zeros((1, (sh_degree + 1) ** 2, 3))
    sh[0, 0] = rgb_to_dc(rgb)
    return GaussianSet(np.reshape(mean, (1, 3)), [alpha], [[1, 0, 0, 0]], np.full((1, 3), scale), sh)


def _random_set(rng, n, spread=1.0, sh_degree=1):
    mu = np.column_stack([rng.uniform(-spread, spread, n), rng.uniform(-spread, spread, n), rng.uniform(2, 8, n)])
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    k = (sh_degree + 1) ** 2
    return GaussianSet(mu, rng.uniform(0.05, 0.99, n), q, rng.uniform(0.01, 0.4, (n, 3)),
                       rng.normal(0, 0.6, (n, k, 3)))


def test_cov3d_simple_cases():
    assert np.allclose(cov3d([1, 0, 0, 0], [1, 1, 1]), np.eye(3))
    assert np.allclose(cov3d([1, 0, 0, 0], [2, 1, 1]), np.diag([4, 1, 1]))


def test_cov3d_eigenvalues(rng):
    for _ in range(50):
        q = rng.normal(size=4)
        s = rng.uniform(0.1, 3, 3)
        ev = np.linalg.eigvalsh(cov3d(q / np.linalg.norm(q), s))
        assert np.abs(np.sort(ev) - np.sort(s ** 2)).max() < 1e-9


def test_quaternion_matches_scipy(rng):
    for _ in range(20):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        ref = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        assert np.allclose(quat_to_rotmat(q), ref, atol=1e-12)


def test_isotropic_on_axis_closed_form():
    f, s, z = 80.0, 0.2, 4.0
    cam = PinholeCamera(f, f, 32, 32, 64, 64)
    p = project_gaussian(cam, [0, 0, z], [1, 0, 0, 0], [s] * 3)
    want = (f * s / z) ** 2 + DILATION
    assert np.allclose(p.cov2d, np.diag([want, want]), atol=1e-12)
    assert np.allclose(p.mean2d, [32, 32]) and p.view_depth == z


def test_behind_camera_culled():
    cam = PinholeCamera(80, 80, 32, 32, 64, 64)
    assert project_gaussian(cam, [0, 0, -1], [1, 0, 0, 0], [0.1] * 3) is None
    assert project_gaussian(cam, [0, 0, 0.005], [1, 0, 0, 0], [0.1] * 3) is None


def test_offscreen_culled():
    cam = PinholeCamera(80, 80, 32, 32, 64, 64)
    assert project_gaussian(cam, [100, 0, 1], [1, 0, 0, 0], [0.01] * 3) is None


def test_doubling_depth_halves_std(rng):
    cam = PinholeCamera(100, 100, 50, 50, 100, 100)
    for _ in range(10):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        s = rng.uniform(0.05, 0.2, 3)
        x = rng.uniform(-0.2, 0.2, 2)
        z = rng.uniform(4, 8)
        p1 = project_gaussians(cam, [[*x, z]], [q], [s], dilation=0.0)
        p2 = project_gaussians(cam, [[*(2 * x), 2 * z]], [q], [s], dilation=0.0)
        sd1 = np.sqrt(np.linalg.eigvalsh(p1.cov2d[0]))
        sd2 = np.sqrt(np.linalg.eigvalsh(p2.cov2d[0]))
        assert np.allclose(sd2, sd1 / 2, rtol=0.01)


def test_ewa_matches_linearised_projection(rng):
    # covariance of projected samples approaches the Jacobian formula for a tiny Gaussian
    cam = PinholeCamera(100, 100, 50, 50, 100, 100)
    mean = np.array([0.3, -0.2, 5.0])
    q = np.array([0.9, 0.1, 0.3, -0.2])
    q /= np.linalg.norm(q)
    s = np.array([0.01, 0.02, 0.005])
    proj = project_gaussians(cam, [mean], [q], [s], dilation=0.0)
    L = quat_to_rotmat(q) * s
    x = mean + rng.normal(size=(200_000, 3)) @ L.T
    uv = np.column_stack([100 * x[:, 0] / x[:, 2] + 50, 100 * x[:, 1] / x[:, 2] + 50])
    assert np.allclose(np.cov(uv.T), proj.cov2d[0], rtol=0.03, atol=1e-3)


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_scene(backend):
    cam = PinholeCamera(40, 40, 20, 20, 40, 40)
    out = rasterize(GaussianSet.empty(), cam, backend=backend)
    assert not out.color.values.any() and not out.accum_alpha.any()


def peak_case(backend=None, alpha=0.8, rgb=(0.9, 0.4, 0.2)):
    """Single isotropic Gaussian centred on a pixel centre; returns (render, analytic)."""
    f, s, z = 100.0, 0.05, 5.0
    cam = PinholeCamera(f, f, 32.5, 32.5, 64, 64)
    out = rasterize(_one([0, 0, z], s, alpha, rgb), cam, threads=1, backend=backend)
    var = (f * s / z) ** 2 + DILATION
    u, v = np.meshgrid(np.arange(64) + 0.5, np.arange(64) + 0.5)
    g = np.exp(-0.5 * ((u - 32.5) ** 2 + (v - 32.5) ** 2) / var)
    a = np.minimum(0.99, alpha * g)
    a = np.where(a >= 1 / 255, a, 0.0)
    return out, a[..., None] * np.asarray(rgb)


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_gaussian_footprint(backend):
    out, want = peak_case(backend)
    img = out.color.values
    assert np.abs(img[32, 32] - 0.8 * np.array([0.9, 0.4, 0.2])).max() < 1e-3
    assert np.abs(img - want).max() < 1e-3
    assert np.allclose(out.expected_depth[32, 32], 5.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_opaque_front_hides_back(backend):
    cam = PinholeCamera(100, 100, 32.5, 32.5, 64, 64)
    front = _one([0, 0, 3.0], 0.2, 0.999, (0, 1, 0))
    back = _one([0, 0, 6.0], 0.2, 0.9, (1, 0, 0))
    out = rasterize(GaussianSet.concat([back, front]), cam, backend=backend)
    c = out.color.values[32, 32]
    assert c[0] < 1e-2 and c[1] > 0.98


@pytest.mark.parametrize("backend", BACKENDS)
def test_order_invariance(rng, backend):
    g = _random_set(rng, 80)
    cam = PinholeCamera(60, 60, 24, 24, 48, 48)
    perm = rng.permutation(80)
    shuffled = GaussianSet(g.means[perm], g.opacities[perm], g.rotations[perm], g.scales[perm], g.sh[perm])
    a = rasterize(g, cam, backend=backend)
    b = rasterize(shuffled, cam, backend=backend)
    assert np.abs(a.color.values - b.color.values).max() < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_alpha_bounds_and_color_bound(rng, backend):
    cam = PinholeCamera(40, 40, 20, 20, 40, 40)
    for _ in range(20):
        out = rasterize(_random_set(rng, int(rng.integers(1, 60))), cam, backend=backend)
        assert out.accum_alpha.min() >= 0 and out.accum_alpha.max() <= 1
        # colour is a convex combination of values in [0, 1] with total weight accum_alpha
        assert np.all(out.color.values <= out.accum_alpha[..., None] + 1e-12)


def test_backends_agree(rng):
    if "compiled" not in _kernels.BACKENDS:
        pytest.skip("compiled kernel not built")
    cam = PinholeCamera(70, 70, 40, 30, 80, 60)
    for _ in range(5):
        g = _random_set(rng, 200, spread=1.5)
        a = rasterize(g, cam, backend="compiled")
        b = rasterize(g, cam, backend="python")
        assert np.abs(a.color.values - b.color.values).max() < 1e-12
        assert np.abs(a.accum_alpha - b.accum_alpha).max() < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_thread_count_bit_identical(rng, backend):
    g = _random_set(rng, 300, spread=1.5)
    cam = PinholeCamera(70, 70, 40, 30, 80, 60)
    a = rasterize(g, cam, threads=1, backend=backend)
    b = rasterize(g, cam, threads=8, backend=backend)
    assert a.color.values.tobytes() == b.color.values.tobytes()
    assert a.accum_alpha.tobytes() == b.accum_alpha.tobytes()


def test_unknown_backend():
    with pytest.raises(ValueError):
        rasterize(GaussianSet.empty(), PinholeCamera(4, 4, 2, 2, 4, 4), backend="gpu")


def test_bin_tiles_csr(rng):
    means = rng.uniform(0, [64, 48], (30, 2))
    radius = rng.uniform(0, 20, 30)
    order = rng.permutation(30)
    offsets, ids = bin_tiles(means, radius, order, 64, 48)
    assert len(offsets) == 4 * 3 + 1 and offsets[-1] == len(ids)
    rank = {g: i for i, g in enumerate(order)}
    for t in range(12):
        seg = ids[offsets[t]:offsets[t + 1]]
        assert [rank[g] for g in seg] == sorted(rank[g] for g in seg)
        tx, ty = t % 4, t // 4
        for g in range(30):
            overlaps = (means[g, 0] + radius[g] >= tx * 16 and means[g, 0] - radius[g] < (tx + 1) * 16
                        and means[g, 1] + radius[g] >= ty * 16 and means[g, 1] - radius[g] < (ty + 1) * 16)
            assert (g in seg) == overlaps


def test_mse_cases(rng):
    a = rng.uniform(0, 1, (8, 8, 3))
    assert masked_mse(a, a) == 0.0
    assert masked_mse(a, a + 0.1) == pytest.approx(0.01)
    m = np.zeros((8, 8), bool)
    m[:, :4] = True
    b = rng.uniform(0, 1, (8, 8, 3))
    assert masked_mse(a, b, m) == pytest.approx(np.mean((a[:, :4] - b[:, :4]) ** 2))
    with pytest.raises(EmptyMaskError):
        masked_mse(a, b, np.zeros((8, 8), bool))
    with pytest.raises(DimensionMismatchError):
        masked_mse(a, b[:4])


def test_psnr_cases(rng):
    a = rng.uniform(0, 1, (8, 8, 3))
    assert psnr(a, a) == 100.0
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    b = rng.uniform(0, 1, (8, 8, 3))
    assert psnr(a, b) == psnr(b, a)


def test_photometric_loss_with_perceptual_term(rng):
    a = rng.uniform(0, 1, (8, 8, 3))
    b = rng.uniform(0, 1, (8, 8, 3))
    m = np.ones((8, 8), bool)
    assert photometric_loss(a, b, m) == masked_mse(a, b, m)
    assert photometric_loss(a, b, m, lpips=lambda x, y: 2.0) == pytest.approx(masked_mse(a, b, m) + 1.0)
