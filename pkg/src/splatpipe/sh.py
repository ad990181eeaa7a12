"""Real spherical-harmonics basis (degrees 0-3) in the usual 3DGS ordering."""

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)

MAX_DEGREE = 3


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def degree_from_coeffs(k: int) -> int:
    d = int(round(np.sqrt(k))) - 1
    if d < 0 or d > MAX_DEGREE or num_coeffs(d) != k:
        raise ValueError(f"{k} is not a valid SH coefficient count")
    return d


def sh_basis(degree: int, dirs) -> np.ndarray:
    """Basis values ``(..., (degree+1)**2)`` at unit directions ``(..., 3)``."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError("SH degree must be in 0..3")
    dirs = np.asarray(dirs, float)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = [np.full(x.shape, C0)]
    if degree >= 1:
        out += [-C1 * y, C1 * z, -C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out += [C2[0] * x * y, C2[1] * y * z, C2[2] * (2 * zz - xx - yy),
                C2[3] * x * z, C2[4] * (xx - yy)]
    if degree >= 3:
        out += [C3[0] * y * (3 * xx - yy), C3[1] * x * y * z,
                C3[2] * y * (4 * zz - xx - yy),
                C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
                C3[4] * x * (4 * zz - xx - yy), C3[5] * z * (xx - yy),
                C3[6] * x * (xx - 3 * yy)]
    return np.stack(out, axis=-1)


def sh_to_color(sh, view_dirs) -> np.ndarray:
    """RGB from coefficients ``(..., K, 3)`` viewed along ``(..., 3)``.

    Color is ``clamp(0.5 + sum_k c_k Y_k(dir), 0, 1)``.
    """
    sh = np.asarray(sh, float)
    basis = sh_basis(degree_from_coeffs(sh.shape[-2]), view_dirs)
    rgb = np.einsum("...k,...kc->...c", basis, sh) + 0.5
    return np.clip(rgb, 0.0, 1.0)


def rgb_to_dc(rgb):
    """DC coefficient that reproduces ``rgb`` under :func:`sh_to_color`."""
    return (np.asarray(rgb, float) - 0.5) / C0
