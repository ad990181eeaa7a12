"""Numpy fallback for tile compositing; same contract as the compiled kernel."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

ALPHA_CAP = 0.99
ALPHA_MIN = 1.0 / 255.0
T_STOP = 1e-4


def _tile(args):
    (tx, ty, ids, means2d, conics, rgb, opac, depth, width, height, tile, color, alpha, zacc) = args
    x0, y0 = tx * tile, ty * tile
    x1, y1 = min(x0 + tile, width), min(y0 + tile, height)
    if len(ids) == 0:
        return
    px, py = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    px = px.reshape(-1, 1)
    py = py.reshape(-1, 1)
    dx = px - means2d[ids, 0]
    dy = py - means2d[ids, 1]
    ca, cb, cc = conics[ids, 0], conics[ids, 1], conics[ids, 2]
    power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
    a = np.minimum(ALPHA_CAP, opac[ids] * np.exp(power))
    a = np.where((a < ALPHA_MIN) | (power > 0), 0.0, a)
    one_minus = 1.0 - a
    t_after = np.cumprod(one_minus, axis=1)
    t_before = np.empty_like(t_after)
    t_before[:, 0] = 1.0
    t_before[:, 1:] = t_after[:, :-1]
    w = np.where(t_before >= T_STOP, a * t_before, 0.0)
    # sequential sums keep the accumulation order of the compiled kernel
    h, wd = y1 - y0, x1 - x0
    for c in range(3):
        color[y0:y1, x0:x1, c] = np.cumsum(w * rgb[ids, c], axis=1)[:, -1].reshape(h, wd)
    n_active = (t_before >= T_STOP).sum(axis=1)
    t_final = np.where(n_active > 0, t_after[np.arange(len(t_after)), np.maximum(n_active - 1, 0)], 1.0)
    alpha[y0:y1, x0:x1] = (1.0 - t_final).reshape(h, wd)
    zacc[y0:y1, x0:x1] = np.cumsum(w * depth[ids], axis=1)[:, -1].reshape(h, wd)


def composite(means2d, conics, rgb, opac, depth, tile_offsets, tile_ids,
              width, height, tile, threads=1):
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    color = np.zeros((height, width, 3))
    alpha = np.zeros((height, width))
    zacc = np.zeros((height, width))
    jobs = []
    for t in range(tiles_x * tiles_y):
        ids = tile_ids[tile_offsets[t]:tile_offsets[t + 1]]
        jobs.append((t % tiles_x, t // tiles_x, ids, means2d, conics, rgb, opac, depth,
                     width, height, tile, color, alpha, zacc))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(_tile, jobs))
    else:
        for j in jobs:
            _tile(j)
    return color, alpha, zacc
