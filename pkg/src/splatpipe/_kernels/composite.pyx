# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled front-to-back tile compositing.

Tiles are distributed over OpenMP threads; each pixel is composited by a
single thread in list order, so the output does not depend on the thread
count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp

cnp.import_array()

cdef double ALPHA_CAP = 0.99
cdef double ALPHA_MIN = 1.0 / 255.0
cdef double T_STOP = 1e-4


cdef void _shade_tile(Py_ssize_t t, int tiles_x, int width, int height, int tile,
                      const double[:, ::1] means2d, const double[:, ::1] conics,
                      const double[:, ::1] rgb, const double[::1] opac,
                      const double[::1] depth, const long long[::1] offsets,
                      const long long[::1] ids, double[:, :, ::1] color,
                      double[:, ::1] alpha, double[:, ::1] zacc) noexcept nogil:
    cdef int x0 = (t % tiles_x) * tile
    cdef int y0 = (t // tiles_x) * tile
    cdef int x1 = x0 + tile
    cdef int y1 = y0 + tile
    cdef int x, y
    cdef long long k, g
    cdef double px, py, dx, dy, power, a, T, w, r, gg, b, z
    if x1 > width:
        x1 = width
    if y1 > height:
        y1 = height
    for y in range(y0, y1):
        py = y + 0.5
        for x in range(x0, x1):
            px = x + 0.5
            T = 1.0
            r = 0.0
            gg = 0.0
            b = 0.0
            z = 0.0
            for k in range(offsets[t], offsets[t + 1]):
                g = ids[k]
                dx = px - means2d[g, 0]
                dy = py - means2d[g, 1]
                power = -0.5 * (conics[g, 0] * dx * dx + conics[g, 2] * dy * dy) - conics[g, 1] * dx * dy
                if power > 0:
                    continue
                a = opac[g] * exp(power)
                if a > ALPHA_CAP:
                    a = ALPHA_CAP
                if a < ALPHA_MIN:
                    continue
                w = a * T
                r = r + w * rgb[g, 0]
                gg = gg + w * rgb[g, 1]
                b = b + w * rgb[g, 2]
                z = z + w * depth[g]
                T = T * (1.0 - a)
                if T < T_STOP:
                    break
            color[y, x, 0] = r
            color[y, x, 1] = gg
            color[y, x, 2] = b
            alpha[y, x] = 1.0 - T
            zacc[y, x] = z


def composite(double[:, ::1] means2d, double[:, ::1] conics, double[:, ::1] rgb,
              double[::1] opac, double[::1] depth, long long[::1] tile_offsets,
              long long[::1] tile_ids, int width, int height, int tile, int threads=1):
    cdef int tiles_x = (width + tile - 1) // tile
    cdef int tiles_y = (height + tile - 1) // tile
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y
    cdef Py_ssize_t t
    color_arr = np.zeros((height, width, 3))
    alpha_arr = np.zeros((height, width))
    zacc_arr = np.zeros((height, width))
    cdef double[:, :, ::1] color = color_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] zacc = zacc_arr
    if threads < 1:
        threads = 1
    for t in prange(n_tiles, nogil=True, num_threads=threads, schedule="static"):
        _shade_tile(t, tiles_x, width, height, tile, means2d, conics, rgb, opac,
                    depth, tile_offsets, tile_ids, color, alpha, zacc)
    return color_arr, alpha_arr, zacc_arr
