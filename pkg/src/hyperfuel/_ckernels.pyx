# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Must stay bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, NAN

cnp.import_array()


def warp_bilinear(const float[:, :, ::1] src, const double[:, ::1] hinv,
                  Py_ssize_t out_h, Py_ssize_t out_w, double eps=1e-9):
    cdef Py_ssize_t nb = src.shape[0], sh = src.shape[1], sw = src.shape[2]
    out_arr = np.empty((nb, out_h, out_w), dtype=np.float32)
    mask_arr = np.zeros((out_h, out_w), dtype=np.uint8)
    cdef float[:, :, ::1] out = out_arr
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef Py_ssize_t x, y, b, x0, y0, x1, y1
    cdef double xd, yd, w, sx, sy, fx, fy, gx, gy, v
    cdef double h00 = hinv[0, 0], h01 = hinv[0, 1], h02 = hinv[0, 2]
    cdef double h10 = hinv[1, 0], h11 = hinv[1, 1], h12 = hinv[1, 2]
    cdef double h20 = hinv[2, 0], h21 = hinv[2, 1], h22 = hinv[2, 2]
    cdef double xmax = <double>(sw - 1), ymax = <double>(sh - 1)
    cdef int ok
    with nogil:
        for y in range(out_h):
            yd = <double>y
            for x in range(out_w):
                xd = <double>x
                w = h20 * xd + h21 * yd + h22
                ok = 0
                if fabs(w) >= 1e-12:
                    sx = (h00 * xd + h01 * yd + h02) / w
                    sy = (h10 * xd + h11 * yd + h12) / w
                    if sx >= -eps and sx <= xmax + eps and sy >= -eps and sy <= ymax + eps:
                        ok = 1
                if not ok:
                    for b in range(nb):
                        out[b, y, x] = NAN
                    continue
                if sx < 0.0:
                    sx = 0.0
                elif sx > xmax:
                    sx = xmax
                if sy < 0.0:
                    sy = 0.0
                elif sy > ymax:
                    sy = ymax
                x0 = <Py_ssize_t>floor(sx)
                y0 = <Py_ssize_t>floor(sy)
                if x0 > sw - 2:
                    x0 = sw - 2
                if x0 < 0:
                    x0 = 0
                if y0 > sh - 2:
                    y0 = sh - 2
                if y0 < 0:
                    y0 = 0
                x1 = x0 + 1 if sw > 1 else x0
                y1 = y0 + 1 if sh > 1 else y0
                fx = sx - <double>x0
                fy = sy - <double>y0
                gx = 1.0 - fx
                gy = 1.0 - fy
                for b in range(nb):
                    v = ((<double>src[b, y0, x0] * gx + <double>src[b, y0, x1] * fx) * gy
                         + (<double>src[b, y1, x0] * gx + <double>src[b, y1, x1] * fx) * fy)
                    out[b, y, x] = <float>v
                    if v != v:
                        ok = 0
                if not ok:
                    # a NaN neighbour in any band voids the whole spectrum
                    for b in range(nb):
                        out[b, y, x] = NAN
                mask[y, x] = ok
    return out_arr, mask_arr


def max_rectangle(const unsigned char[:, ::1] valid):
    """Largest all-valid rectangle; returns (area, x0, y0, width, height)."""
    cdef Py_ssize_t h = valid.shape[0], w = valid.shape[1]
    heights_arr = np.zeros(w + 1, dtype=np.intp)
    stack_arr = np.zeros(w + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] heights = heights_arr
    cdef Py_ssize_t[::1] stack = stack_arr
    cdef Py_ssize_t y, x, top, hgt, left, width, area, y0
    cdef Py_ssize_t best_area = 0, best_x = 0, best_y = 0, best_w = 0, best_h = 0
    with nogil:
        for y in range(h):
            for x in range(w):
                if valid[y, x]:
                    heights[x] += 1
                else:
                    heights[x] = 0
            # sentinel bar of height 0 at column w flushes the stack
            top = 0
            for x in range(w + 1):
                hgt = heights[x] if x < w else 0
                while top > 0 and heights[stack[top - 1]] >= hgt:
                    top -= 1
                    area = heights[stack[top]]
                    left = stack[top - 1] + 1 if top > 0 else 0
                    width = x - left
                    y0 = y - area + 1
                    area = area * width
                    if area > 0 and (area > best_area or (area == best_area and (
                            y0 < best_y or (y0 == best_y and (
                                left < best_x or (left == best_x and width > best_w)))))):
                        best_area = area
                        best_x = left
                        best_y = y0
                        best_w = width
                        best_h = area // width
                stack[top] = x
                top += 1
    return best_area, best_x, best_y, best_w, best_h
