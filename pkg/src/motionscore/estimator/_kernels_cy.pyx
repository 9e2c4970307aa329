# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the dense Lucas-Kanade inner loop.

Mirrors _kernels_np operation for operation (same accumulation order) so
both backends produce matching fields.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def warp_bilinear(double[:, ::1] img, double[:, ::1] u, double[:, ::1] v):
    """Sample img at (x + u, y + v) with bilinear interpolation.

    Out-of-bounds sample positions clamp to the border.
    """
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, x0, y0, x1, y1
    cdef double sx, sy, fx, fy
    for y in range(h):
        for x in range(w):
            sx = x + u[y, x]
            sy = y + v[y, x]
            if sx < 0.0:
                sx = 0.0
            elif sx > w - 1.0:
                sx = w - 1.0
            if sy < 0.0:
                sy = 0.0
            elif sy > h - 1.0:
                sy = h - 1.0
            x0 = <Py_ssize_t>floor(sx)
            y0 = <Py_ssize_t>floor(sy)
            x1 = x0 + 1
            if x1 > w - 1:
                x1 = w - 1
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            fx = sx - x0
            fy = sy - y0
            out[y, x] = (
                img[y0, x0] * (1.0 - fx) * (1.0 - fy)
                + img[y0, x1] * fx * (1.0 - fy)
                + img[y1, x0] * (1.0 - fx) * fy
                + img[y1, x1] * fx * fy
            )
    return out_arr


cdef void _integral(double[:, ::1] arr, double[:, ::1] acc) noexcept:
    # acc is (h+1, w+1), zero row/column in front; cumsum down rows then
    # across columns, matching np.cumsum(axis=0) followed by axis=1.
    cdef Py_ssize_t h = arr.shape[0]
    cdef Py_ssize_t w = arr.shape[1]
    cdef Py_ssize_t y, x
    for x in range(w + 1):
        acc[0, x] = 0.0
    for y in range(h):
        acc[y + 1, 0] = 0.0
        for x in range(w):
            acc[y + 1, x + 1] = acc[y, x + 1] + arr[y, x]
    for y in range(h):
        for x in range(1, w):
            acc[y + 1, x + 1] = acc[y + 1, x + 1] + acc[y + 1, x]


cdef inline double _window_sum(
    double[:, ::1] acc, Py_ssize_t y0, Py_ssize_t y1, Py_ssize_t x0, Py_ssize_t x1
) noexcept:
    return acc[y1, x1] - acc[y0, x1] - acc[y1, x0] + acc[y0, x0]


cdef inline Py_ssize_t _clip(Py_ssize_t value, Py_ssize_t hi) noexcept:
    if value < 0:
        return 0
    if value > hi:
        return hi
    return value


def box_filter(double[:, ::1] arr, Py_ssize_t radius):
    """Mean over (2*radius+1)^2 windows, truncated at the borders."""
    cdef Py_ssize_t h = arr.shape[0]
    cdef Py_ssize_t w = arr.shape[1]
    acc_arr = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    _integral(arr, acc)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, y0, y1, x0, x1
    cdef double count
    for y in range(h):
        y0 = _clip(y - radius, h)
        y1 = _clip(y + radius + 1, h)
        for x in range(w):
            x0 = _clip(x - radius, w)
            x1 = _clip(x + radius + 1, w)
            count = <double>((y1 - y0) * (x1 - x0))
            out[y, x] = _window_sum(acc, y0, y1, x0, x1) / count
    return out_arr


def lk_step(
    double[:, ::1] ix,
    double[:, ::1] iy,
    double[:, ::1] it,
    Py_ssize_t radius,
    double min_eigen,
):
    """One dense Lucas-Kanade increment from gradient images.

    Solves G d = -b per pixel over (2*radius+1)^2 windows; pixels whose
    smaller structure-tensor eigenvalue falls below min_eigen get a zero
    increment (aperture problem).
    """
    cdef Py_ssize_t h = ix.shape[0]
    cdef Py_ssize_t w = ix.shape[1]
    prod_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] prod = prod_arr
    cdef double[:, ::1] acc11 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] acc12 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] acc22 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] accb1 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] accb2 = np.empty((h + 1, w + 1), dtype=np.float64)
    cdef Py_ssize_t y, x, y0, y1, x0, x1

    for y in range(h):
        for x in range(w):
            prod[y, x] = ix[y, x] * ix[y, x]
    _integral(prod, acc11)
    for y in range(h):
        for x in range(w):
            prod[y, x] = ix[y, x] * iy[y, x]
    _integral(prod, acc12)
    for y in range(h):
        for x in range(w):
            prod[y, x] = iy[y, x] * iy[y, x]
    _integral(prod, acc22)
    for y in range(h):
        for x in range(w):
            prod[y, x] = ix[y, x] * it[y, x]
    _integral(prod, accb1)
    for y in range(h):
        for x in range(w):
            prod[y, x] = iy[y, x] * it[y, x]
    _integral(prod, accb2)

    du_arr = np.empty((h, w), dtype=np.float64)
    dv_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] du = du_arr
    cdef double[:, ::1] dv = dv_arr
    cdef double g11, g12, g22, b1, b2, half_trace, half_gap, lam_min, det
    for y in range(h):
        y0 = _clip(y - radius, h)
        y1 = _clip(y + radius + 1, h)
        for x in range(w):
            x0 = _clip(x - radius, w)
            x1 = _clip(x + radius + 1, w)
            g11 = _window_sum(acc11, y0, y1, x0, x1)
            g12 = _window_sum(acc12, y0, y1, x0, x1)
            g22 = _window_sum(acc22, y0, y1, x0, x1)
            half_trace = 0.5 * (g11 + g22)
            half_gap = 0.5 * (g11 - g22)
            lam_min = half_trace - sqrt(half_gap * half_gap + g12 * g12)
            det = g11 * g22 - g12 * g12
            if lam_min >= min_eigen and det != 0.0:
                b1 = _window_sum(accb1, y0, y1, x0, x1)
                b2 = _window_sum(accb2, y0, y1, x0, x1)
                du[y, x] = -(g22 * b1 - g12 * b2) / det
                dv[y, x] = -(g11 * b2 - g12 * b1) / det
            else:
                du[y, x] = 0.0
                dv[y, x] = 0.0
    return du_arr, dv_arr
