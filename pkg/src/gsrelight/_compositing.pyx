# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled compositing kernel: scalar front-to-back alpha blending.

Kept deliberately tiny.  Projection, binning, and sorting all live in
numpy; only the per-pixel blend loop is compiled, because that is the
one part whose work grows with pixels times overlapping Gaussians.  The
pure-python twin in ``_compositing_py`` performs the same arithmetic in
the same order, so results match across backends.
"""

from libc.math cimport exp

cimport numpy as cnp

BACKEND = "compiled"


def composite_region(Py_ssize_t y0, Py_ssize_t y1,
                     Py_ssize_t x0, Py_ssize_t x1,
                     cnp.int32_t[::1] draw,
                     double[:, ::1] means,
                     double[:, ::1] invcov,
                     double[::1] opacity,
                     double[:, ::1] colors,
                     double[:, :, ::1] out_rgb,
                     double[:, ::1] out_alpha,
                     double[:, ::1] out_t):
    """Blend ``draw`` (Gaussian indices, front to back) into one region.

    The region is rows [y0, y1) and columns [x0, x1); the out arrays are
    full-image buffers updated in place.  ``invcov`` holds the packed
    upper triangle (a, b, c) of each inverse 2D covariance.
    """
    cdef Py_ssize_t i, j, k, g, n = draw.shape[0]
    cdef double px, py, dx, dy, q, a, w, t
    cdef double q_max = 9.0
    cdef double alpha_min = 1.0 / 255.0
    cdef double t_min = 1e-4
    with nogil:
        for i in range(y0, y1):
            py = i + 0.5
            for j in range(x0, x1):
                px = j + 0.5
                t = out_t[i, j]
                for k in range(n):
                    if t < t_min:
                        break
                    g = draw[k]
                    dx = px - means[g, 0]
                    dy = py - means[g, 1]
                    q = invcov[g, 0] * dx * dx + 2.0 * invcov[g, 1] * dx * dy \
                        + invcov[g, 2] * dy * dy
                    if q > q_max:
                        continue
                    a = opacity[g] * exp(-0.5 * q)
                    if a < alpha_min:
                        continue
                    w = a * t
                    out_rgb[i, j, 0] += colors[g, 0] * w
                    out_rgb[i, j, 1] += colors[g, 1] * w
                    out_rgb[i, j, 2] += colors[g, 2] * w
                    out_alpha[i, j] += w
                    t = t * (1.0 - a)
                out_t[i, j] = t
