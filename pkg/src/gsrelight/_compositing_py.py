"""Pure-python compositing kernel, the fallback when the compiled
extension is unavailable.

This mirrors ``_compositing.pyx`` operation for operation.  Front-to-back
alpha blending touches each pixel through the same sequence of IEEE
double multiplies and adds as the scalar loop in the extension, so the
two backends agree to the last ulp of whatever ``exp`` they link
against.  Vectorization is purely over pixels: every Gaussian is applied
to all still-transparent pixels of the region before the next one is
considered, which is exactly what the scalar loop does too because
transmittance only ever decreases.
"""

import numpy as np

BACKEND = "python"

_Q_MAX = 9.0
_ALPHA_MIN = 1.0 / 255.0
_T_MIN = 1e-4


def composite_region(y0, y1, x0, x1, draw, means, invcov, opacity, colors,
                     out_rgb, out_alpha, out_t):
    """Blend ``draw`` (Gaussian indices, front to back) into one region.

    The region is rows [y0, y1) and columns [x0, x1); the out arrays are
    full-image buffers updated in place.  ``invcov`` holds the packed
    upper triangle (a, b, c) of each inverse 2D covariance.
    """
    xs = np.arange(x0, x1, dtype=np.float64) + 0.5
    ys = np.arange(y0, y1, dtype=np.float64) + 0.5
    rgb = out_rgb[y0:y1, x0:x1]
    alpha = out_alpha[y0:y1, x0:x1]
    t = out_t[y0:y1, x0:x1]
    for g in draw:
        live = t >= _T_MIN
        if not live.any():
            break
        dx = xs[None, :] - means[g, 0]
        dy = ys[:, None] - means[g, 1]
        q = invcov[g, 0] * dx * dx + 2.0 * invcov[g, 1] * dx * dy \
            + invcov[g, 2] * dy * dy
        mask = live & (q <= _Q_MAX)
        if not mask.any():
            continue
        a = opacity[g] * np.exp(-0.5 * q[mask])
        keep = a >= _ALPHA_MIN
        if not keep.any():
            continue
        ii, jj = np.nonzero(mask)
        ii, jj, a = ii[keep], jj[keep], a[keep]
        t_here = t[ii, jj]
        w = a * t_here
        rgb[ii, jj, :] += colors[g] * w[:, None]
        alpha[ii, jj] += w
        t[ii, jj] = t_here * (1.0 - a)
