"""Spherical Gaussian lobes for specular shading.

A lobe with unit axis ``a`` and roughness ``sigma`` evaluates to
``exp((dot(a, w) - 1) / sigma)`` at direction ``w``: value 1 along the
axis, falling off smoothly away from it.  Roughness lives in (0, 1);
small values give tight, mirror-like lobes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .sh import _check_unit


@dataclass(frozen=True)
class SpecularLobe:
    """Unit axis plus roughness sigma in (0, 1)."""

    axis: np.ndarray
    roughness: float

    def __post_init__(self):
        a = _check_unit(self.axis, "lobe axis")
        if a.ndim != 1:
            raise InvalidInputError(f"lobe axis must be a single vector, got {a.shape}")
        s = float(self.roughness)
        if not (0.0 < s < 1.0) or not math.isfinite(s):
            raise InvalidInputError(f"roughness must lie in (0, 1), got {s!r}")
        object.__setattr__(self, "axis", a)
        object.__setattr__(self, "roughness", s)


def sg_eval_dots(dots, sigma):
    """Kernel core ``exp((dots - 1) / sigma)`` shared by all callers.

    ``dots`` is any array of cosines in [-1, 1]; ``sigma`` broadcasts.
    """
    return np.exp((np.asarray(dots, dtype=np.float64) - 1.0) / sigma)


def sg_eval(lobe: SpecularLobe, direction) -> float:
    """Evaluate the lobe at one unit direction.  Result lies in (0, 1]."""
    d = _check_unit(direction)
    if d.ndim != 1:
        raise InvalidInputError(f"expected a single direction, got shape {d.shape}")
    return float(math.exp((float(np.dot(lobe.axis, d)) - 1.0) / lobe.roughness))


def sg_sphere_integral(lobe_or_sigma) -> float:
    """Integral of the lobe over the whole sphere, in closed form.

    The integral depends only on the roughness:
    ``2 * pi * sigma * (1 - exp(-2 / sigma))``.  Accepts a
    :class:`SpecularLobe` or a bare sigma; the bare form admits the
    closed boundary sigma = 1 so the formula itself can be tested there.
    """
    if isinstance(lobe_or_sigma, SpecularLobe):
        sigma = lobe_or_sigma.roughness
    else:
        sigma = float(lobe_or_sigma)
        if not (0.0 < sigma <= 1.0) or not math.isfinite(sigma):
            raise InvalidInputError(f"sigma must lie in (0, 1], got {sigma!r}")
    return 2.0 * math.pi * sigma * (1.0 - math.exp(-2.0 / sigma))


def reflect_lobe_axis(view_dir, normal) -> np.ndarray:
    """Mirror the view direction about the normal: ``2 (v . n) n - v``.

    Both inputs must be unit; the result is unit and preserves the cosine
    with the normal.
    """
    v = _check_unit(view_dir, "view direction")
    n = _check_unit(normal, "normal")
    if v.shape != (3,) or n.shape != (3,):
        raise InvalidInputError("view direction and normal must be single vectors")
    return 2.0 * float(np.dot(v, n)) * n - v


def sg_point_light_response(lobe: SpecularLobe, light_dir, intensity) -> np.ndarray:
    """Response of the lobe to a Dirac point light: intensity * lobe value."""
    i = np.asarray(intensity, dtype=np.float64)
    if i.shape not in ((), (3,)):
        raise InvalidInputError(f"intensity must be a scalar or RGB triplet, got {i.shape}")
    if not np.all(np.isfinite(i)) or np.any(i < 0.0):
        raise InvalidInputError("intensity must be finite and non-negative")
    return i * sg_eval(lobe, light_dir)
