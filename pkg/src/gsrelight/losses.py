"""Objective terms used to fit and regularize the avatar.

Every function here is pure and returns a python float, so the terms
double as regression probes for the inversion solver.  Reductions go
through numpy's pairwise summation, which keeps results stable across
runs and thread counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidInputError

DEFAULT_LOSS_WEIGHTS = {
    "l1": 10.0,
    "ssim": 0.2,
    "geometry": 0.4,
    "scale": 0.01,
    "negative_diffuse": 0.01,
    "monochrome": 0.01,
    "identity": 0.01,
}


@dataclass(frozen=True)
class AnnealedWeight:
    """Loss weight that decays linearly, then stays at its floor."""

    start: float
    end: float
    end_iteration: int

    def value(self, iteration: int) -> float:
        if iteration <= 0:
            return self.start
        if iteration >= self.end_iteration:
            return self.end
        frac = iteration / self.end_iteration
        return self.start + (self.end - self.start) * frac


ANNEALED_WEIGHTS = {
    "offset": AnnealedWeight(1.0, 0.001, 20_000),
    "normal": AnnealedWeight(1.0, 0.0, 5_000),
    "albedo": AnnealedWeight(10.0, 0.01, 10_000),
}


def _image(x) -> np.ndarray:
    pixels = getattr(x, "pixels", x)
    return np.asarray(pixels, dtype=np.float64)


def _masked(values: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return values
    m = np.asarray(mask, dtype=bool)
    if m.shape != values.shape[:2]:
        raise InvalidInputError(
            f"mask shape {m.shape} does not match image {values.shape[:2]}"
        )
    if not m.any():
        raise InvalidInputError("mask selects no pixels")
    return values[m]


def l1_loss(a, b, mask=None) -> float:
    """Mean absolute per-channel difference, optionally masked."""
    a, b = _image(a), _image(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(_masked(np.abs(a - b), mask)))


def _gaussian_taps(window: int, sigma: float) -> np.ndarray:
    half = (window - 1) / 2.0
    x = np.arange(window) - half
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def _window_mean(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = correlate1d(img, taps, axis=0, mode="reflect")
    return correlate1d(out, taps, axis=1, mode="reflect")


def ssim_loss(a, b, window: int = 11, sigma: float = 1.5,
              c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """One minus the mean structural-similarity index.

    Gaussian-windowed SSIM with the standard stabilizers; the constants
    assume a unit dynamic range, so feed images clamped to [0, 1].
    """
    a, b = _image(a), _image(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        raise InvalidInputError(
            f"image {a.shape[:2]} is smaller than the {window}-pixel window"
        )
    taps = _gaussian_taps(window, sigma)
    mu_a = _window_mean(a, taps)
    mu_b = _window_mean(b, taps)
    var_a = _window_mean(a * a, taps) - mu_a * mu_a
    var_b = _window_mean(b * b, taps) - mu_b * mu_b
    cov = _window_mean(a * b, taps) - mu_a * mu_b
    index = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) \
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    return float(1.0 - np.mean(index))


def reg_scale(scales, reference: float) -> float:
    """Mean squared log-ratio of Gaussian scales to a reference scale."""
    s = np.asarray(scales, dtype=np.float64)
    if np.any(s <= 0.0) or not np.all(np.isfinite(s)):
        raise InvalidInputError("scales must be positive and finite")
    if not (reference > 0.0 and math.isfinite(reference)):
        raise InvalidInputError(f"reference scale must be positive, got {reference!r}")
    return float(np.mean(np.log(s / reference) ** 2))


def reg_offset(deltas) -> float:
    """Mean squared norm of the per-Gaussian position offsets."""
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    return float(np.mean(np.sum(d * d, axis=1)))


def reg_normal(deltas) -> float:
    """Mean squared norm of the per-Gaussian normal residuals."""
    return reg_offset(deltas)


def reg_albedo(albedo, mean_texture, mask=None) -> float:
    """Masked mean squared difference between albedo and a reference texture."""
    a = np.asarray(albedo, dtype=np.float64)
    m = np.asarray(mean_texture, dtype=np.float64)
    if a.shape != m.shape:
        raise InvalidInputError(f"texture shapes differ: {a.shape} vs {m.shape}")
    return float(np.mean(_masked((a - m) ** 2, mask)))


def reg_monochrome(transfer) -> float:
    """How far the RGB transfer coefficients stray from a shared gray value.

    Per Gaussian and per basis function the spread is the variance of
    the three channels around their mean; the result averages that
    spread over everything.
    """
    d = np.asarray(transfer, dtype=np.float64)
    if d.shape[-1] != 3:
        raise InvalidInputError(f"expected RGB triplets last, got shape {d.shape}")
    mean = np.mean(d, axis=-1, keepdims=True)
    return float(np.mean(np.sum((d - mean) ** 2, axis=-1) / 3.0))


def penalty_negative_diffuse(colors) -> float:
    """Mean squared negative part over all color entries."""
    c = np.asarray(colors, dtype=np.float64)
    return float(np.mean(np.minimum(c, 0.0) ** 2))


def geometry_loss(mesh_pred, mesh_gt) -> float:
    """Mean squared vertex distance between two meshes of shared topology."""
    a = np.asarray(getattr(mesh_pred, "vertices", mesh_pred), dtype=np.float64)
    b = np.asarray(getattr(mesh_gt, "vertices", mesh_gt), dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(
            f"vertex arrays differ in shape: {a.shape} vs {b.shape}"
        )
    d = a - b
    return float(np.mean(np.sum(d * d, axis=-1)))


def loss_weights(iteration: int = 0) -> dict:
    """Full weight table at a training iteration, annealing applied."""
    weights = dict(DEFAULT_LOSS_WEIGHTS)
    for name, schedule in ANNEALED_WEIGHTS.items():
        weights[name] = schedule.value(iteration)
    return weights


def stage_losses(components, weights=None, iteration: int = 0) -> float:
    """Weighted sum of loss components.

    ``components`` maps component names to raw loss values; ``weights``
    defaults to :func:`loss_weights` at the given iteration.  A
    component without a matching weight is an error rather than a silent
    drop.
    """
    table = loss_weights(iteration) if weights is None else dict(weights)
    total = 0.0
    for name, value in components.items():
        if name not in table:
            raise InvalidInputError(f"unknown loss component {name!r}")
        total += table[name] * float(value)
    return total


def loss_report_lines(components) -> str:
    """Line-oriented ``name=value`` report, sorted by name."""
    return "\n".join(
        f"{name}={float(components[name]):.12g}" for name in sorted(components)
    )


def loss_report_json(components) -> str:
    return json.dumps(
        {name: float(components[name]) for name in sorted(components)},
        indent=2, sort_keys=True,
    )
