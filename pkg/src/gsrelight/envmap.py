"""Equirectangular environment maps, point-light rigs, and SG prefiltering.

Maps use the lat-long parametrization: ``u = azimuth / 2pi`` with zero
azimuth along +x, ``v = polar / pi`` with the +z pole at v = 0, and texel
centers at ``((col + 0.5) / W, (row + 0.5) / H)``.  Width is always twice
the height.  In memory row 0 is the +z pole row.  A texel's solid angle
is ``(2 pi / W) * (pi / H) * sin(theta)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssetError, InvalidInputError
from . import pfm
from .sh import SHCoefficients, eval_sh_basis_many, n_coeffs
from .sg import sg_sphere_integral

#: Roughness values prefiltered by default; lookups interpolate between
#: neighbouring levels in log sigma and clamp outside the ladder.
DEFAULT_SIGMA_LADDER = (0.02, 0.05, 0.1, 0.2, 0.4, 0.8)


@dataclass(frozen=True)
class EnvironmentMap:
    """HDR radiance on an equirectangular grid, finite and non-negative."""

    pixels: np.ndarray  # (H, 2H, 3) float64, row 0 at the +z pole

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise AssetError(f"environment map must be (H, W, 3), got {p.shape}")
        h, w = p.shape[:2]
        if w != 2 * h or h < 1:
            raise AssetError(f"environment map must have width = 2 * height, got {w}x{h}")
        if not np.all(np.isfinite(p)):
            raise AssetError("environment map contains non-finite pixels")
        if np.any(p < 0.0):
            raise AssetError("environment map contains negative radiance")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_pfm(cls, path) -> "EnvironmentMap":
        return cls(pfm.read_pfm(path))

    def to_pfm(self, path) -> None:
        pfm.write_pfm(path, self.pixels)


def texel_directions(height: int, width: int | None = None) -> np.ndarray:
    """Unit directions at every texel center, shape (H, W, 3)."""
    w = 2 * height if width is None else width
    theta = (np.arange(height) + 0.5) * (math.pi / height)  # polar from +z
    phi = (np.arange(w) + 0.5) * (2.0 * math.pi / w)
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    out = np.empty((height, w, 3))
    out[..., 0] = st[:, None] * cp[None, :]
    out[..., 1] = st[:, None] * sp[None, :]
    out[..., 2] = np.broadcast_to(ct[:, None], (height, w))
    return out


def texel_solid_angles(height: int, width: int | None = None) -> np.ndarray:
    """Per-row texel solid angle (constant along a row), shape (H,)."""
    w = 2 * height if width is None else width
    theta = (np.arange(height) + 0.5) * (math.pi / height)
    return (2.0 * math.pi / w) * (math.pi / height) * np.sin(theta)


def direction_to_uv(directions) -> np.ndarray:
    """Map unit directions to (u, v) in [0, 1) x [0, 1]."""
    d = np.asarray(directions, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.arctan2(d[..., 1], d[..., 0]) % (2.0 * math.pi)
    return np.stack([phi / (2.0 * math.pi), theta / math.pi], axis=-1)


def sample_env(env: EnvironmentMap, directions) -> np.ndarray:
    """Bilinear lookup with azimuthal wraparound; rows clamp at the poles."""
    d = np.asarray(directions, dtype=np.float64)
    uv = direction_to_uv(d)
    h, w = env.height, env.width
    cf = uv[..., 0] * w - 0.5
    rf = np.clip(uv[..., 1] * h - 0.5, 0.0, float(h - 1))
    c0 = np.floor(cf)
    fc = cf - c0
    c0i = (c0.astype(np.int64)) % w
    c1i = (c0i + 1) % w
    r0 = np.floor(rf)
    fr = rf - r0
    r0i = r0.astype(np.int64)
    r1i = np.minimum(r0i + 1, h - 1)
    px = env.pixels
    fr = fr[..., None]
    fc = fc[..., None]
    top = (1.0 - fc) * px[r0i, c0i] + fc * px[r0i, c1i]
    bot = (1.0 - fc) * px[r1i, c0i] + fc * px[r1i, c1i]
    return (1.0 - fr) * top + fr * bot


def env_to_sh(env: EnvironmentMap, order: int) -> SHCoefficients:
    """Project the map onto the SH basis by direct texel summation."""
    dirs = texel_directions(env.height, env.width).reshape(-1, 3)
    omega = np.repeat(texel_solid_angles(env.height, env.width), env.width)
    basis = eval_sh_basis_many(dirs, order)  # (HW, m)
    weighted = env.pixels.reshape(-1, 3) * omega[:, None]
    return SHCoefficients(order, basis.T @ weighted)


@dataclass(frozen=True)
class PointLightSet:
    """Directional lights: unit directions, non-negative RGB intensities."""

    directions: np.ndarray  # (J, 3) unit
    intensities: np.ndarray  # (J, 3) >= 0
    rig_id: str = "custom"

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        i = np.asarray(self.intensities, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3 or len(d) < 1:
            raise InvalidInputError(f"directions must be (J, 3), got {d.shape}")
        if i.shape == (d.shape[0],):
            i = np.repeat(i[:, None], 3, axis=1)
        if i.shape != (d.shape[0], 3):
            raise InvalidInputError(
                f"intensities must be ({d.shape[0]}, 3), got {np.shape(self.intensities)}"
            )
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("light directions must be unit vectors")
        if not np.all(np.isfinite(i)) or np.any(i < 0.0):
            raise InvalidInputError("light intensities must be finite and non-negative")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "intensities", i)

    def __len__(self) -> int:
        return len(self.directions)


def grid_rig_directions(rows: int = 10, cols: int = 20) -> tuple[np.ndarray, str]:
    """Rig at the texel centers of a rows x cols equirectangular grid."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("rig grid must be at least 1x1")
    return texel_directions(rows, cols).reshape(-1, 3), f"grid-{rows}x{cols}"


def fibonacci_rig_directions(count: int) -> tuple[np.ndarray, str]:
    """Near-uniform rig of ``count`` directions (deterministic)."""
    from .sh import fibonacci_sphere

    if count < 1:
        raise InvalidInputError("rig needs at least one light")
    return fibonacci_sphere(count), f"fibonacci-{count}"


def save_rig(path, directions: np.ndarray, rig_id: str) -> None:
    """Write a rig as JSON: {"rig_id": ..., "directions": [[x, y, z], ...]}."""
    with open(path, "w") as fh:
        json.dump(
            {"rig_id": rig_id, "directions": np.asarray(directions).tolist()},
            fh,
            indent=2,
        )


def load_rig(path) -> tuple[np.ndarray, str]:
    """Read a rig JSON written by :func:`save_rig`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        dirs = np.asarray(doc["directions"], dtype=np.float64)
        rig_id = str(doc.get("rig_id", "custom"))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise AssetError(f"{path}: malformed rig file: {exc}") from exc
    if dirs.ndim != 2 or dirs.shape[1] != 3:
        raise AssetError(f"{path}: rig directions must be (J, 3), got {dirs.shape}")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise AssetError(f"{path}: rig directions must be unit vectors")
    return dirs, rig_id


def env_to_point_lights(
    env: EnvironmentMap, rig_directions: np.ndarray, rig_id: str = "custom"
) -> PointLightSet:
    """Bucket every texel's energy (radiance x solid angle) onto the
    nearest rig direction.  Total energy is conserved exactly: the sum of
    returned intensities equals the sum of texel energies.
    """
    rig = np.asarray(rig_directions, dtype=np.float64)
    if rig.ndim != 2 or rig.shape[1] != 3:
        raise InvalidInputError(f"rig directions must be (J, 3), got {rig.shape}")
    dirs = texel_directions(env.height, env.width).reshape(-1, 3)
    omega = np.repeat(texel_solid_angles(env.height, env.width), env.width)
    energy = env.pixels.reshape(-1, 3) * omega[:, None]
    intensities = np.zeros((len(rig), 3))
    chunk = 65536
    for lo in range(0, len(dirs), chunk):
        hi = min(lo + chunk, len(dirs))
        nearest = np.argmax(dirs[lo:hi] @ rig.T, axis=1)
        np.add.at(intensities, nearest, energy[lo:hi])
    return PointLightSet(rig, intensities, rig_id)


@dataclass(frozen=True)
class PrefilteredEnvMap:
    """SG-convolved copies of a map at a ladder of roughness values.

    Level ``k`` stores the raw convolution
    ``(L conv G)(a) = sum_x L(x) exp((a.x - 1) / sigma_k) dOmega_x``
    on its own equirectangular grid.  Lookups divide each level by the
    lobe's sphere integral, interpolate the two bracketing levels in log
    sigma, and scale back by the integral at the queried roughness; the
    normalized maps vary slowly with sigma, which keeps the interpolation
    error far below the ladder spacing.
    """

    base: EnvironmentMap
    sigmas: tuple
    levels: tuple  # of EnvironmentMap, parallel to sigmas

    def __post_init__(self):
        if len(self.sigmas) != len(self.levels) or len(self.sigmas) < 1:
            raise InvalidInputError("need one filtered level per sigma")
        if list(self.sigmas) != sorted(self.sigmas):
            raise InvalidInputError("sigma ladder must be ascending")
        for s in self.sigmas:
            if not (0.0 < s < 1.0):
                raise InvalidInputError(f"ladder sigma must lie in (0, 1), got {s}")

    def lookup(self, directions, sigmas) -> tuple[np.ndarray, int]:
        """Filtered radiance at (direction, sigma) pairs.

        Returns ``(rgb (N, 3), n_clamped)`` where ``n_clamped`` counts
        queries whose sigma fell outside the ladder and was clamped.
        """
        d = np.asarray(directions, dtype=np.float64)
        s = np.asarray(sigmas, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3:
            raise InvalidInputError(f"directions must be (N, 3), got {d.shape}")
        if s.shape != (len(d),):
            raise InvalidInputError("need one sigma per direction")
        lo_s, hi_s = self.sigmas[0], self.sigmas[-1]
        clamped = np.clip(s, lo_s, hi_s)
        n_clamped = int(np.count_nonzero(clamped != s))
        query_integral = 2.0 * math.pi * clamped * (1.0 - np.exp(-2.0 / clamped))

        if len(self.sigmas) == 1:
            vals = sample_env(self.levels[0], d) / sg_sphere_integral(self.sigmas[0])
            return vals * query_integral[:, None], n_clamped

        log_ladder = np.log(np.asarray(self.sigmas))
        idx_hi = np.searchsorted(log_ladder, np.log(clamped), side="left")
        idx_hi = np.clip(idx_hi, 1, len(self.sigmas) - 1)
        idx_lo = idx_hi - 1
        t = (np.log(clamped) - log_ladder[idx_lo]) / (
            log_ladder[idx_hi] - log_ladder[idx_lo]
        )
        t = np.clip(t, 0.0, 1.0)

        integrals = np.array([sg_sphere_integral(x) for x in self.sigmas])
        out = np.empty((len(d), 3))
        for k in range(len(self.sigmas)):
            take_lo = idx_lo == k
            take_hi = idx_hi == k
            if not (np.any(take_lo) or np.any(take_hi)):
                continue
            vals = sample_env(self.levels[k], d[take_lo | take_hi]) / integrals[k]
            buf = np.zeros((len(d), 3))
            buf[take_lo | take_hi] = vals
            if np.any(take_lo):
                out[take_lo] = buf[take_lo] * (1.0 - t[take_lo])[:, None]
            if np.any(take_hi):
                out[take_hi] += buf[take_hi] * t[take_hi][:, None]
        return out * query_integral[:, None], n_clamped


def _exact_band_solid_angles(height: int, width: int) -> np.ndarray:
    """Per-row texel solid angle using exact spherical band areas."""
    edges = np.arange(height + 1) * (math.pi / height)
    return (2.0 * math.pi / width) * (np.cos(edges[:-1]) - np.cos(edges[1:]))


# Empirical midpoint-rule error constant for SG kernels on lat-long grids:
# relative error ~= 0.05 * (sub-texel polar size)^2 / sigma.
_PREFILTER_ERR_CONST = 0.05
_PREFILTER_MAX_SUBDIV = 48


def prefilter_env(
    env: EnvironmentMap,
    sigmas=DEFAULT_SIGMA_LADDER,
    out_width: int | None = None,
    rel_tol: float = 3e-4,
) -> PrefilteredEnvMap:
    """Convolve the map with an SG lobe at each ladder sigma.

    The radiance is treated as piecewise constant over texels and the
    convolution integral is summed directly over a sub-texel quadrature;
    the subdivision factor is chosen per sigma so the discrete sum tracks
    the continuous integral to roughly ``rel_tol``.  Output resolution
    defaults to the input's, capped at width 64 (filtered maps are smooth
    by construction, so a coarse grid loses nothing; pass ``out_width``
    to override).
    """
    sig = tuple(float(s) for s in sigmas)
    if len(sig) < 1:
        raise InvalidInputError("need at least one sigma")
    if list(sig) != sorted(sig):
        raise InvalidInputError("sigma ladder must be ascending")
    for s in sig:
        if not (0.0 < s < 1.0):
            raise InvalidInputError(f"ladder sigma must lie in (0, 1), got {s}")
    if not (0.0 < rel_tol < 1.0):
        raise InvalidInputError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if out_width is None:
        out_width = min(env.width, 64)
    if out_width < 2 or out_width % 2:
        raise InvalidInputError(f"output width must be even and >= 2, got {out_width}")
    out_height = out_width // 2
    out_dirs = texel_directions(out_height, out_width).reshape(-1, 3)

    h, w = env.height, env.width
    texel_polar = math.pi / h
    levels = []
    for s in sig:
        target = math.sqrt(s * rel_tol / _PREFILTER_ERR_CONST)
        k = max(1, min(_PREFILTER_MAX_SUBDIV, math.ceil(texel_polar / target)))
        sub_dirs = texel_directions(h * k, w * k).reshape(-1, 3)
        sub_omega = np.repeat(_exact_band_solid_angles(h * k, w * k), w * k)
        sub_vals = np.repeat(np.repeat(env.pixels, k, axis=0), k, axis=1)
        weighted = sub_vals.reshape(-1, 3) * sub_omega[:, None]
        filtered = np.empty((len(out_dirs), 3))
        # keep each kernel block under ~64 MB of float64
        chunk = max(1, min(len(out_dirs), int(8e6) // max(1, len(sub_dirs))))
        for lo in range(0, len(out_dirs), chunk):
            hi = min(lo + chunk, len(out_dirs))
            kernel = np.exp((out_dirs[lo:hi] @ sub_dirs.T - 1.0) / s)
            filtered[lo:hi] = kernel @ weighted
        levels.append(EnvironmentMap(filtered.reshape(out_height, out_width, 3)))
    return PrefilteredEnvMap(env, sig, tuple(levels))
