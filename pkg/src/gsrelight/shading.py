"""Per-Gaussian color computation under point lights or environment maps.

The diffuse term is an SH inner product, ``albedo * sum_i L_i d_i``, and
may be negative before clamping.  The specular term is an SG lobe about
the mirrored view direction: a sum of point-light responses, or a single
prefiltered-map lookup for environment light.  ``shade_set`` adds both
and clamps once, so the clamp never hides sign errors inside either term.

All functions are vectorized over Gaussians; a single Gaussian is just a
set of size one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envmap import EnvironmentMap, PointLightSet, PrefilteredEnvMap, env_to_sh, prefilter_env
from .errors import InvalidInputError
from .sg import sg_eval_dots
from .sh import SHCoefficients, eval_sh_basis_many, n_coeffs


@dataclass(frozen=True)
class PreparedLight:
    """A light condition ready for shading.

    ``sh`` always holds the SH projection used by the diffuse term.  For
    point lights ``lights`` holds the originals; for environment light
    ``prefiltered`` holds the SG ladder.  Exactly one of the two is set.
    """

    sh: SHCoefficients
    lights: PointLightSet | None = None
    prefiltered: PrefilteredEnvMap | None = None

    def __post_init__(self):
        if (self.lights is None) == (self.prefiltered is None):
            raise InvalidInputError(
                "a prepared light is either a point-light set or an environment"
            )


@dataclass
class ShadeStats:
    """Bookkeeping from one shading pass."""

    clamp_activations: int = 0  # Gaussians with any channel clamped to 0
    sigma_clamped: int = 0  # env lookups whose roughness left the ladder


def prepare_point_lights(lights: PointLightSet, order: int) -> PreparedLight:
    """Project a point-light set onto the SH basis: L_i = sum_j I_j Y_i(d_j)."""
    basis = eval_sh_basis_many(lights.directions, order)  # (J, m)
    coeffs = basis.T @ lights.intensities  # (m, 3)
    return PreparedLight(SHCoefficients(order, coeffs), lights=lights)


def prepare_environment(
    env: EnvironmentMap,
    order: int,
    sigmas=None,
    prefiltered: PrefilteredEnvMap | None = None,
) -> PreparedLight:
    """SH-project a map and attach (or compute) its prefiltered ladder."""
    if prefiltered is None:
        kwargs = {} if sigmas is None else {"sigmas": sigmas}
        prefiltered = prefilter_env(env, **kwargs)
    return PreparedLight(env_to_sh(env, order), prefiltered=prefiltered)


def _as_batch(arr, name, want_last):
    a = np.asarray(arr, dtype=np.float64)
    squeeze = a.ndim == len(want_last)
    if squeeze:
        a = a[None, ...]
    if a.shape[1:] != want_last:
        raise InvalidInputError(
            f"{name} must have shape (K, {', '.join(map(str, want_last))}), got {np.shape(arr)}"
        )
    return a, squeeze


def shade_diffuse(albedo, transfer, light_sh: SHCoefficients) -> np.ndarray:
    """Diffuse color ``albedo * sum_i L_i d_i`` per Gaussian.

    ``transfer`` is (K, m, 3) (or (m, 3) for one Gaussian) and must match
    the light's order.  The result can be negative; callers clamp later.
    """
    t, squeeze = _as_batch(transfer, "transfer", (light_sh.coeffs.shape[0], 3))
    a, _ = _as_batch(albedo, "albedo", (3,))
    if len(a) != len(t):
        raise InvalidInputError("albedo and transfer must have the same length")
    m = n_coeffs(light_sh.order)
    if t.shape[1] != m:
        raise InvalidInputError(
            f"transfer order mismatch: {t.shape[1]} coefficients vs light's {m}"
        )
    out = a * np.einsum("kmc,mc->kc", t, light_sh.coeffs)
    return out[0] if squeeze else out


def reflect_axes(view_dirs, normals) -> np.ndarray:
    """Vectorized mirror reflection ``2 (v . n) n - v`` of unit inputs."""
    v, _ = _as_batch(view_dirs, "view directions", (3,))
    n, _ = _as_batch(normals, "normals", (3,))
    if len(v) == 1 and len(n) > 1:
        v = np.broadcast_to(v, n.shape)
    dots = np.sum(v * n, axis=1, keepdims=True)
    return 2.0 * dots * n - v


def shade_specular_point(
    normals, roughness, visibility, lights: PointLightSet, view_dirs
) -> np.ndarray:
    """Specular color under point lights.

    Per Gaussian: ``v * sum_j I_j exp((a . d_j - 1) / sigma)`` with
    ``a`` the view direction reflected about the shading normal.
    """
    n, squeeze = _as_batch(normals, "normals", (3,))
    sig = np.atleast_1d(np.asarray(roughness, dtype=np.float64))
    vis = np.atleast_1d(np.asarray(visibility, dtype=np.float64))
    if sig.shape != (len(n),) or vis.shape != (len(n),):
        raise InvalidInputError("roughness and visibility must be (K,) scalars")
    axes = reflect_axes(view_dirs, n)  # (K, 3)
    dots = axes @ lights.directions.T  # (K, J)
    responses = sg_eval_dots(dots, sig[:, None])  # (K, J)
    out = vis[:, None] * (responses @ lights.intensities)  # (K, 3)
    return out[0] if squeeze else out


def shade_specular_env(
    normals, roughness, visibility, prefiltered: PrefilteredEnvMap, view_dirs
) -> tuple[np.ndarray, int]:
    """Specular color from a prefiltered map lookup at the reflected axis.

    Returns the colors and the count of lookups whose roughness had to be
    clamped into the ladder.
    """
    n, squeeze = _as_batch(normals, "normals", (3,))
    sig = np.atleast_1d(np.asarray(roughness, dtype=np.float64))
    vis = np.atleast_1d(np.asarray(visibility, dtype=np.float64))
    if sig.shape != (len(n),) or vis.shape != (len(n),):
        raise InvalidInputError("roughness and visibility must be (K,) scalars")
    axes = reflect_axes(view_dirs, n)
    looked_up, n_clamped = prefiltered.lookup(axes, sig)
    out = vis[:, None] * looked_up
    return (out[0] if squeeze else out), n_clamped


def view_directions(positions, camera_position) -> np.ndarray:
    """Unit vectors from Gaussian centers toward the camera."""
    p, _ = _as_batch(positions, "positions", (3,))
    cam = np.asarray(camera_position, dtype=np.float64)
    if cam.shape != (3,):
        raise InvalidInputError(f"camera position must be a 3-vector, got {cam.shape}")
    d = cam[None, :] - p
    lens = np.linalg.norm(d, axis=1)
    if np.any(lens < 1e-12):
        raise InvalidInputError("a Gaussian coincides with the camera position")
    return d / lens[:, None]


def shade_set(gaussians, light: PreparedLight, camera_position) -> tuple[np.ndarray, ShadeStats]:
    """Full shading of a relightable set: diffuse + specular, then clamp.

    Works on anything exposing ``positions``, ``albedo``, ``transfer``,
    ``roughness``, ``visibility``, and ``normals`` arrays.  Returns
    ``(colors (K, 3), stats)``.
    """
    views = view_directions(gaussians.positions, camera_position)
    diffuse = shade_diffuse(gaussians.albedo, gaussians.transfer, light.sh)
    stats = ShadeStats()
    if light.lights is not None:
        specular = shade_specular_point(
            gaussians.normals,
            gaussians.roughness,
            gaussians.visibility,
            light.lights,
            views,
        )
    else:
        specular, stats.sigma_clamped = shade_specular_env(
            gaussians.normals,
            gaussians.roughness,
            gaussians.visibility,
            light.prefiltered,
            views,
        )
    total = diffuse + specular
    stats.clamp_activations = int(np.count_nonzero(np.any(total < 0.0, axis=1)))
    return np.maximum(total, 0.0), stats


# Analytic partials used by the inversion solver and its gradient checks.


def diffuse_grad_albedo(transfer, light_sh: SHCoefficients) -> np.ndarray:
    """d shade_diffuse / d albedo, shape (K, 3): the SH dot alone."""
    t, squeeze = _as_batch(transfer, "transfer", (light_sh.coeffs.shape[0], 3))
    out = np.einsum("kmc,mc->kc", t, light_sh.coeffs)
    return out[0] if squeeze else out


def specular_point_grad_visibility(normals, roughness, lights, view_dirs) -> np.ndarray:
    """d shade_specular_point / d visibility, shape (K, 3)."""
    n, squeeze = _as_batch(normals, "normals", (3,))
    sig = np.atleast_1d(np.asarray(roughness, dtype=np.float64))
    axes = reflect_axes(view_dirs, n)
    responses = sg_eval_dots(axes @ lights.directions.T, sig[:, None])
    out = responses @ lights.intensities
    return out[0] if squeeze else out


def specular_point_grad_intensity(normals, roughness, visibility, lights, view_dirs) -> np.ndarray:
    """d shade_specular_point / d per-light intensity, shape (K, J).

    The light's RGB channels decouple, so one scalar per (Gaussian,
    light) pair covers all three.
    """
    n, squeeze = _as_batch(normals, "normals", (3,))
    sig = np.atleast_1d(np.asarray(roughness, dtype=np.float64))
    vis = np.atleast_1d(np.asarray(visibility, dtype=np.float64))
    axes = reflect_axes(view_dirs, n)
    responses = sg_eval_dots(axes @ lights.directions.T, sig[:, None])
    out = vis[:, None] * responses
    return out[0] if squeeze else out
