"""OLAT simulation, image-based relighting, and light inversion.

The three pieces share one idea: rendering is linear in the light.  An
OLAT stack samples that linear map one light at a time, image-based
relighting evaluates it as a weighted sum of frames, and inversion runs
it backwards with a nonnegative least-squares solve per color channel.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import nnls

from .envmap import (
    EnvironmentMap,
    PointLightSet,
    env_to_point_lights,
    grid_rig_directions,
)
from .errors import InvalidInputError, NumericError
from .shading import prepare_environment, prepare_point_lights, shade_set
from .splat import Camera, RenderTarget, render

RANK_TOL = 1e-12
NNLS_MAX_ITER = 500


def _rig_directions(rig) -> np.ndarray:
    dirs = rig.directions if isinstance(rig, PointLightSet) else rig
    dirs = np.asarray(dirs, dtype=np.float64)
    if dirs.ndim != 2 or dirs.shape[1] != 3 or len(dirs) == 0:
        raise InvalidInputError(
            f"rig must be a nonempty (J, 3) direction array, got {np.shape(rig)}"
        )
    return dirs


def _transfer_order(gaussians) -> int:
    m = gaussians.transfer.shape[1]
    order = int(round(math.sqrt(m))) - 1
    if (order + 1) ** 2 != m:
        raise InvalidInputError(f"transfer has {m} coefficients, not a square")
    return order


def render_olat_stack(gaussians, rig, camera: Camera,
                      threads: int = 1) -> list[RenderTarget]:
    """One render per rig light, unit white intensity, black background.

    Everything except the active light is held fixed, so the stack is a
    complete basis for relighting this view by superposition.
    """
    dirs = _rig_directions(rig)
    order = _transfer_order(gaussians)
    frames = []
    for j in range(len(dirs)):
        single = PointLightSet(dirs[j:j + 1], np.ones((1, 3)))
        prepared = prepare_point_lights(single, order)
        colors, _ = shade_set(gaussians, prepared, camera.position)
        target, _ = render(gaussians, colors, camera, threads=threads)
        frames.append(target)
    return frames


def ibr_relight(stack, weights) -> RenderTarget:
    """Weighted superposition of OLAT frames: sum_j w_j * frame_j.

    ``weights`` is (J, 3) RGB per light, or (J,) applied to all
    channels.  Alpha and transmittance carry over from the stack, which
    shares them across frames because geometry does not change with
    light.
    """
    if len(stack) == 0:
        raise InvalidInputError("empty OLAT stack")
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 1:
        w = np.repeat(w[:, None], 3, axis=1)
    if w.shape != (len(stack), 3):
        raise InvalidInputError(
            f"need one RGB weight per frame: {len(stack)} frames vs "
            f"weights {np.shape(weights)}"
        )
    first = stack[0]
    out = np.zeros_like(first.pixels)
    for frame, wj in zip(stack, w):
        if frame.pixels.shape != first.pixels.shape:
            raise InvalidInputError("OLAT frames differ in size")
        out += frame.pixels * wj
    return RenderTarget(out, first.alpha, first.transmittance)


def invert_lighting(observations, gaussians, rig,
                    threads: int = 1) -> PointLightSet:
    """Recover per-light RGB intensities from observed images.

    ``observations`` is a list of (RenderTarget, Camera) pairs captured
    on a black background.  Each color channel solves an independent
    nonnegative least-squares system whose columns are that camera's
    OLAT frames; the normal equations are accumulated view by view so
    only one stack is alive at a time.  Rank-deficient systems emit a
    warning naming the null-space dimension and return one least-residual
    solution.
    """
    dirs = _rig_directions(rig)
    rig_id = rig.rig_id if isinstance(rig, PointLightSet) else "custom"
    if len(observations) == 0:
        raise InvalidInputError("need at least one observation")
    j = len(dirs)
    gram = np.zeros((3, j, j))
    rhs = np.zeros((3, j))
    for target, camera in observations:
        pixels = np.asarray(getattr(target, "pixels", target), dtype=np.float64)
        if pixels.shape != (camera.height, camera.width, 3):
            raise InvalidInputError(
                f"observation shape {pixels.shape} does not match its camera "
                f"({camera.height}, {camera.width}, 3)"
            )
        stack = render_olat_stack(gaussians, dirs, camera, threads=threads)
        basis = np.stack([f.pixels.reshape(-1, 3) for f in stack])  # (J, P, 3)
        for c in range(3):
            a = basis[:, :, c]
            gram[c] += a @ a.T
            rhs[c] += a @ pixels[:, :, c].ravel()

    intensities = np.zeros((j, 3))
    for c in range(3):
        lam, vec = np.linalg.eigh(gram[c])
        lam_max = float(lam[-1])
        rank = int(np.count_nonzero(lam > RANK_TOL * lam_max)) if lam_max > 0 else 0
        if rank < j:
            warnings.warn(
                f"channel {c}: lighting system is rank {rank} of {j} "
                f"(null-space dimension {j - rank}); intensities are not "
                "uniquely determined",
                RuntimeWarning,
                stacklevel=2,
            )
        if rank == 0:
            continue
        root = np.sqrt(lam[-rank:])
        factor = root[:, None] * vec[:, -rank:].T  # (r, J)
        reduced = (vec[:, -rank:].T @ rhs[c]) / root
        x, _ = nnls(factor, reduced, maxiter=NNLS_MAX_ITER)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"channel {c}: light solve diverged")
        intensities[:, c] = x
    return PointLightSet(dirs, intensities, rig_id)


def relight_under_env(gaussians, env: EnvironmentMap, camera: Camera,
                      mode: str = "direct", threads: int = 1) -> RenderTarget:
    """Render the avatar under an environment map.

    "direct" shades with the SH projection plus prefiltered specular;
    "ibr-10x20" discretizes the map onto a 10x20 light grid and
    superposes that rig's OLAT frames.  The two agree up to the rig
    discretization error.
    """
    if mode == "direct":
        order = _transfer_order(gaussians)
        prepared = prepare_environment(env, order)
        colors, _ = shade_set(gaussians, prepared, camera.position)
        target, _ = render(gaussians, colors, camera, threads=threads)
        return target
    if mode == "ibr-10x20":
        dirs, rig_id = grid_rig_directions(10, 20)
        lights = env_to_point_lights(env, dirs, rig_id)
        stack = render_olat_stack(gaussians, dirs, camera, threads=threads)
        return ibr_relight(stack, lights.intensities)
    raise InvalidInputError(f"unknown relight mode {mode!r}")
