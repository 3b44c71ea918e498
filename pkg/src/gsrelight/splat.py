"""Tile-based CPU rasterizer for 3D Gaussians.

Geometry goes through the usual EWA-style pipeline: each Gaussian is
projected with a first-order perspective approximation, giving a 2D mean
and covariance, then alpha-composited front to back.  Colors are plain
per-Gaussian RGB; all view dependence happens upstream in the shading
module, so rendering is linear in the color array.

The inner blend loop lives in a compiled extension when available and in
a numpy twin otherwise; set ``GSRELIGHT_FORCE_PYTHON=1`` to insist on
the fallback.  Both produce identical images, and so do the tiled and
naive paths and every thread count, because tiles own disjoint pixels
and the draw order is a fixed depth sort with index tie-breaking.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pfm
from .errors import InvalidInputError

if os.environ.get("GSRELIGHT_FORCE_PYTHON"):
    from . import _compositing_py as _backend
else:
    try:
        from . import _compositing as _backend
    except ImportError:
        from . import _compositing_py as _backend

TILE_SIZE = 16
DEPTH_MIN = 1e-6
COV_REGULARIZER = 0.3


def active_backend() -> str:
    """Name of the compositing kernel in use: "compiled" or "python"."""
    return _backend.BACKEND


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: x right, y down, z forward in camera space.

    ``rotation`` and ``translation`` form the world-to-camera rigid
    transform ``x_cam = R x_world + t``.
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        w, h = int(self.width), int(self.height)
        if w <= 0 or h <= 0:
            raise InvalidInputError(f"image size must be positive, got {w}x{h}")
        fx, fy = float(self.fx), float(self.fy)
        cx, cy = float(self.cx), float(self.cy)
        if not (fx > 0.0 and fy > 0.0):
            raise InvalidInputError(f"focal lengths must be positive, got {fx}, {fy}")
        if not all(math.isfinite(v) for v in (fx, fy, cx, cy)):
            raise InvalidInputError("camera intrinsics must be finite")
        r = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidInputError(
                f"expected (3, 3) rotation and (3,) translation, got "
                f"{r.shape} and {t.shape}"
            )
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidInputError("camera extrinsics must be finite")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-6:
            raise InvalidInputError("camera rotation is not orthonormal")
        for name, val in (("width", w), ("height", h), ("fx", fx), ("fy", fy),
                          ("cx", cx), ("cy", cy), ("rotation", r),
                          ("translation", t)):
            object.__setattr__(self, name, val)

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


def camera_look_at(eye, target, up, width: int, height: int,
                   fov_y_deg: float) -> Camera:
    """Build a camera at ``eye`` looking toward ``target``.

    The vertical field of view fixes ``fy = fx``; the principal point
    sits at the image center.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise InvalidInputError("eye and target coincide")
    forward = forward / norm
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise InvalidInputError("view direction is parallel to the up vector")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    if not (0.0 < fov_y_deg < 180.0):
        raise InvalidInputError(f"field of view out of range: {fov_y_deg!r}")
    f = (height / 2.0) / math.tan(math.radians(fov_y_deg) / 2.0)
    return Camera(width, height, f, f, width / 2.0, height / 2.0,
                  rotation, -rotation @ eye)


@dataclass(frozen=True)
class RenderTarget:
    """A rendered image: linear RGB plus coverage.

    ``alpha`` is the accumulated opacity per pixel and ``transmittance``
    the remaining see-through fraction, so the two sum to one up to the
    early-out threshold.
    """

    pixels: np.ndarray
    alpha: np.ndarray
    transmittance: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        a = np.asarray(self.alpha, dtype=np.float64)
        t = np.asarray(self.transmittance, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3 or a.shape != p.shape[:2] \
                or t.shape != p.shape[:2]:
            raise InvalidInputError(
                f"inconsistent render target shapes: {p.shape}, {a.shape}, "
                f"{t.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("render target pixels must be finite")
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise InvalidInputError("alpha must lie in [0, 1]")
        for name, val in (("pixels", p), ("alpha", a), ("transmittance", t)):
            object.__setattr__(self, name, val)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def save_pfm(self, path) -> None:
        pfm.write_pfm(path, self.pixels)

    def save_png_preview(self, path) -> None:
        pfm.write_png_preview(path, self.pixels)


@dataclass
class RenderStats:
    """Bookkeeping from one render call."""

    n_gaussians: int = 0
    n_drawn: int = 0
    n_culled: int = 0
    n_nonfinite: int = 0


def quats_to_rotmats(quats) -> np.ndarray:
    """Rotation matrices from unit quaternions in (w, x, y, z) order."""
    q = np.asarray(quats, dtype=np.float64)
    squeeze = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[-1] != 4:
        raise InvalidInputError(f"expected quaternions (..., 4), got {q.shape}")
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((q.shape[0], 3, 3))
    out[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[:, 0, 1] = 2.0 * (x * y - w * z)
    out[:, 0, 2] = 2.0 * (x * z + w * y)
    out[:, 1, 0] = 2.0 * (x * y + w * z)
    out[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[:, 1, 2] = 2.0 * (y * z - w * x)
    out[:, 2, 0] = 2.0 * (x * z - w * y)
    out[:, 2, 1] = 2.0 * (y * z + w * x)
    out[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out[0] if squeeze else out


def _project_arrays(positions, rotations, scales, camera: Camera):
    """Vectorized projection of all Gaussians.

    Returns (means2d, cov2d packed (a, b, c), depth, in_front) where
    ``in_front`` marks Gaussians past the near-plane epsilon.  Rows of
    the other arrays are meaningless where ``in_front`` is False.
    """
    p_cam = positions @ camera.rotation.T + camera.translation
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    in_front = z > DEPTH_MIN
    zs = np.where(in_front, z, 1.0)

    rot = quats_to_rotmats(np.atleast_2d(rotations))
    m = rot * np.asarray(scales)[:, None, :]
    cov_world = m @ m.transpose(0, 2, 1)

    n = positions.shape[0]
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = camera.fx / zs
    jac[:, 0, 2] = -camera.fx * x / (zs * zs)
    jac[:, 1, 1] = camera.fy / zs
    jac[:, 1, 2] = -camera.fy * y / (zs * zs)
    mj = jac @ camera.rotation
    cov2 = mj @ cov_world @ mj.transpose(0, 2, 1)

    packed = np.empty((n, 3))
    packed[:, 0] = cov2[:, 0, 0] + COV_REGULARIZER
    packed[:, 1] = cov2[:, 0, 1]
    packed[:, 2] = cov2[:, 1, 1] + COV_REGULARIZER

    means = np.empty((n, 2))
    means[:, 0] = camera.fx * x / zs + camera.cx
    means[:, 1] = camera.fy * y / zs + camera.cy
    return means, packed, z, in_front


def project_gaussian(position, rotation, scale, camera: Camera):
    """Project one Gaussian; returns (mean2d, cov2d, depth) or None.

    None means the Gaussian sits behind the near plane and is culled.
    The covariance comes back as a full symmetric 2x2 matrix with the
    regularizer already added.
    """
    pos = np.asarray(position, dtype=np.float64).reshape(1, 3)
    quat = np.asarray(rotation, dtype=np.float64).reshape(1, 4)
    sc = np.asarray(scale, dtype=np.float64).reshape(1, 3)
    means, packed, depth, in_front = _project_arrays(pos, quat, sc, camera)
    if not in_front[0]:
        return None
    cov = np.array([[packed[0, 0], packed[0, 1]],
                    [packed[0, 1], packed[0, 2]]])
    return means[0], cov, float(depth[0])


def _tile_lists(order, means, packed, width, height):
    """Bin draw-ordered Gaussians into 16x16 pixel tiles.

    Returns (tiles, n_drawn) where tiles maps (ty, tx) to an int32 array
    of Gaussian row indices, still in draw order.  The bound is the
    axis-aligned box of the 3-sigma ellipse, so the q <= 9 significance
    test inside the kernel can never fire outside the binned tiles.
    """
    n_tx = (width + TILE_SIZE - 1) // TILE_SIZE
    n_ty = (height + TILE_SIZE - 1) // TILE_SIZE
    rx = 3.0 * np.sqrt(packed[order, 0])
    ry = 3.0 * np.sqrt(packed[order, 2])
    mx, my = means[order, 0], means[order, 1]
    tx0 = np.clip(np.floor((mx - rx) / TILE_SIZE).astype(np.int64), 0, n_tx - 1)
    tx1 = np.clip(np.floor((mx + rx) / TILE_SIZE).astype(np.int64), 0, n_tx - 1)
    ty0 = np.clip(np.floor((my - ry) / TILE_SIZE).astype(np.int64), 0, n_ty - 1)
    ty1 = np.clip(np.floor((my + ry) / TILE_SIZE).astype(np.int64), 0, n_ty - 1)
    visible = (mx + rx >= 0.0) & (mx - rx <= width) \
        & (my + ry >= 0.0) & (my - ry <= height)

    bins = {}
    n_drawn = 0
    for k in range(order.shape[0]):
        if not visible[k]:
            continue
        n_drawn += 1
        g = order[k]
        for ty in range(ty0[k], ty1[k] + 1):
            for tx in range(tx0[k], tx1[k] + 1):
                bins.setdefault((ty, tx), []).append(g)
    tiles = {key: np.asarray(idx, dtype=np.int32) for key, idx in bins.items()}
    return tiles, n_drawn


def render(gaussians, colors, camera: Camera, background=(0.0, 0.0, 0.0),
           mode: str = "tiled", threads: int = 1):
    """Rasterize a Gaussian set under fixed per-Gaussian colors.

    ``gaussians`` needs positions, rotations, scales, and opacities;
    ``colors`` is the matching (K, 3) array of nonnegative linear RGB.
    ``mode`` "tiled" is the production path; "naive" composites every
    Gaussian against every pixel in one full-frame pass and exists as a
    reference the tiled path must match exactly.

    Returns (RenderTarget, RenderStats).
    """
    positions = np.ascontiguousarray(gaussians.positions, dtype=np.float64)
    rotations = np.ascontiguousarray(gaussians.rotations, dtype=np.float64)
    scales = np.ascontiguousarray(gaussians.scales, dtype=np.float64)
    opacity = np.ascontiguousarray(gaussians.opacities, dtype=np.float64)
    colors = np.ascontiguousarray(colors, dtype=np.float64)
    n = positions.shape[0]
    if colors.shape != (n, 3):
        raise InvalidInputError(
            f"expected colors ({n}, 3) to match the Gaussian count, got "
            f"{colors.shape}"
        )
    if np.any(colors[np.isfinite(colors)] < 0.0):
        raise InvalidInputError("colors must be nonnegative; clamp before rendering")
    if mode not in ("tiled", "naive"):
        raise InvalidInputError(f"unknown render mode {mode!r}")
    background = np.asarray(background, dtype=np.float64).reshape(3)
    if np.any(background < 0.0) or not np.all(np.isfinite(background)):
        raise InvalidInputError("background must be finite nonnegative RGB")
    threads = int(threads)
    if threads < 1:
        raise InvalidInputError(f"thread count must be >= 1, got {threads}")

    finite = (
        np.all(np.isfinite(positions), axis=1)
        & np.all(np.isfinite(rotations), axis=1)
        & np.all(np.isfinite(scales), axis=1)
        & np.isfinite(opacity)
        & np.all(np.isfinite(colors), axis=1)
    )
    stats = RenderStats(n_gaussians=n, n_nonfinite=int(np.sum(~finite)))

    h, w = camera.height, camera.width
    out_rgb = np.zeros((h, w, 3))
    out_alpha = np.zeros((h, w))
    out_t = np.ones((h, w))

    means, packed, depth, in_front = _project_arrays(
        positions, rotations, scales, camera
    )
    usable = finite & in_front
    stats.n_culled = int(np.sum(finite & ~in_front))

    idx = np.nonzero(usable)[0]
    if idx.size:
        # stable sort on depth keeps index order on ties, which pins the
        # draw order no matter how the work is later split up
        order = idx[np.argsort(depth[idx], kind="stable")].astype(np.int64)
        det = packed[:, 0] * packed[:, 2] - packed[:, 1] * packed[:, 1]
        invcov = np.empty_like(packed)
        invcov[:, 0] = packed[:, 2] / det
        invcov[:, 1] = -packed[:, 1] / det
        invcov[:, 2] = packed[:, 0] / det
        invcov = np.ascontiguousarray(invcov)
        means = np.ascontiguousarray(means)

        if mode == "naive":
            stats.n_drawn = int(order.shape[0])
            _backend.composite_region(
                0, h, 0, w, np.asarray(order, dtype=np.int32), means, invcov,
                opacity, colors, out_rgb, out_alpha, out_t,
            )
        else:
            tiles, stats.n_drawn = _tile_lists(order, means, packed, w, h)
            jobs = []
            for (ty, tx), draw in sorted(tiles.items()):
                y0, x0 = ty * TILE_SIZE, tx * TILE_SIZE
                jobs.append((y0, min(y0 + TILE_SIZE, h),
                             x0, min(x0 + TILE_SIZE, w), draw))
            if threads == 1:
                for y0, y1, x0, x1, draw in jobs:
                    _backend.composite_region(
                        y0, y1, x0, x1, draw, means, invcov, opacity, colors,
                        out_rgb, out_alpha, out_t,
                    )
            else:
                # tiles own disjoint pixels, so scheduling cannot change
                # the result, only the wall time
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    futures = [
                        pool.submit(
                            _backend.composite_region, y0, y1, x0, x1, draw,
                            means, invcov, opacity, colors,
                            out_rgb, out_alpha, out_t,
                        )
                        for y0, y1, x0, x1, draw in jobs
                    ]
                    for fut in futures:
                        fut.result()

    pixels = out_rgb + background * out_t[:, :, None]
    target = RenderTarget(pixels, np.minimum(out_alpha, 1.0), out_t)
    return target, stats
