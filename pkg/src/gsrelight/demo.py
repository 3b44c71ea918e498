"""Procedural demo avatars.

Real assets come out of a training pipeline; these come out of a seeded
RNG.  They exist so rendering, relighting, and inversion can be
exercised end to end with nothing downloaded.  The generated heads are
deliberately friendly to the math: the diffuse transfer is a lifted
clamped-cosine kernel that stays positive over the whole sphere, so
shading never clamps under nonnegative lights and light transport stays
exactly linear.  That property is what the superposition and inversion
round-trip tests lean on.
"""

from __future__ import annotations

import math

import numpy as np

from .avatar import AvatarAsset, GaussianParamPlanes, channel_spec
from .errors import InvalidInputError
from .mesh import CoarseMesh, bind_texels, median_edge_length
from .sh import eval_sh_basis_many, n_coeffs, project_to_sh
from .splat import Camera, camera_look_at

PRESETS = ("sphere-head", "ellipsoid-two-tone")

_TRANSFER_FLOOR = 0.01


def uv_sphere(radii, stacks: int = 24, slices: int = 48) -> CoarseMesh:
    """Axis-aligned ellipsoid mesh with an equirectangular UV atlas.

    Poles sit at texture rows v=0 and v=1; each pole triangle gets its
    own UV apex at the slice midpoint so the atlas covers the full
    square without overlaps.
    """
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (3,) or np.any(radii <= 0):
        raise InvalidInputError(f"radii must be three positive axes, got {radii}")
    if stacks < 3 or slices < 3:
        raise InvalidInputError("sphere needs at least 3 stacks and 3 slices")

    verts = [np.array([0.0, 0.0, radii[2]])]
    for i in range(1, stacks):
        theta = math.pi * i / stacks
        for j in range(slices):
            phi = 2.0 * math.pi * j / slices
            verts.append(radii * np.array([
                math.sin(theta) * math.cos(phi),
                math.sin(theta) * math.sin(phi),
                math.cos(theta),
            ]))
    verts.append(np.array([0.0, 0.0, -radii[2]]))
    vertices = np.array(verts)
    north, south = 0, len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * slices + (j % slices)

    # UV grid: (stacks+1) rows x (slices+1) columns, then one fan apex
    # per slice and pole
    uvs = [
        [j / slices, i / stacks]
        for i in range(stacks + 1)
        for j in range(slices + 1)
    ]
    def grid(i, j):
        return i * (slices + 1) + j

    apex_n = len(uvs)
    uvs += [[(j + 0.5) / slices, 0.0] for j in range(slices)]
    apex_s = len(uvs)
    uvs += [[(j + 0.5) / slices, 1.0] for j in range(slices)]

    faces, uv_faces = [], []
    for j in range(slices):
        faces.append([north, ring(1, j), ring(1, j + 1)])
        uv_faces.append([apex_n + j, grid(1, j), grid(1, j + 1)])
    for i in range(1, stacks - 1):
        for j in range(slices):
            a, b = ring(i, j), ring(i + 1, j)
            c, d = ring(i + 1, j + 1), ring(i, j + 1)
            faces.append([a, b, c])
            uv_faces.append([grid(i, j), grid(i + 1, j), grid(i + 1, j + 1)])
            faces.append([a, c, d])
            uv_faces.append([grid(i, j), grid(i + 1, j + 1), grid(i, j + 1)])
    for j in range(slices):
        faces.append([ring(stacks - 1, j), south, ring(stacks - 1, j + 1)])
        uv_faces.append(
            [grid(stacks - 1, j), apex_s + j, grid(stacks - 1, j + 1)]
        )
    return CoarseMesh(vertices, np.asarray(faces, dtype=np.int32),
                      np.asarray(uvs), np.asarray(uv_faces, dtype=np.int32))


def _smooth_field(rng, resolution: int, lo: float, hi: float,
                  cells: int = 9) -> np.ndarray:
    """Bilinearly upsampled random grid: smooth spatial variation."""
    coarse = rng.uniform(lo, hi, (cells, cells))
    x = np.linspace(0.0, cells - 1.0, resolution)
    i0 = np.minimum(x.astype(np.int64), cells - 2)
    frac = x - i0
    rows = coarse[i0] * (1.0 - frac[:, None]) + coarse[i0 + 1] * frac[:, None]
    return rows[:, i0] * (1.0 - frac[None, :]) + rows[:, i0 + 1] * frac[None, :]


def lambertian_zonal(order: int) -> np.ndarray:
    """Zonal SH coefficients of the clamped cosine max(cos, 0)/pi.

    Computed by projecting the kernel itself rather than typing in the
    textbook constants, so the values carry whatever conventions the
    basis uses.
    """
    def kernel(dirs):
        return np.maximum(dirs[:, 2], 0.0) / math.pi

    coeffs = project_to_sh(kernel, order).coeffs[:, 0]
    zonal = np.array([coeffs[l * (l + 1)] for l in range(order + 1)])
    return zonal


def lifted_lambertian_zonal(order: int,
                            floor: float = _TRANSFER_FLOOR) -> np.ndarray:
    """Clamped-cosine zonal coefficients, DC-lifted to stay positive.

    Truncating the cosine kernel at a finite order leaves a shallow
    negative ring on the back side; raising the DC term pulls the whole
    reconstruction up to at least ``floor``.  Transfers built from the
    lifted kernel therefore produce nonnegative diffuse light for any
    nonnegative illumination, keeping the shading clamp inactive.
    """
    zonal = lambertian_zonal(order)
    theta = np.linspace(0.0, math.pi, 2048)
    dirs = np.stack(
        [np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=1
    )
    basis = eval_sh_basis_many(dirs, order)
    zonal_cols = np.array([l * (l + 1) for l in range(order + 1)])
    profile = basis[:, zonal_cols] @ zonal
    worst = float(profile.min())
    if worst < floor:
        zonal = zonal.copy()
        zonal[0] += (floor - worst) / basis[0, 0]
    return zonal


def transfer_from_normals(normals, zonal) -> np.ndarray:
    """Rotate zonal kernel coefficients to per-Gaussian normals.

    For a kernel that is rotationally symmetric about its axis, the SH
    coefficients after pointing the axis at ``n`` are
    ``sqrt(4 pi / (2l+1)) z_l Y_lm(n)``.
    """
    zonal = np.asarray(zonal, dtype=np.float64)
    order = len(zonal) - 1
    basis = eval_sh_basis_many(normals, order)
    scale = np.concatenate([
        np.full(2 * l + 1, math.sqrt(4.0 * math.pi / (2 * l + 1)) * zonal[l])
        for l in range(order + 1)
    ])
    return basis * scale


def gen_demo_avatar(seed: int = 0, preset: str = "sphere-head",
                    resolution: int = 256, sh_order: int = 3) -> AvatarAsset:
    """Deterministic synthetic avatar asset.

    Same seed, preset, resolution, and order give byte-identical planes.
    """
    if preset == "sphere-head":
        radii = (0.12, 0.12, 0.12)
        tone_a = tone_b = np.array([0.72, 0.52, 0.42])
    elif preset == "ellipsoid-two-tone":
        radii = (0.10, 0.12, 0.15)
        tone_a = np.array([0.70, 0.50, 0.40])
        tone_b = np.array([0.45, 0.50, 0.62])
    else:
        raise InvalidInputError(
            f"unknown preset {preset!r}; available: {', '.join(PRESETS)}"
        )
    if resolution < 8:
        raise InvalidInputError(f"resolution too small: {resolution}")

    rng = np.random.default_rng(seed)
    mesh = uv_sphere(radii)
    binding = bind_texels(mesh, resolution)
    r = resolution
    m = n_coeffs(sh_order)

    planes = {name: np.zeros((r, r, c), dtype=np.float32)
              for name, c in channel_spec(sh_order).items()}
    planes["mask"][..., 0] = binding.mask.astype(np.float32)
    planes["rotation"][..., 0] = 1.0

    base_scale = median_edge_length(mesh) / 4.0
    scale = base_scale * _smooth_field(rng, r, 0.7, 1.3)
    planes["scale"][:] = np.log(np.expm1(scale))[..., None]

    opacity = _smooth_field(rng, r, 0.90, 0.97)
    planes["opacity"][..., 0] = np.log(opacity / (1.0 - opacity))

    # vertical tone blend: rows near the north pole take tone_a, rows
    # near the south pole tone_b (a no-op for the single-tone preset)
    blend = np.clip((np.arange(r) + 0.5) / r * 2.0 - 0.5, 0.0, 1.0)
    tones = tone_a[None, :] * (1.0 - blend[:, None]) + tone_b[None, :] * blend[:, None]
    wobble = _smooth_field(rng, r, -0.06, 0.06)
    albedo = np.clip(tones[:, None, :] + wobble[..., None], 0.05, 0.95)
    planes["albedo"][:] = albedo
    planes["fullon_color"][:] = albedo * 0.9

    zonal = lifted_lambertian_zonal(sh_order)
    gain = _smooth_field(rng, r, 0.85, 1.15)
    flat_normals = binding.normals.reshape(-1, 3)
    safe = np.where(
        binding.mask.reshape(-1, 1), flat_normals, [[0.0, 0.0, 1.0]]
    )
    transfer = transfer_from_normals(safe, zonal).reshape(r, r, m)
    transfer = transfer * gain[..., None]
    # basis-major RGB triplets: coefficient i occupies components 3i..3i+2
    planes["transfer"][:] = np.stack(
        [transfer, transfer, transfer], axis=-1
    ).reshape(r, r, 3 * m)

    sigma = _smooth_field(rng, r, 0.15, 0.45)
    planes["roughness"][..., 0] = np.log(sigma)

    vis = _smooth_field(rng, r, 0.2, 0.8)
    planes["visibility"][..., 0] = np.log(vis / (1.0 - vis))

    param_planes = GaussianParamPlanes(r, sh_order, planes)
    return AvatarAsset(mesh, param_planes, rig_id=None)


def demo_camera(width: int = 256, height: int = 256,
                fov_y_deg: float = 35.0, azimuth_deg: float = 0.0) -> Camera:
    """Camera on a 0.45-unit orbit around the origin, z up."""
    a = math.radians(azimuth_deg)
    eye = [0.45 * math.cos(a), 0.45 * math.sin(a), 0.0]
    return camera_look_at(eye, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                          width, height, fov_y_deg)
