"""Avatar data model: parameter planes, texel binding, Gaussian assembly.

A head is a coarse template mesh plus an R x R stack of named float
planes, one candidate Gaussian per texel.  Covered texels (per the UV
binding mask) assemble into either the full-on set {t, q, s, o, c_f} or
the relightable set {t, q, s, o, albedo, transfer, roughness, visibility,
normal}; both share the same geometry rule t = t_hat + delta_t.

Scales, opacity, roughness, and visibility are stored pre-activation so
activation semantics (softplus / sigmoid / clamped exp) live here, not in
asset files.  Quaternions are scalar-first (w, x, y, z).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import AssetError, DegenerateNormalError, InvalidInputError
from .mesh import CoarseMesh, TexelBinding, bind_texels, load_obj, save_obj
from .sh import n_coeffs

META_NAME = "meta.json"
MESH_NAME = "mesh.obj"
FORMAT_NAME = "gsrelight-avatar"

#: Roughness clamp bounds after the exponential activation.
ROUGHNESS_MIN = 1e-4
ROUGHNESS_MAX = 1.0 - 1e-4

_ONE_BELOW = float(np.nextafter(1.0, 0.0))


def channel_spec(sh_order: int) -> dict[str, int]:
    """Channel name -> component count for a given transfer order."""
    m = n_coeffs(sh_order)
    return {
        "delta_position": 3,
        "rotation": 4,
        "scale": 3,
        "opacity": 1,
        "fullon_color": 3,
        "albedo": 3,
        "transfer": 3 * m,
        "roughness": 1,
        "visibility": 1,
        "normal_residual": 3,
        "mask": 1,
    }


def softplus(x) -> np.ndarray:
    """log(1 + exp(x)), overflow-safe; floored just above zero so scales
    stay strictly positive even when float32 inputs are hugely negative."""
    return np.maximum(np.logaddexp(0.0, np.asarray(x, dtype=np.float64)), 1e-30)


def sigmoid(x) -> np.ndarray:
    """Logistic function clipped into the open interval (0, 1)."""
    return np.clip(expit(np.asarray(x, dtype=np.float64)), 1e-300, _ONE_BELOW)


@dataclass(frozen=True)
class GaussianParamPlanes:
    """Named per-texel parameter planes sharing one resolution."""

    resolution: int
    sh_order: int
    planes: dict  # name -> (R, R, C) float32

    def __post_init__(self):
        spec = channel_spec(self.sh_order)
        if self.resolution < 1:
            raise AssetError(f"resolution must be positive, got {self.resolution}")
        missing = sorted(set(spec) - set(self.planes))
        if missing:
            raise AssetError(f"missing parameter planes: {', '.join(missing)}")
        extra = sorted(set(self.planes) - set(spec))
        if extra:
            raise AssetError(f"unknown parameter planes: {', '.join(extra)}")
        converted = {}
        r = self.resolution
        for name, comps in spec.items():
            arr = np.asarray(self.planes[name], dtype=np.float32)
            if arr.shape != (r, r, comps):
                raise AssetError(
                    f"plane {name!r} must have shape {(r, r, comps)}, got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise AssetError(f"plane {name!r} contains non-finite values")
            converted[name] = arr
        object.__setattr__(self, "planes", converted)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.planes[name]


@dataclass(frozen=True)
class FullOnGaussianSet:
    """Flat-lit Gaussians: geometry plus a baked color per Gaussian."""

    positions: np.ndarray  # (K, 3)
    rotations: np.ndarray  # (K, 4) unit quaternions, scalar-first
    scales: np.ndarray  # (K, 3) > 0
    opacities: np.ndarray  # (K,) in (0, 1)
    colors: np.ndarray  # (K, 3)
    texel_rows: np.ndarray  # (K,) source texel row
    texel_cols: np.ndarray  # (K,) source texel col

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class RelightableGaussianSet:
    """Relightable Gaussians: geometry plus reflectance parameters.

    ``base_normals`` carries the interpolated mesh normal n_hat;
    ``normals`` is the shading normal after the residual,
    (n_hat + delta_n) normalized.
    """

    positions: np.ndarray  # (K, 3)
    rotations: np.ndarray  # (K, 4)
    scales: np.ndarray  # (K, 3)
    opacities: np.ndarray  # (K,)
    albedo: np.ndarray  # (K, 3)
    transfer: np.ndarray  # (K, m, 3) SH transfer coefficients
    roughness: np.ndarray  # (K,) in (0, 1)
    visibility: np.ndarray  # (K,) in (0, 1)
    base_normals: np.ndarray  # (K, 3) unit
    normal_residuals: np.ndarray  # (K, 3)
    normals: np.ndarray  # (K, 3) unit
    texel_rows: np.ndarray
    texel_cols: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def sh_order(self) -> int:
        return int(np.sqrt(self.transfer.shape[1])) - 1


def _selected_texels(planes: GaussianParamPlanes, binding: TexelBinding):
    if planes.resolution != binding.resolution:
        raise AssetError(
            f"plane resolution {planes.resolution} != binding resolution "
            f"{binding.resolution}"
        )
    mask = planes["mask"][..., 0] > 0.5
    orphaned = mask & ~binding.mask
    if np.any(orphaned):
        row, col = [int(x[0]) for x in np.nonzero(orphaned)]
        raise AssetError(
            f"mask marks texel ({row}, {col}) which no UV triangle covers; "
            "asset planes are inconsistent with the mesh"
        )
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        raise AssetError("mask selects no texels; nothing to assemble")
    return rows, cols


def _geometry(planes: GaussianParamPlanes, binding: TexelBinding, rows, cols):
    t_hat = binding.positions[rows, cols]
    delta = planes["delta_position"][rows, cols].astype(np.float64)
    positions = t_hat + delta

    q = planes["rotation"][rows, cols].astype(np.float64)
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms < 1e-8):
        k = int(np.nonzero(norms < 1e-8)[0][0])
        raise AssetError(
            f"rotation quaternion at texel ({int(rows[k])}, {int(cols[k])}) "
            "has near-zero norm and cannot be normalized"
        )
    rotations = q / norms[:, None]

    scales = softplus(planes["scale"][rows, cols])
    opacities = sigmoid(planes["opacity"][rows, cols, 0])
    return positions, rotations, scales, opacities


def assemble_fullon(
    planes: GaussianParamPlanes, binding: TexelBinding
) -> FullOnGaussianSet:
    """Gather covered texels into the flat-lit Gaussian set."""
    rows, cols = _selected_texels(planes, binding)
    positions, rotations, scales, opacities = _geometry(planes, binding, rows, cols)
    colors = planes["fullon_color"][rows, cols].astype(np.float64)
    return FullOnGaussianSet(
        positions, rotations, scales, opacities, colors, rows, cols
    )


def assemble_relightable(
    planes: GaussianParamPlanes, binding: TexelBinding
) -> RelightableGaussianSet:
    """Gather covered texels into the relightable Gaussian set."""
    rows, cols = _selected_texels(planes, binding)
    positions, rotations, scales, opacities = _geometry(planes, binding, rows, cols)

    albedo = planes["albedo"][rows, cols].astype(np.float64)
    m = n_coeffs(planes.sh_order)
    transfer = (
        planes["transfer"][rows, cols].astype(np.float64).reshape(len(rows), m, 3)
    )
    roughness = np.clip(
        np.exp(planes["roughness"][rows, cols, 0].astype(np.float64)),
        ROUGHNESS_MIN,
        ROUGHNESS_MAX,
    )
    visibility = sigmoid(planes["visibility"][rows, cols, 0])

    base_normals = binding.normals[rows, cols]
    residuals = planes["normal_residual"][rows, cols].astype(np.float64)
    combined = base_normals + residuals
    lens = np.linalg.norm(combined, axis=1)
    degenerate = lens < 1e-8
    if np.any(degenerate):
        idx = np.nonzero(degenerate)[0][:8]
        texels = [(int(rows[k]), int(cols[k])) for k in idx]
        raise DegenerateNormalError(
            f"normal residual cancels the base normal at texels {texels}"
            + ("..." if np.count_nonzero(degenerate) > 8 else "")
        )
    normals = combined / lens[:, None]

    return RelightableGaussianSet(
        positions,
        rotations,
        scales,
        opacities,
        albedo,
        transfer,
        roughness,
        visibility,
        base_normals,
        residuals,
        normals,
        rows,
        cols,
    )


@dataclass(frozen=True)
class AvatarAsset:
    """A mesh plus parameter planes, as stored in an asset directory."""

    mesh: CoarseMesh
    planes: GaussianParamPlanes
    rig_id: str | None = None

    @property
    def resolution(self) -> int:
        return self.planes.resolution

    @property
    def sh_order(self) -> int:
        return self.planes.sh_order

    def binding(self) -> TexelBinding:
        return bind_texels(self.mesh, self.resolution)


def save_avatar(asset: AvatarAsset, directory) -> None:
    """Write meta.json, one raw float32 plane file per channel, and the mesh."""
    os.makedirs(directory, exist_ok=True)
    spec = channel_spec(asset.sh_order)
    meta = {
        "format": FORMAT_NAME,
        "version": 1,
        "resolution": asset.resolution,
        "sh_order": asset.sh_order,
        "mesh": MESH_NAME,
        "rig_id": asset.rig_id,
        "channels": spec,
    }
    with open(os.path.join(directory, META_NAME), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    save_obj(os.path.join(directory, MESH_NAME), asset.mesh)
    for name in spec:
        plane = np.ascontiguousarray(asset.planes[name], dtype="<f4")
        plane.tofile(os.path.join(directory, f"{name}.f32"))


def load_avatar(directory) -> AvatarAsset:
    """Read an asset directory written by :func:`save_avatar`."""
    meta_path = os.path.join(directory, META_NAME)
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise AssetError(f"{directory}: cannot read {META_NAME}: {exc}") from exc
    except ValueError as exc:
        raise AssetError(f"{meta_path}: malformed JSON: {exc}") from exc
    if meta.get("format") != FORMAT_NAME:
        raise AssetError(f"{meta_path}: not a {FORMAT_NAME} asset")
    try:
        resolution = int(meta["resolution"])
        sh_order = int(meta["sh_order"])
        mesh_name = str(meta["mesh"])
        rig_id = meta.get("rig_id")
    except (KeyError, TypeError, ValueError) as exc:
        raise AssetError(f"{meta_path}: missing or malformed fields: {exc}") from exc

    try:
        spec = channel_spec(sh_order)
    except InvalidInputError as exc:
        raise AssetError(f"{meta_path}: {exc}") from exc
    declared = meta.get("channels", {})
    if dict(declared) != spec:
        raise AssetError(
            f"{meta_path}: channel manifest does not match an order-{sh_order} asset"
        )

    mesh = load_obj(os.path.join(directory, mesh_name))
    planes = {}
    for name, comps in spec.items():
        path = os.path.join(directory, f"{name}.f32")
        try:
            raw = np.fromfile(path, dtype="<f4")
        except OSError as exc:
            raise AssetError(f"{directory}: missing plane file {name}.f32") from exc
        want = resolution * resolution * comps
        if raw.size != want:
            raise AssetError(
                f"{path}: expected {want} float32 values, found {raw.size}"
            )
        planes[name] = raw.reshape(resolution, resolution, comps)
    return AvatarAsset(
        mesh,
        GaussianParamPlanes(resolution, sh_order, planes),
        None if rig_id is None else str(rig_id),
    )
