"""Command-line surface: asset generation, rendering, relighting, checks.

Every command is deterministic given identical inputs and flags.  Exit
codes are stable so scripts can branch on them: 1 for usage problems,
2 for malformed assets or files, 3 for numerical failures.  Commands
that render print a small JSON stats object to stdout; everything
diagnostic goes to stderr.

Flags may also be supplied through ``--config file.toml`` (flat
``key = value`` pairs, hyphens and underscores interchangeable).
Explicit flags win over the config file, which wins over built-in
defaults.
"""

import argparse
import json
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # stdlib only from 3.11 on
    import tomli as tomllib

from .avatar import (
    AvatarAsset,
    assemble_fullon,
    assemble_relightable,
    load_avatar,
    save_avatar,
)
from .demo import PRESETS, demo_camera, gen_demo_avatar
from .envmap import EnvironmentMap, PointLightSet, env_to_sh, load_rig
from .errors import AssetError, GsrelightError, InvalidInputError, NumericError
from .pfm import read_pfm
from .relight import invert_lighting, relight_under_env, render_olat_stack
from .shading import prepare_environment, prepare_point_lights, shade_set
from .splat import RenderTarget, render
from .mesh import bind_texels

EXIT_USAGE = 1
EXIT_ASSET = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; remap to the documented 1.

    Status 2 is reserved for asset problems here.
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_stats(pairs: dict) -> None:
    print(json.dumps(pairs, sort_keys=True))


def _load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise AssetError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise AssetError(f"malformed config {path}: {exc}") from exc
    flat = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            raise InvalidInputError(
                f"config {path}: tables are not supported (key {key!r})"
            )
        flat[key.replace("-", "_")] = value
    return flat


def _merge_config(args, defaults: dict) -> None:
    """Fill unset flags from the config file, then built-in defaults.

    Mergeable flags are declared with ``default=None`` so "unset" is
    detectable; anything the user typed stays untouched.
    """
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise InvalidInputError(
            f"config keys not understood by this command: {', '.join(sorted(unknown))}"
        )
    for dest, builtin in defaults.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, cfg.get(dest, builtin))


_CAMERA_DEFAULTS = {
    "width": 256,
    "height": 256,
    "fov_y": 35.0,
    "azimuth": 0.0,
}


def _add_camera_flags(parser) -> None:
    parser.add_argument("--width", type=int, help="image width in pixels")
    parser.add_argument("--height", type=int, help="image height in pixels")
    parser.add_argument("--fov-y", type=float, help="vertical field of view, degrees")
    parser.add_argument("--azimuth", type=float,
                        help="orbit angle around +z, degrees")


def _add_common_flags(parser) -> None:
    parser.add_argument("--threads", type=int, help="worker thread cap")
    parser.add_argument("--config", help="TOML file of key = value flag defaults")


def _camera(args):
    return demo_camera(args.width, args.height, args.fov_y, args.azimuth)


def _load_asset(path) -> AvatarAsset:
    if not os.path.isdir(path):
        raise AssetError(f"asset directory not found: {path}")
    return load_avatar(path)


def _load_env(path) -> EnvironmentMap:
    try:
        pixels = read_pfm(path)
    except OSError as exc:
        raise AssetError(f"cannot read environment map {path}: {exc}") from exc
    return EnvironmentMap(pixels)


def _load_weights(path, n_lights: int) -> np.ndarray:
    """Per-light RGB intensities from JSON: a (J, 3) list, a flat (J,)
    list applied to all channels, or {"intensities": ...}."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise AssetError(f"cannot read weights {path}: {exc}") from exc
    except ValueError as exc:
        raise AssetError(f"malformed weights {path}: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("intensities")
    weights = np.asarray(doc, dtype=np.float64)
    if weights.ndim == 1:
        weights = np.repeat(weights[:, None], 3, axis=1)
    if weights.shape != (n_lights, 3):
        raise AssetError(
            f"weights {path}: expected {n_lights} RGB entries, got shape "
            f"{weights.shape}"
        )
    return weights


def _save_images(target: RenderTarget, out_pfm, out_png) -> dict:
    written = {}
    if out_pfm:
        target.save_pfm(out_pfm)
        written["out_pfm"] = out_pfm
    if out_png:
        target.save_png_preview(out_png)
        written["out_png"] = out_png
    return written


def cmd_gen_demo(args) -> int:
    _merge_config(args, {
        "seed": 0,
        "preset": "sphere-head",
        "resolution": 256,
        "sh_order": 3,
    })
    asset = gen_demo_avatar(args.seed, args.preset, args.resolution, args.sh_order)
    save_avatar(asset, args.out)
    _print_stats({
        "gaussians": int(asset.planes["mask"].sum()),
        "out": args.out,
        "preset": args.preset,
        "resolution": args.resolution,
        "seed": args.seed,
        "sh_order": args.sh_order,
    })
    return 0


def cmd_render(args) -> int:
    _merge_config(args, {
        **_CAMERA_DEFAULTS,
        "env": None, "rig": None, "weights": None, "fullon": False,
        "out_pfm": None, "out_png": None,
        "background": [0.0, 0.0, 0.0],
        "threads": 1,
    })
    specs = [args.env is not None, args.rig is not None, bool(args.fullon)]
    if sum(specs) != 1:
        raise InvalidInputError(
            "exactly one light spec is required: --env, --rig --weights, or --fullon"
        )
    if (args.rig is None) != (args.weights is None):
        raise InvalidInputError("--rig and --weights go together")
    if not args.out_pfm and not args.out_png:
        raise InvalidInputError("nothing to write: pass --out-pfm and/or --out-png")

    asset = _load_asset(args.asset)
    binding = asset.binding()
    camera = _camera(args)
    clamp_activations = 0
    sigma_clamped = 0

    if args.fullon:
        gaussians = assemble_fullon(asset.planes, binding)
        colors = gaussians.colors
    else:
        gaussians = assemble_relightable(asset.planes, binding)
        if args.env is not None:
            prepared = prepare_environment(_load_env(args.env), gaussians.sh_order)
        else:
            directions, rig_id = load_rig(args.rig)
            intensities = _load_weights(args.weights, len(directions))
            lights = PointLightSet(directions, intensities, rig_id)
            prepared = prepare_point_lights(lights, gaussians.sh_order)
        colors, shade_stats = shade_set(gaussians, prepared, camera.position)
        clamp_activations = shade_stats.clamp_activations
        sigma_clamped = shade_stats.sigma_clamped

    target, stats = render(gaussians, colors, camera,
                           background=args.background, threads=args.threads)
    written = _save_images(target, args.out_pfm, args.out_png)
    _print_stats({
        "clamp_activations": clamp_activations,
        "culled": stats.n_culled,
        "gaussians_drawn": stats.n_drawn,
        "gaussians_total": stats.n_gaussians,
        "nonfinite_skipped": stats.n_nonfinite,
        "sigma_clamped": sigma_clamped,
        **written,
    })
    return 0


def cmd_olat(args) -> int:
    _merge_config(args, {**_CAMERA_DEFAULTS, "rig": None, "threads": 1})
    if args.rig is None:
        raise InvalidInputError("--rig is required")
    asset = _load_asset(args.asset)
    gaussians = assemble_relightable(asset.planes, asset.binding())
    directions, rig_id = load_rig(args.rig)
    rig = PointLightSet(directions, np.ones((len(directions), 3)), rig_id)
    frames = render_olat_stack(gaussians, rig, _camera(args), threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    digits = max(3, len(str(len(frames) - 1)))
    for j, frame in enumerate(frames):
        frame.save_pfm(os.path.join(args.out_dir, f"olat_{j:0{digits}d}.pfm"))
    _print_stats({"frames": len(frames), "out_dir": args.out_dir, "rig_id": rig_id})
    return 0


def cmd_relight(args) -> int:
    _merge_config(args, {
        **_CAMERA_DEFAULTS,
        "env": None, "mode": "direct",
        "out_pfm": None, "out_png": None,
        "threads": 1,
    })
    if args.env is None:
        raise InvalidInputError("--env is required")
    if not args.out_pfm and not args.out_png:
        raise InvalidInputError("nothing to write: pass --out-pfm and/or --out-png")
    asset = _load_asset(args.asset)
    gaussians = assemble_relightable(asset.planes, asset.binding())
    target = relight_under_env(gaussians, _load_env(args.env), _camera(args),
                               mode=args.mode, threads=args.threads)
    written = _save_images(target, args.out_pfm, args.out_png)
    _print_stats({"mode": args.mode, **written})
    return 0


def cmd_invert(args) -> int:
    """Round-trip check: render the asset under random known intensities,
    recover them from the images alone, and report the relative error."""
    _merge_config(args, {
        **_CAMERA_DEFAULTS,
        "rig": None, "views": 2, "seed": 0, "noise": 0.0,
        "out": None, "threads": 1,
    })
    if args.rig is None:
        raise InvalidInputError("--rig is required")
    if args.views < 1:
        raise InvalidInputError("need at least one view")
    asset = _load_asset(args.asset)
    gaussians = assemble_relightable(asset.planes, asset.binding())
    directions, rig_id = load_rig(args.rig)

    rng = np.random.default_rng(args.seed)
    truth = rng.uniform(0.2, 2.0, (len(directions), 3))
    prepared_truth = prepare_point_lights(
        PointLightSet(directions, truth, rig_id), gaussians.sh_order
    )
    observations = []
    for k in range(args.views):
        camera = demo_camera(args.width, args.height, args.fov_y,
                             args.azimuth + 360.0 * k / args.views)
        colors, _ = shade_set(gaussians, prepared_truth, camera.position)
        target, _ = render(gaussians, colors, camera, threads=args.threads)
        if args.noise > 0.0:
            target = RenderTarget(
                target.pixels + rng.normal(0.0, args.noise, target.pixels.shape),
                target.alpha, target.transmittance,
            )
        observations.append((target, camera))

    rig = PointLightSet(directions, np.ones_like(truth), rig_id)
    recovered = invert_lighting(observations, gaussians, rig, threads=args.threads)
    error = float(
        np.linalg.norm(recovered.intensities - truth) / np.linalg.norm(truth)
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"rig_id": rig_id,
                       "intensities": recovered.intensities.tolist()}, fh, indent=2)
    _print_stats({
        "lights": len(directions),
        "noise": args.noise,
        "relative_error": error,
        "views": args.views,
        **({"out": args.out} if args.out else {}),
    })
    return 0


def cmd_project_env(args) -> int:
    _merge_config(args, {"order": 3, "out": None})
    env = _load_env(args.env)
    coeffs = env_to_sh(env, args.order)
    doc = {"order": args.order, "coeffs": coeffs.coeffs.tolist()}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
        _print_stats({"coeffs": len(coeffs.coeffs), "order": args.order,
                      "out": args.out})
    else:
        print(json.dumps(doc, sort_keys=True))
    return 0


def _check_asset_invariants(asset: AvatarAsset) -> dict:
    """Verify every value-level invariant; raise AssetError naming the
    first violated one.  Structural problems (missing planes, bad
    shapes, broken mesh) have already been caught by the loader."""
    planes = asset.planes

    mask = planes["mask"][..., 0]
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise AssetError("invariant violated: mask must be 0/1 valued")
    covered = mask != 0.0

    for name in sorted(planes.planes):
        if not np.all(np.isfinite(planes[name])):
            raise AssetError(f"invariant violated: plane {name!r} has non-finite values")

    binding = bind_texels(asset.mesh, asset.resolution)  # raises on UV overlap
    if np.any(covered & ~binding.mask):
        raise AssetError(
            "invariant violated: mask marks texels not covered by any UV triangle"
        )

    quat_norms = np.linalg.norm(planes["rotation"][covered], axis=-1)
    if np.any(quat_norms < 1e-8):
        raise AssetError(
            "invariant violated: rotation quaternions must be normalizable"
        )

    with np.errstate(over="ignore"):
        sigma = np.exp(planes["roughness"][covered, 0].astype(np.float64))
    if sigma.size and not (0.0 < sigma.min() and sigma.max() < 1.0):
        raise AssetError(
            "invariant violated: roughness must give sigma in (0, 1), got "
            f"[{sigma.min():.6g}, {sigma.max():.6g}]"
        )

    residual = planes["normal_residual"][covered].astype(np.float64)
    shifted = binding.normals[covered] + residual
    if np.any(np.linalg.norm(shifted, axis=-1) < 1e-8):
        raise AssetError(
            "invariant violated: normal residual cancels the base normal"
        )

    # assembly re-derives activations and normalizations end to end
    relightable = assemble_relightable(planes, binding)
    assemble_fullon(planes, binding)
    return {"gaussians": len(relightable)}


def cmd_validate(args) -> int:
    asset = _load_asset(args.asset)
    info = _check_asset_invariants(asset)
    _print_stats({"asset": args.asset, "status": "ok", **info})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsrelight",
                     description="Relightable Gaussian avatar toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("gen-demo", help="write a deterministic synthetic asset")
    p.add_argument("--out", required=True, help="asset directory to create")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--resolution", type=int)
    p.add_argument("--sh-order", type=int)
    p.add_argument("--config", help="TOML file of key = value flag defaults")
    p.set_defaults(func=cmd_gen_demo)

    p = sub.add_parser("render", help="render an asset under one light condition")
    p.add_argument("asset", help="asset directory")
    p.add_argument("--env", help="equirectangular PFM environment map")
    p.add_argument("--rig", help="rig JSON (directions)")
    p.add_argument("--weights", help="per-light RGB intensities JSON")
    p.add_argument("--fullon", action="store_true", default=None,
                   help="use the baked flat-lit colors")
    p.add_argument("--out-pfm", help="write linear HDR image here")
    p.add_argument("--out-png", help="write tone-mapped preview here")
    p.add_argument("--background", type=float, nargs=3, metavar=("R", "G", "B"))
    _add_camera_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("olat", help="render one frame per rig light")
    p.add_argument("asset")
    p.add_argument("--rig", help="rig JSON (directions)")
    p.add_argument("--out-dir", required=True)
    _add_camera_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_olat)

    p = sub.add_parser("relight", help="render under an environment map")
    p.add_argument("asset")
    p.add_argument("--env", help="equirectangular PFM environment map")
    p.add_argument("--mode", choices=("direct", "ibr-10x20"))
    p.add_argument("--out-pfm")
    p.add_argument("--out-png")
    _add_camera_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("invert",
                       help="recover light intensities from rendered views")
    p.add_argument("asset")
    p.add_argument("--rig", help="rig JSON (directions)")
    p.add_argument("--views", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="pixel noise sigma")
    p.add_argument("--out", help="write recovered intensities JSON here")
    _add_camera_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("project-env", help="project a map onto the SH basis")
    p.add_argument("--env", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--out", help="coefficients JSON (stdout if omitted)")
    p.add_argument("--config", help="TOML file of key = value flag defaults")
    p.set_defaults(func=cmd_project_env)

    p = sub.add_parser("validate", help="check every asset invariant")
    p.add_argument("asset")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"gsrelight: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssetError as exc:
        print(f"gsrelight: {exc}", file=sys.stderr)
        return EXIT_ASSET
    except NumericError as exc:
        print(f"gsrelight: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GsrelightError as exc:  # base-class fallback
        print(f"gsrelight: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"gsrelight: {exc}", file=sys.stderr)
        return EXIT_ASSET


if __name__ == "__main__":
    sys.exit(main())
