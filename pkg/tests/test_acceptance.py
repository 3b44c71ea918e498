"""Ten end-to-end acceptance checks with pinned tolerances.

One test per criterion.  Each registers a single PASS/FAIL line (with
the measured value next to its budget) that pytest prints in the
terminal summary, and fails the normal way if any budget is exceeded.
Wall-clock budgets are part of the criteria and asserted too.
"""

import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from gsrelight import losses
from gsrelight.avatar import assemble_relightable
from gsrelight.demo import demo_camera, gen_demo_avatar
from gsrelight.envmap import (
    EnvironmentMap,
    PointLightSet,
    env_to_point_lights,
    fibonacci_rig_directions,
    grid_rig_directions,
    prefilter_env,
    sample_env,
    texel_directions,
)
from gsrelight.mesh import CoarseMesh
from gsrelight.relight import (
    ibr_relight,
    invert_lighting,
    relight_under_env,
    render_olat_stack,
)
from gsrelight.sg import sg_sphere_integral
from gsrelight.sh import QuadratureSpec, eval_sh_basis_many, fibonacci_sphere
from gsrelight.shading import (
    diffuse_grad_albedo,
    prepare_point_lights,
    reflect_axes,
    shade_diffuse,
    shade_set,
    shade_specular_env,
    shade_specular_point,
    specular_point_grad_intensity,
    specular_point_grad_visibility,
)
from gsrelight.splat import RenderTarget, render


@pytest.fixture
def report(request):
    def _report(number: int, label: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {label}: {'PASS' if ok else 'FAIL'} ({detail})"
        request.config._criterion_lines[number] = line
        assert ok, line

    return _report


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _rms(a):
    return float(np.sqrt(np.mean(np.square(a))))


@pytest.fixture(scope="session")
def head256():
    asset = gen_demo_avatar(seed=0, resolution=256)
    return assemble_relightable(asset.planes, asset.binding())


@pytest.fixture(scope="session")
def head128():
    asset = gen_demo_avatar(seed=1, resolution=128)
    return assemble_relightable(asset.planes, asset.binding())


@pytest.fixture(scope="session")
def cam256():
    return demo_camera(256, 256)


@pytest.fixture(scope="session")
def cam128():
    return demo_camera(128, 128)


@pytest.fixture(scope="session")
def smooth_env():
    """Order-1 radiance, strictly positive, so SH truncation is exact
    on the diffuse path and small everywhere else."""
    dirs = texel_directions(16)
    pixels = np.stack(
        [
            0.50 + 0.30 * dirs[..., 2],
            0.45 + 0.20 * dirs[..., 0],
            0.40 + 0.15 * dirs[..., 1],
        ],
        axis=-1,
    )
    return EnvironmentMap(pixels)


def _random_rig(rng, count):
    return PointLightSet(
        _unit(rng.standard_normal((count, 3))),
        rng.uniform(0.1, 1.0, (count, 3)),
    )


def test_criterion_01_sg_integral_oracle(report):
    t0 = time.perf_counter()
    nodes = fibonacci_sphere(1_000_000)
    weight = 4.0 * math.pi / len(nodes)
    rng = np.random.default_rng(0)
    worst = 0.0
    for sigma in (0.05, 0.1, 0.25, 0.5, 0.9):
        axis = _unit(rng.standard_normal(3))
        quadrature = weight * np.exp((nodes @ axis - 1.0) / sigma).sum()
        closed = sg_sphere_integral(sigma)
        worst = max(worst, abs(quadrature - closed) / closed)
    elapsed = time.perf_counter() - t0
    report(
        1, "lobe integral closed form vs 1e6-node quadrature",
        worst < 1e-5 and elapsed < 10.0,
        f"max rel err {worst:.2e} budget 1e-5, {elapsed:.1f}s budget 10s",
    )


def test_criterion_02_sh_orthonormality(report):
    t0 = time.perf_counter()
    dirs, w = QuadratureSpec().nodes()
    basis = eval_sh_basis_many(dirs, 4)
    gram = (basis * w[:, None]).T @ basis
    err = float(np.abs(gram - np.eye(25)).max())
    elapsed = time.perf_counter() - t0
    report(
        2, "basis orthonormality to order 4, default quadrature",
        err < 1e-4 and elapsed < 30.0,
        f"max |gram - identity| {err:.2e} budget 1e-4, {elapsed:.1f}s budget 30s",
    )


def test_criterion_03_light_linearity(report, head256, cam256):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    rig_a = _random_rig(rng, 12)
    rig_b = _random_rig(rng, 12)
    rig_sum = PointLightSet(
        np.concatenate([rig_a.directions, rig_b.directions]),
        np.concatenate([rig_a.intensities, rig_b.intensities]),
    )
    frames = []
    clamps = 0
    for rig in (rig_a, rig_b, rig_sum):
        prepared = prepare_point_lights(rig, head256.sh_order)
        colors, stats = shade_set(head256, prepared, cam256.position)
        clamps += stats.clamp_activations
        target, _ = render(head256, colors, cam256)  # black background
        frames.append(target.pixels)
    rms = _rms(frames[2] - frames[0] - frames[1])
    elapsed = time.perf_counter() - t0
    report(
        3, "end-to-end light linearity, 256x256",
        rms < 1e-6 and clamps == 0 and elapsed < 60.0,
        f"RMS {rms:.2e} budget 1e-6, clamp activations {clamps}, "
        f"{elapsed:.1f}s budget 60s",
    )


def test_criterion_04_ibr_equivalence(report, head128, cam128, smooth_env):
    t0 = time.perf_counter()
    grid_dirs, rig_id = grid_rig_directions(10, 20)
    lights = env_to_point_lights(smooth_env, grid_dirs, rig_id)

    stack = render_olat_stack(head128, lights, cam128)
    ibr = ibr_relight(stack, lights.intensities).pixels

    prepared = prepare_point_lights(lights, head128.sh_order)
    colors, _ = shade_set(head128, prepared, cam128.position)
    point, _ = render(head128, colors, cam128)
    rms_point = _rms(ibr - point.pixels)

    direct = relight_under_env(head128, smooth_env, cam128, mode="direct").pixels
    rel_env = _rms(ibr - direct) / _rms(direct)
    elapsed = time.perf_counter() - t0
    report(
        4, "frame superposition vs direct renders, 128x128",
        rms_point < 1e-5 and rel_env < 0.03 and elapsed < 300.0,
        f"point-light RMS {rms_point:.2e} budget 1e-5, env rel RMS "
        f"{rel_env:.4f} budget 0.03, {elapsed:.1f}s budget 300s",
    )


def test_criterion_05_inversion_round_trip(report, head128):
    t0 = time.perf_counter()
    dirs, rig_id = fibonacci_rig_directions(32)
    rig = PointLightSet(dirs, np.ones((32, 3)), rig_id)
    truth = np.random.default_rng(20).uniform(0.2, 2.0, (32, 3))
    prepared = prepare_point_lights(PointLightSet(dirs, truth, rig_id), head128.sh_order)

    cameras = [demo_camera(128, 128, azimuth_deg=a) for a in (0.0, 90.0)]
    clean = []
    for cam in cameras:
        colors, _ = shade_set(head128, prepared, cam.position)
        target, _ = render(head128, colors, cam)
        clean.append(target)

    recovered = invert_lighting(list(zip(clean, cameras)), head128, rig)
    scale = np.linalg.norm(truth)
    err_clean = float(np.linalg.norm(recovered.intensities - truth) / scale)

    worst_noisy = 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        noisy = [
            (
                RenderTarget(
                    frame.pixels + rng.normal(0.0, 0.01, frame.pixels.shape),
                    frame.alpha,
                    frame.transmittance,
                ),
                cam,
            )
            for frame, cam in zip(clean, cameras)
        ]
        rec = invert_lighting(noisy, head128, rig)
        worst_noisy = max(
            worst_noisy, float(np.linalg.norm(rec.intensities - truth) / scale)
        )
    elapsed = time.perf_counter() - t0
    report(
        5, "32-light inversion round trip, 2 views",
        err_clean < 1e-4 and worst_noisy < 0.05 and elapsed < 300.0,
        f"noiseless rel err {err_clean:.2e} budget 1e-4, worst of 10 noisy "
        f"seeds {worst_noisy:.4f} budget 0.05, {elapsed:.1f}s budget 300s",
    )


def test_criterion_06_prefiltered_specular(report, smooth_env):
    t0 = time.perf_counter()
    prefiltered = prefilter_env(smooth_env)
    rng = np.random.default_rng(30)
    count = 64
    normals = _unit(rng.standard_normal((count, 3)))
    views = _unit(rng.standard_normal((count, 3)))
    sigmas = rng.uniform(0.05, 0.6, count)
    vis = rng.uniform(0.2, 1.0, count)
    approx, n_clamped = shade_specular_env(normals, sigmas, vis, prefiltered, views)

    nodes = fibonacci_sphere(100_000)
    weight = 4.0 * math.pi / len(nodes)
    radiance = sample_env(smooth_env, nodes)
    axes = reflect_axes(views, normals)
    reference = np.empty((count, 3))
    for i in range(count):
        kernel = np.exp((nodes @ axes[i] - 1.0) / sigmas[i])
        reference[i] = vis[i] * weight * (kernel @ radiance)
    rel = float(np.linalg.norm(approx - reference) / np.linalg.norm(reference))
    elapsed = time.perf_counter() - t0
    report(
        6, "prefiltered specular vs direct quadrature, 64 draws",
        rel < 0.02 and n_clamped == 0 and elapsed < 120.0,
        f"rel RMS {rel:.4f} budget 0.02, ladder clamps {n_clamped}, "
        f"{elapsed:.1f}s budget 120s",
    )


def test_criterion_07_gradient_checks(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(40)
    count, order, n_lights = 100, 2, 6
    transfer = rng.normal(0.0, 0.3, (count, 9, 3))
    albedo = rng.uniform(0.1, 0.9, (count, 3))
    normals = _unit(rng.standard_normal((count, 3)))
    views = _unit(rng.standard_normal((count, 3)))
    sigmas = rng.uniform(0.1, 0.8, count)
    vis = rng.uniform(0.2, 1.0, count)
    lights = _random_rig(rng, n_lights)
    prepared = prepare_point_lights(lights, order)
    h = 1e-4

    def block_rel(analytic, fd):
        # error relative to the gradient block's own scale; tiny
        # components of a linear map otherwise drown in FD roundoff
        return float(np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-12))

    worst = 0.0
    grad_rho = diffuse_grad_albedo(transfer, prepared.sh)
    for c in range(3):
        plus, minus = albedo.copy(), albedo.copy()
        plus[:, c] += h
        minus[:, c] -= h
        fd = (
            shade_diffuse(plus, transfer, prepared.sh)[:, c]
            - shade_diffuse(minus, transfer, prepared.sh)[:, c]
        ) / (2 * h)
        worst = max(worst, block_rel(grad_rho[:, c], fd))

    grad_vis = specular_point_grad_visibility(normals, sigmas, lights, views)
    fd = (
        shade_specular_point(normals, sigmas, vis + h, lights, views)
        - shade_specular_point(normals, sigmas, vis - h, lights, views)
    ) / (2 * h)
    worst = max(worst, block_rel(grad_vis, fd))

    grad_int = specular_point_grad_intensity(normals, sigmas, vis, lights, views)
    for j in range(n_lights):
        for c in range(3):
            plus, minus = lights.intensities.copy(), lights.intensities.copy()
            plus[j, c] += h
            minus[j, c] -= h
            fd = (
                shade_specular_point(
                    normals, sigmas, vis, PointLightSet(lights.directions, plus), views
                )[:, c]
                - shade_specular_point(
                    normals, sigmas, vis, PointLightSet(lights.directions, minus), views
                )[:, c]
            ) / (2 * h)
            worst = max(worst, block_rel(grad_int[:, j], fd))
    elapsed = time.perf_counter() - t0
    report(
        7, "analytic gradients vs central differences, 100 Gaussians",
        worst < 1e-5 and elapsed < 60.0,
        f"max rel err {worst:.2e} budget 1e-5, {elapsed:.1f}s budget 60s",
    )


def test_criterion_08_loss_unit_vector(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(60)
    img = rng.uniform(0.2, 0.8, (16, 16, 3))
    failures = []

    def check(name, got, want, tol=1e-12):
        if not math.isclose(got, want, rel_tol=0.0, abs_tol=tol):
            failures.append(f"{name} got {got!r} want {want!r}")

    check("l1 identical", losses.l1_loss(img, img), 0.0)
    check("l1 +0.1", losses.l1_loss(img, img + 0.1), 0.1, tol=1e-10)

    a = np.full((16, 16, 3), 0.3)
    b = np.full((16, 16, 3), 0.5)
    closed = 1.0 - (2 * 0.3 * 0.5 + 1e-4) / (0.3**2 + 0.5**2 + 1e-4)
    check("ssim identical", losses.ssim_loss(img, img), 0.0, tol=1e-10)
    check("ssim constant pair", losses.ssim_loss(a, b), closed, tol=1e-10)

    check("scale at reference", losses.reg_scale(np.full((5, 3), 0.01), 0.01), 0.0)
    check("scale e ratio", losses.reg_scale(np.full((5, 3), 0.01 * math.e), 0.01), 1.0,
          tol=1e-9)

    deltas = np.zeros((5, 3))
    check("offset zero", losses.reg_offset(deltas), 0.0)
    deltas[2] = (1.0, 0.0, 0.0)
    check("offset single among 5", losses.reg_offset(deltas), 0.2)

    plane = rng.uniform(0.1, 0.7, (8, 8, 3))
    check("albedo at mean", losses.reg_albedo(plane, plane), 0.0)
    check("albedo +0.2", losses.reg_albedo(plane + 0.2, plane), 0.04, tol=1e-9)

    mono = np.tile([1.0, 1.0, 4.0], (7, 9, 1))
    check("monochrome equal channels", losses.reg_monochrome(np.ones((4, 9, 3))), 0.0)
    check("monochrome (1,1,4)", losses.reg_monochrome(mono), 2.0)

    colors = np.zeros((10, 3))
    check("negative none", losses.penalty_negative_diffuse(colors), 0.0)
    colors[3, 1] = -0.5
    check("negative single", losses.penalty_negative_diffuse(colors), 0.25 / 30.0)

    verts = rng.normal(0.0, 1.0, (12, 3))
    faces = np.array([[0, 1, 2]])
    uvs = np.array([[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]])
    mesh_a = CoarseMesh(verts, faces, uvs, faces)
    shift = np.array([0.1, -0.2, 0.05])
    mesh_b = CoarseMesh(verts + shift, faces, uvs, faces)
    check("geometry identical", losses.geometry_loss(mesh_a, mesh_a), 0.0)
    check("geometry translation", losses.geometry_loss(mesh_b, mesh_a),
          float(shift @ shift), tol=1e-12)

    weights = losses.loss_weights(0)
    for name, want in [("l1", 10.0), ("ssim", 0.2), ("geometry", 0.4),
                       ("scale", 0.01), ("negative_diffuse", 0.01),
                       ("monochrome", 0.01), ("identity", 0.01),
                       ("offset", 1.0), ("normal", 1.0), ("albedo", 10.0)]:
        check(f"weight {name} at 0", weights[name], want)
    late = losses.loss_weights(25_000)
    for name, want in [("offset", 0.001), ("normal", 0.0), ("albedo", 0.01)]:
        check(f"weight {name} annealed", late[name], want)
    check("stage sum single component",
          losses.stage_losses({"ssim": 1.0}), 0.2)

    elapsed = time.perf_counter() - t0
    report(
        8, "loss unit vector, stated examples reproduced",
        not failures and elapsed < 60.0,
        "all examples exact" if not failures else "; ".join(failures),
    )


def test_criterion_09_tiled_matches_naive(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(50)
    count = 1000
    scene = SimpleNamespace(
        positions=rng.normal(0.0, 0.1, (count, 3)),
        rotations=_unit(rng.standard_normal((count, 4))),
        scales=np.exp(rng.normal(math.log(0.008), 0.4, (count, 3))),
        opacities=rng.uniform(0.05, 0.95, count),
    )
    colors = rng.uniform(0.0, 1.0, (count, 3))
    mismatches = 0
    for azimuth in (0.0, 120.0, 240.0):
        cam = demo_camera(96, 96, azimuth_deg=azimuth)
        tiled, _ = render(scene, colors, cam, mode="tiled")
        naive, _ = render(scene, colors, cam, mode="naive")
        same = (
            np.array_equal(tiled.pixels, naive.pixels)
            and np.array_equal(tiled.alpha, naive.alpha)
            and np.array_equal(tiled.transmittance, naive.transmittance)
        )
        mismatches += 0 if same else 1
    elapsed = time.perf_counter() - t0
    report(
        9, "tiled splatter bit-matches naive full sort, 1k Gaussians",
        mismatches == 0 and elapsed < 60.0,
        f"{mismatches}/3 cameras differ, {elapsed:.1f}s budget 60s",
    )


def test_criterion_10_thread_determinism(report, head256, cam256, head128,
                                         cam128, smooth_env, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    rig = _random_rig(rng, 12)

    def pfm_bytes(tag, target):
        path = tmp_path / f"{tag}.pfm"
        target.save_pfm(path)
        return path.read_bytes()

    groups = []

    # criterion 3 configuration: point-rig render of the 256 head
    prepared = prepare_point_lights(rig, head256.sh_order)
    colors, _ = shade_set(head256, prepared, cam256.position)
    groups.append([
        pfm_bytes(f"c3-{run}", render(head256, colors, cam256, threads=t)[0])
        for run, t in (("t1a", 1), ("t1b", 1), ("t4", 4), ("t8", 8))
    ])

    # criterion 4 configuration: direct env relight and one basis frame
    groups.append([
        pfm_bytes(f"c4-{t}", relight_under_env(head128, smooth_env, cam128,
                                               threads=t))
        for t in (1, 1, 4)
    ])
    one_light = PointLightSet(np.array([[0.0, 0.0, 1.0]]), np.ones((1, 3)))
    groups.append([
        pfm_bytes(f"c4f-{t}", render_olat_stack(head128, one_light, cam128,
                                                threads=t)[0])
        for t in (1, 4)
    ])

    # criterion 5 configuration: one observation view
    dirs, rig_id = fibonacci_rig_directions(32)
    truth = np.random.default_rng(20).uniform(0.2, 2.0, (32, 3))
    prepared = prepare_point_lights(PointLightSet(dirs, truth, rig_id),
                                    head128.sh_order)
    colors, _ = shade_set(head128, prepared, cam128.position)
    groups.append([
        pfm_bytes(f"c5-{run}", render(head128, colors, cam128, threads=t)[0])
        for run, t in (("t1a", 1), ("t1b", 1), ("t4", 4))
    ])

    stray = sum(
        1 for group in groups for other in group[1:] if other != group[0]
    )
    elapsed = time.perf_counter() - t0
    report(
        10, "byte-identical images across repeats and thread counts",
        stray == 0,
        f"{stray} mismatching outputs over {sum(len(g) for g in groups)} "
        f"renders, {elapsed:.1f}s",
    )
