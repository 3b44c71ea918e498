"""Procedural avatar generator: determinism, coverage, kernel positivity."""

import math

import numpy as np
import pytest

from gsrelight import avatar, demo, envmap, mesh, shading, sh
from gsrelight.errors import InvalidInputError


class TestUvSphere:
    def test_mesh_is_well_formed(self):
        m = demo.uv_sphere([0.12, 0.12, 0.12])
        assert len(m.faces) == len(m.uv_faces)
        radii = np.linalg.norm(m.vertices, axis=1)
        np.testing.assert_allclose(radii, 0.12, rtol=1e-12)

    def test_normals_point_outward(self):
        m = demo.uv_sphere([0.1, 0.12, 0.15])
        normals = mesh.vertex_normals(m)
        radial = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
        assert np.all(np.sum(normals * radial, axis=1) > 0.5)

    def test_uv_atlas_has_no_overlaps(self):
        m = demo.uv_sphere([0.12, 0.12, 0.12])
        binding = mesh.bind_texels(m, 64)  # raises on ambiguous coverage
        assert binding.n_covered > 0.9 * 64 * 64

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(InvalidInputError):
            demo.uv_sphere([0.1, -0.1, 0.1])
        with pytest.raises(InvalidInputError):
            demo.uv_sphere([0.1, 0.1, 0.1], stacks=2)


class TestLambertianKernel:
    def test_zonal_matches_hand_integrals(self):
        # projecting max(cos, 0)/pi onto the zonal basis by hand:
        # l=0: Y00/pi * integral of cos over the hemisphere = Y00
        # l=1: 0.4886/pi * 2pi/3 ; l=2: 0.3154/2 ; l=3: odd, zero
        z = demo.lambertian_zonal(3)
        expected = [
            0.28209479177387814,
            0.4886025119029199 * 2.0 / 3.0,
            0.31539156525252005 / 2.0,
            0.0,
        ]
        np.testing.assert_allclose(z, expected, atol=1e-4)

    def test_lifted_kernel_is_positive_everywhere(self):
        zonal = demo.lifted_lambertian_zonal(3)
        dirs, _ = sh.QuadratureSpec(20_000).nodes()
        basis = sh.eval_sh_basis_many(dirs, 3)
        cols = [l * (l + 1) for l in range(4)]
        profile = basis[:, cols] @ zonal
        assert profile.min() >= demo._TRANSFER_FLOOR - 1e-9

    def test_lift_only_touches_dc(self):
        plain = demo.lambertian_zonal(3)
        lifted = demo.lifted_lambertian_zonal(3)
        np.testing.assert_array_equal(plain[1:], lifted[1:])
        assert lifted[0] > plain[0]

    def test_rotation_to_pole_is_identity(self):
        zonal = demo.lifted_lambertian_zonal(2)
        coeffs = demo.transfer_from_normals(
            np.array([[0.0, 0.0, 1.0]]), zonal
        )[0]
        # at the pole only zonal entries survive and keep their values
        for l in range(3):
            assert coeffs[l * (l + 1)] == pytest.approx(
                zonal[l] * math.sqrt(4 * math.pi / (2 * l + 1))
                * sh.eval_sh_basis(np.array([0.0, 0.0, 1.0]), 2)[l * (l + 1)],
                rel=1e-12,
            )


class TestGenDemoAvatar:
    def test_same_seed_identical_bytes(self):
        a = demo.gen_demo_avatar(seed=5, resolution=32)
        b = demo.gen_demo_avatar(seed=5, resolution=32)
        for name in a.planes.planes:
            np.testing.assert_array_equal(a.planes[name], b.planes[name])
        np.testing.assert_array_equal(a.mesh.vertices, b.mesh.vertices)

    def test_seed_changes_fields(self):
        a = demo.gen_demo_avatar(seed=5, resolution=32)
        b = demo.gen_demo_avatar(seed=6, resolution=32)
        assert not np.array_equal(a.planes["albedo"], b.planes["albedo"])

    def test_gaussian_count_matches_covered_texels(self):
        asset = demo.gen_demo_avatar(seed=1, resolution=64)
        binding = asset.binding()
        gaussians = avatar.assemble_relightable(asset.planes, binding)
        assert len(gaussians) == binding.n_covered

    def test_gaussians_sit_on_the_mesh(self):
        asset = demo.gen_demo_avatar(seed=2, resolution=48)
        binding = asset.binding()
        g = avatar.assemble_relightable(asset.planes, binding)
        np.testing.assert_array_equal(
            g.positions, binding.positions[g.texel_rows, g.texel_cols]
        )

    def test_parameter_ranges(self):
        asset = demo.gen_demo_avatar(seed=3, resolution=48)
        g = avatar.assemble_relightable(asset.planes, asset.binding())
        assert np.all((g.roughness > 0.1) & (g.roughness < 0.5))
        assert np.all((g.visibility > 0.15) & (g.visibility < 0.85))
        assert np.all((g.opacities > 0.85) & (g.opacities < 0.99))
        assert np.all(g.scales > 0.0)

    def test_clamp_never_fires_under_nonnegative_light(self):
        asset = demo.gen_demo_avatar(seed=4, resolution=48)
        g = avatar.assemble_relightable(asset.planes, asset.binding())
        rng = np.random.default_rng(9)
        dirs, _ = envmap.fibonacci_rig_directions(24)
        lights = envmap.PointLightSet(dirs, rng.uniform(0.0, 3.0, (24, 3)))
        prepared = shading.prepare_point_lights(lights, g.sh_order)
        colors, stats = shading.shade_set(
            g, prepared, demo.demo_camera().position
        )
        assert stats.clamp_activations == 0
        assert colors.min() > 0.0

    def test_two_tone_preset_varies_albedo_with_latitude(self):
        asset = demo.gen_demo_avatar(
            seed=1, preset="ellipsoid-two-tone", resolution=64
        )
        albedo = asset.planes["albedo"]
        top = albedo[:16].mean(axis=(0, 1))
        bottom = albedo[-16:].mean(axis=(0, 1))
        assert top[0] > bottom[0]  # warm upper tone
        assert top[2] < bottom[2]  # cool lower tone

    def test_unknown_preset_rejected(self):
        with pytest.raises(InvalidInputError):
            demo.gen_demo_avatar(preset="cube-head")

    def test_asset_round_trips_through_disk(self, tmp_path):
        asset = demo.gen_demo_avatar(seed=7, resolution=32)
        avatar.save_avatar(asset, tmp_path / "demo")
        back = avatar.load_avatar(tmp_path / "demo")
        for name in asset.planes.planes:
            np.testing.assert_array_equal(asset.planes[name], back.planes[name])
        np.testing.assert_array_equal(asset.mesh.vertices, back.mesh.vertices)


class TestDemoCamera:
    def test_orbit_geometry(self):
        cam = demo.demo_camera()
        assert np.linalg.norm(cam.position) == pytest.approx(0.45)
        np.testing.assert_allclose(
            cam.world_to_camera([0.0, 0.0, 0.0])[:2], 0.0, atol=1e-12
        )

    def test_azimuth_moves_the_eye(self):
        cam = demo.demo_camera(azimuth_deg=90.0)
        np.testing.assert_allclose(
            cam.position, [0.0, 0.45, 0.0], atol=1e-12
        )
