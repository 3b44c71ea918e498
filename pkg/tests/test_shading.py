"""Shading semantics: diffuse SH dot, SG specular, clamping, gradients."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from gsrelight.errors import InvalidInputError
from gsrelight import envmap, sg, sh, shading


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def constant_light(order, value=1.0):
    """SH projection of a constant unit-radiance environment."""
    coeffs = np.zeros((sh.n_coeffs(order), 3))
    coeffs[0] = value * 2.0 * math.sqrt(math.pi)
    return sh.SHCoefficients(order, coeffs)


class TestDiffuse:
    def test_zero_transfer_is_black(self):
        light = constant_light(2)
        out = shading.shade_diffuse(np.ones(3), np.zeros((9, 3)), light)
        np.testing.assert_array_equal(out, 0.0)

    def test_dc_transfer_under_constant_light(self):
        # transfer one-hot at DC with value 1 picks out the light's DC
        # coefficient, 2 sqrt(pi) for a unit constant environment.
        light = constant_light(1)
        transfer = np.zeros((4, 3))
        transfer[0] = 1.0
        out = shading.shade_diffuse(np.ones(3), transfer, light)
        np.testing.assert_allclose(out, 2.0 * math.sqrt(math.pi), rtol=1e-12)

    def test_linear_in_albedo(self):
        rng = np.random.default_rng(0)
        light = sh.SHCoefficients(2, rng.standard_normal((9, 3)))
        transfer = rng.standard_normal((9, 3))
        albedo = rng.uniform(0.1, 1.0, 3)
        one = shading.shade_diffuse(albedo, transfer, light)
        two = shading.shade_diffuse(2.0 * albedo, transfer, light)
        np.testing.assert_array_equal(two, 2.0 * one)

    def test_order_mismatch_rejected(self):
        light = constant_light(2)
        with pytest.raises(InvalidInputError):
            shading.shade_diffuse(np.ones(3), np.zeros((4, 3)), light)

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(1)
        light = sh.SHCoefficients(1, rng.standard_normal((4, 3)))
        albedo = rng.uniform(0, 1, (5, 3))
        transfer = rng.standard_normal((5, 4, 3))
        batch = shading.shade_diffuse(albedo, transfer, light)
        for k in range(5):
            np.testing.assert_array_equal(
                batch[k], shading.shade_diffuse(albedo[k], transfer[k], light)
            )

    def test_can_be_negative_before_clamp(self):
        light = constant_light(0)
        transfer = np.full((1, 3), -1.0)
        out = shading.shade_diffuse(np.ones(3), transfer, light)
        assert np.all(out < 0.0)


class TestSpecularPoint:
    def test_zero_visibility_is_black(self):
        lights = envmap.PointLightSet(np.array([[0.0, 0.0, 1.0]]), np.ones((1, 3)))
        out = shading.shade_specular_point(
            np.array([0.0, 0.0, 1.0]), 0.3, 0.0, lights, np.array([0.0, 0.0, 1.0])
        )
        np.testing.assert_array_equal(out, 0.0)

    def test_light_on_reflected_axis_hits_peak(self):
        # view along +z onto a tilted normal; put the light exactly on the
        # mirrored axis so the lobe evaluates to 1.
        view = np.array([0.0, 0.0, 1.0])
        normal = unit([0.0, math.sin(0.2), math.cos(0.2)])
        axis = sg.reflect_lobe_axis(view, normal)
        lights = envmap.PointLightSet(axis[None, :], np.ones((1, 3)))
        out = shading.shade_specular_point(normal, 0.2, 1.0, lights, view)
        np.testing.assert_allclose(out, 1.0, rtol=1e-12)

    def test_response_peaks_at_reflected_axis(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            view = unit(rng.standard_normal(3))
            normal = unit(rng.standard_normal(3))
            axis = sg.reflect_lobe_axis(view, normal)
            others = rng.standard_normal((30, 3))
            others /= np.linalg.norm(others, axis=1, keepdims=True)
            on_axis = shading.shade_specular_point(
                normal, 0.3, 1.0,
                envmap.PointLightSet(axis[None, :], np.ones((1, 3))), view,
            )
            for d in others:
                off_axis = shading.shade_specular_point(
                    normal, 0.3, 1.0,
                    envmap.PointLightSet(d[None, :], np.ones((1, 3))), view,
                )
                assert np.all(off_axis <= on_axis + 1e-12)

    def test_matches_dirac_quadrature(self):
        # A point-light set IS the quadrature of the specular integral with
        # delta masses; summing manually must agree term for term.
        rng = np.random.default_rng(4)
        view = unit(rng.standard_normal(3))
        normal = unit(rng.standard_normal(3))
        dirs = rng.standard_normal((7, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        intensities = rng.uniform(0, 2, (7, 3))
        lights = envmap.PointLightSet(dirs, intensities)
        sigma, vis = 0.4, 0.8
        got = shading.shade_specular_point(normal, sigma, vis, lights, view)
        lobe = sg.SpecularLobe(sg.reflect_lobe_axis(view, normal), sigma)
        manual = vis * sum(
            sg.sg_point_light_response(lobe, d, i) for d, i in zip(dirs, intensities)
        )
        np.testing.assert_allclose(got, manual, rtol=1e-12)


class TestSpecularEnv:
    def test_constant_env_closed_form(self):
        m = envmap.EnvironmentMap(np.full((16, 32, 3), 2.5))
        pref = envmap.prefilter_env(m)
        rng = np.random.default_rng(5)
        for _ in range(5):
            view = unit(rng.standard_normal(3))
            normal = unit(rng.standard_normal(3))
            sigma = rng.uniform(0.05, 0.7)
            out, n_clamped = shading.shade_specular_env(
                normal, sigma, 0.6, pref, view
            )
            assert n_clamped == 0
            expected = 0.6 * 2.5 * sg.sg_sphere_integral(sigma)
            np.testing.assert_allclose(out, expected, rtol=1e-3)

    def test_zero_env_is_black(self):
        m = envmap.EnvironmentMap(np.zeros((8, 16, 3)))
        pref = envmap.prefilter_env(m, sigmas=(0.1, 0.4))
        out, _ = shading.shade_specular_env(
            np.array([0.0, 0.0, 1.0]), 0.2, 1.0, pref, np.array([0.0, 0.0, 1.0])
        )
        np.testing.assert_array_equal(out, 0.0)

    def test_sigma_outside_ladder_is_counted(self):
        m = envmap.EnvironmentMap(np.ones((8, 16, 3)))
        pref = envmap.prefilter_env(m, sigmas=(0.1, 0.4))
        _, n_clamped = shading.shade_specular_env(
            np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),
            np.array([0.02, 0.2]),
            np.array([1.0, 1.0]),
            pref,
            np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),
        )
        assert n_clamped == 1

    def test_agrees_with_quadrature_on_smooth_map(self):
        # order-1 positive radiance, random lobes; the prefiltered lookup
        # must track the dense quadrature of the true integral.
        rng = np.random.default_rng(6)
        h = 32
        dirs_grid = envmap.texel_directions(h).reshape(-1, 3)
        basis = sh.eval_sh_basis_many(dirs_grid, 1)
        coeffs = rng.uniform(-0.25, 0.25, (4, 3))
        coeffs[0] = 1.2
        m = envmap.EnvironmentMap((basis @ coeffs).reshape(h, 2 * h, 3))
        pref = envmap.prefilter_env(m)

        qdirs, qw = sh.QuadratureSpec(100_000).nodes()
        got, oracle = [], []
        for _ in range(16):
            view = unit(rng.standard_normal(3))
            normal = unit(rng.standard_normal(3))
            sigma = math.exp(rng.uniform(math.log(0.1), math.log(0.6)))
            vis = rng.uniform(0.2, 1.0)
            out, _ = shading.shade_specular_env(normal, sigma, vis, pref, view)
            got.append(out)
            axis = sg.reflect_lobe_axis(view, normal)
            radiance = envmap.sample_env(m, qdirs)
            kern = sg.sg_eval_dots(qdirs @ axis, sigma)
            oracle.append(vis * np.sum(radiance * (kern * qw)[:, None], axis=0))
        got, oracle = np.array(got), np.array(oracle)
        rel_rms = np.sqrt(np.mean((got - oracle) ** 2)) / np.sqrt(np.mean(oracle**2))
        assert rel_rms < 0.02


class TestShadeSet:
    def make_set(self, albedo, transfer, roughness, visibility, normal):
        return SimpleNamespace(
            positions=np.array([[0.0, 0.0, 0.0]]),
            albedo=np.asarray(albedo, dtype=np.float64)[None, :],
            transfer=np.asarray(transfer, dtype=np.float64)[None, ...],
            roughness=np.array([roughness], dtype=np.float64),
            visibility=np.array([visibility], dtype=np.float64),
            normals=np.asarray(normal, dtype=np.float64)[None, :],
        )

    def test_clamp_floors_negative_channels(self):
        light_sh = constant_light(0)
        dc = 2.0 * math.sqrt(math.pi)
        transfer = (np.array([-0.1, 0.2, 0.3]) / dc)[None, :].T.reshape(1, 3)
        g = self.make_set(np.ones(3), transfer, 0.3, 0.0, [0.0, 0.0, 1.0])
        lights = envmap.PointLightSet(
            np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3))
        )
        prepared = shading.PreparedLight(light_sh, lights=lights)
        colors, stats = shading.shade_set(g, prepared, np.array([0.0, 0.0, 2.0]))
        np.testing.assert_allclose(colors[0], [0.0, 0.2, 0.3], atol=1e-12)
        assert stats.clamp_activations == 1

    def test_both_terms_zero_is_black(self):
        g = self.make_set(np.zeros(3), np.zeros((1, 3)), 0.3, 0.0, [0.0, 0.0, 1.0])
        lights = envmap.PointLightSet(np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3)))
        prepared = shading.PreparedLight(constant_light(0, 0.0), lights=lights)
        colors, stats = shading.shade_set(g, prepared, np.array([0.0, 0.0, 2.0]))
        np.testing.assert_array_equal(colors, 0.0)
        assert stats.clamp_activations == 0

    def test_superposition_when_clamp_inactive(self):
        rng = np.random.default_rng(7)
        n_g = 12
        g = SimpleNamespace(
            positions=rng.normal(0, 0.1, (n_g, 3)),
            albedo=rng.uniform(0.2, 0.9, (n_g, 3)),
            transfer=np.abs(rng.normal(0.2, 0.1, (n_g, 4, 3))),
            roughness=rng.uniform(0.2, 0.7, n_g),
            visibility=rng.uniform(0.1, 0.9, n_g),
            normals=rng.standard_normal((n_g, 3)),
        )
        g.normals /= np.linalg.norm(g.normals, axis=1, keepdims=True)
        cam = np.array([0.0, 0.0, 2.0])

        d1 = sh.fibonacci_sphere(5)
        d2 = sh.fibonacci_sphere(7)[3:]
        i1 = rng.uniform(0, 1, (5, 3))
        i2 = rng.uniform(0, 1, (4, 3))
        l1 = envmap.PointLightSet(d1, i1)
        l2 = envmap.PointLightSet(d2, i2)
        l12 = envmap.PointLightSet(
            np.concatenate([d1, d2]), np.concatenate([i1, i2])
        )
        c1, _ = shading.shade_set(g, shading.prepare_point_lights(l1, 1), cam)
        c2, _ = shading.shade_set(g, shading.prepare_point_lights(l2, 1), cam)
        c12, _ = shading.shade_set(g, shading.prepare_point_lights(l12, 1), cam)
        np.testing.assert_allclose(c12, c1 + c2, rtol=1e-10, atol=1e-13)

    def test_prepared_light_needs_exactly_one_source(self):
        with pytest.raises(InvalidInputError):
            shading.PreparedLight(constant_light(0))


class TestGradients:
    def test_albedo_gradient_matches_central_difference(self):
        rng = np.random.default_rng(8)
        light = sh.SHCoefficients(2, rng.uniform(0.2, 1.0, (9, 3)))
        transfer = rng.uniform(0.1, 0.5, (9, 3))
        albedo = rng.uniform(0.3, 0.8, 3)
        grad = shading.diffuse_grad_albedo(transfer, light)
        h = 1e-4
        for c in range(3):
            ap, am = albedo.copy(), albedo.copy()
            ap[c] += h
            am[c] -= h
            fd = (
                shading.shade_diffuse(ap, transfer, light)[c]
                - shading.shade_diffuse(am, transfer, light)[c]
            ) / (2 * h)
            assert grad[c] == pytest.approx(fd, rel=1e-5)

    def test_visibility_gradient_matches_central_difference(self):
        rng = np.random.default_rng(9)
        view = unit(rng.standard_normal(3))
        normal = unit(rng.standard_normal(3))
        dirs = sh.fibonacci_sphere(6)
        lights = envmap.PointLightSet(dirs, rng.uniform(0.2, 1.0, (6, 3)))
        sigma, vis = 0.35, 0.5
        grad = shading.specular_point_grad_visibility(normal, sigma, lights, view)
        h = 1e-4
        fd = (
            shading.shade_specular_point(normal, sigma, vis + h, lights, view)
            - shading.shade_specular_point(normal, sigma, vis - h, lights, view)
        ) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5)

    def test_intensity_gradient_matches_central_difference(self):
        rng = np.random.default_rng(10)
        view = unit(rng.standard_normal(3))
        normal = unit(rng.standard_normal(3))
        dirs = sh.fibonacci_sphere(5)
        base = rng.uniform(0.2, 1.0, (5, 3))
        sigma, vis = 0.3, 0.7
        grad = shading.specular_point_grad_intensity(
            normal, sigma, vis, envmap.PointLightSet(dirs, base), view
        )  # (J,)
        h = 1e-4
        for j in range(5):
            ip, im = base.copy(), base.copy()
            ip[j, 1] += h
            im[j, 1] -= h
            fd = (
                shading.shade_specular_point(
                    normal, sigma, vis, envmap.PointLightSet(dirs, ip), view
                )[1]
                - shading.shade_specular_point(
                    normal, sigma, vis, envmap.PointLightSet(dirs, im), view
                )[1]
            ) / (2 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-5)
