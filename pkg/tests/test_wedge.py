import numpy as np
import pytest

from qcfold.profiles import RadialProfile
from qcfold.wedge import (WedgeConfig, surface_map, surface_jacobian,
                          surface_normal, offset_map, classify_region,
                          REGION_NAMES, region_code)
from qcfold import verify


@pytest.fixture(scope="module")
def cfg():
    return WedgeConfig(k=16, eps=0.01, s=0.5, profile=RadialProfile(0.5, 0.1))


def wedge_points(cfg, n, rng, r_lo=0.01, pad=0.98):
    r = np.sqrt(rng.uniform(r_lo ** 2, pad ** 2, n))
    th = rng.uniform(0.0, 1.0, n) * cfg.alpha
    return r * np.cos(th), r * np.sin(th)


class TestSurfaceMap:
    def test_axis_images(self, cfg):
        x = np.linspace(0.01, 1.0, 50)
        out = surface_map(cfg, x, np.zeros_like(x))
        g = cfg.profile.value(x)
        assert np.max(np.abs(out[:, 0] - g)) <= 1e-14
        assert np.max(np.abs(out[:, 1])) == 0.0
        assert np.max(np.abs(out[:, 2])) == 0.0

    def test_inner_disk_is_exact_scaling(self, cfg):
        th = cfg.alpha * 0.3
        x, y = 0.3 * np.cos(th), 0.3 * np.sin(th)
        out = surface_map(cfg, x, y)
        assert np.max(np.abs(out - np.array([0.1 * x, 0.1 * y, 0.0]))) == 0.0

    def test_unit_arc_fixed(self, cfg):
        th = np.linspace(0, cfg.alpha, 64)
        out = surface_map(cfg, np.cos(th), np.sin(th))
        expected = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], -1)
        assert np.max(np.abs(out - expected)) <= 1e-12

    def test_angle_preserved_and_radius_monotone(self, cfg):
        rng = np.random.default_rng(3)
        x, y = wedge_points(cfg, 4000, rng)
        out = surface_map(cfg, x, y)
        th_in = np.arctan2(y, x)
        th_out = np.arctan2(out[:, 1], out[:, 0])
        assert np.max(np.abs(th_in - th_out)) <= 1e-12
        # radial monotonicity along a fixed angle
        r = np.linspace(0.01, 1.0, 500)
        th = cfg.alpha / 3
        img = surface_map(cfg, r * np.cos(th), r * np.sin(th))
        rad = np.hypot(img[:, 0], img[:, 1])
        assert np.all(np.diff(rad) > 0)

    def test_rejects_outside_halo(self, cfg):
        with pytest.raises(ValueError):
            surface_map(cfg, 1.2, 0.0)


class TestSurfaceJacobian:
    def test_axis_matches_profile_matrix(self, cfg):
        x = 0.75
        p = cfg.profile
        jac = surface_jacobian(cfg, x, 0.0)
        expected = np.array([[p.deriv(x), 0.0],
                             [0.0, p.value(x) / x],
                             [0.0, p.fold_height(x)]])
        assert np.max(np.abs(jac - expected)) <= 1e-13

    def test_inner_is_scaled_embedding(self, cfg):
        th = cfg.alpha / 2
        jac = surface_jacobian(cfg, 0.3 * np.cos(th), 0.3 * np.sin(th))
        expected = np.array([[0.1, 0.0], [0.0, 0.1], [0.0, 0.0]])
        assert np.max(np.abs(jac - expected)) == 0.0

    def test_matches_finite_differences(self, cfg):
        rng = np.random.default_rng(5)
        x, y = wedge_points(cfg, 500, rng, r_lo=0.05)
        jac = surface_jacobian(cfg, x, y)
        s = 1e-6
        gx = (surface_map(cfg, x + s, y, validate=False)
              - surface_map(cfg, x - s, y, validate=False)) / (2 * s)
        gy = (surface_map(cfg, x, y + s, validate=False)
              - surface_map(cfg, x, y - s, validate=False)) / (2 * s)
        err = max(np.abs(jac[..., 0] - gx).max(), np.abs(jac[..., 1] - gy).max())
        assert err < 1e-6

    def test_axis_conformality(self, cfg):
        x = np.linspace(0.02, 1.09, 100)
        jac = surface_jacobian(cfg, x, np.zeros_like(x), validate=False)
        dil = verify.surface_dilatation(jac)
        assert np.max(np.abs(dil - 1.0)) <= 1e-8


class TestNormal:
    def test_inner_normal_is_vertical(self, cfg):
        th = cfg.alpha / 2
        n = surface_normal(cfg, 0.2 * np.cos(th), 0.2 * np.sin(th))
        assert np.max(np.abs(n - np.array([0, 0, 1.0]))) == 0.0

    def test_axis_formula(self, cfg):
        x = 0.75
        p = cfg.profile
        n = surface_normal(cfg, x, 0.0)
        gp, g, h = p.deriv(x), p.value(x), p.fold_height(x)
        expected = np.array([0.0, -h / gp, g / (x * gp)])
        assert np.max(np.abs(n - expected)) <= 1e-13
        assert n[2] > 0

    def test_unit_length_everywhere(self, cfg):
        rng = np.random.default_rng(11)
        x, y = wedge_points(cfg, 1000, rng)
        n = surface_normal(cfg, x, y)
        assert np.max(np.abs(np.linalg.norm(n, axis=-1) - 1.0)) <= 1e-12

    def test_positive_vertical_component_inside(self, cfg):
        rng = np.random.default_rng(13)
        x, y = wedge_points(cfg, 1000, rng)
        n = surface_normal(cfg, x, y)
        assert np.all(n[:, 2] > 0)


class TestOffsetMap:
    def test_zero_offset_is_surface(self, cfg):
        rng = np.random.default_rng(17)
        x, y = wedge_points(cfg, 200, rng)
        out = offset_map(cfg, x, y, np.zeros_like(x))
        assert np.max(np.abs(out - surface_map(cfg, x, y))) == 0.0

    def test_inner_region_exact_scaling(self, cfg):
        th = cfg.alpha * 0.6
        x, y = 0.35 * np.cos(th), 0.35 * np.sin(th)
        t = 0.4 * float(cfg.phi(x, y))
        out = offset_map(cfg, x, y, t)
        assert np.max(np.abs(out - 0.1 * np.array([x, y, t]))) <= 1e-12

    def test_vertical_derivative_is_scaled_normal(self, cfg):
        rng = np.random.default_rng(19)
        x, y = wedge_points(cfg, 200, rng)
        s = 1e-7
        fd = (offset_map(cfg, x, y, np.full_like(x, s), extended=True)
              - offset_map(cfg, x, y, np.full_like(x, -s), extended=True)) / (2 * s)
        p = cfg.profile
        r = np.hypot(x, y)
        gp = np.where(r < p.a, p.b, p.deriv(r))
        expected = gp[:, None] * surface_normal(cfg, x, y)
        assert np.max(np.abs(fd - expected)) < 1e-7

    def test_domain_validation(self, cfg):
        with pytest.raises(ValueError):
            offset_map(cfg, 0.5, 0.01, 0.5)  # far beyond phi
        # extended mode allows |t| <= eps
        out = offset_map(cfg, 0.5, 0.01, cfg.eps / 2, extended=True)
        assert out.shape == (3,)


class TestRegions:
    def test_codes_and_tags(self, cfg):
        assert REGION_NAMES[region_code("S2")] == "S2"
        th = cfg.alpha / 2
        x, y = 0.5 * np.cos(th), 0.5 * np.sin(th)
        phi = float(cfg.phi(x, y))
        pts = np.array([
            [x, y, 0.0],
            [x, y, -phi / 3],
            [x, y, 1.5],
            [x, y, -(phi + 1.0) / 2],
            [x, y, -1.7],
            [x, y, phi],       # tie resolved toward the slab
        ])
        codes = classify_region(cfg, pts)
        names = [REGION_NAMES[c] for c in codes]
        assert names == ["E_plus", "E_minus", "S2", "S1_prime", "S2_prime",
                         "E_plus"]

    def test_outside_cell_raises(self, cfg):
        with pytest.raises(ValueError):
            classify_region(cfg, np.array([0.5, 0.02, 2.5]))
        with pytest.raises(ValueError):
            classify_region(cfg, np.array([1.5, 0.02, 0.5]))


class TestGraphAndOrientation:
    def test_graph_property_on_grid(self, cfg):
        n = 200
        r = np.linspace(1e-3, 1.0, n)
        u = np.linspace(0.0, 1.0, n)
        rr, uu = np.meshgrid(r, u, indexing="ij")
        x = (rr * np.cos(uu * cfg.alpha)).ravel()
        y = (rr * np.sin(uu * cfg.alpha)).ravel()
        dom = np.stack([x, y], -1)
        img = surface_map(cfg, x, y)
        bad = verify.graph_scan(img, dom, proj_tol=1e-9, sep_tol=1e-3)
        assert bad == []

    def test_offset_lies_above_graph(self, cfg):
        # push off the surface by +phi/2 and compare against the graph
        # height at the same planar projection (found through the inverse
        # of the radius profile)
        from scipy.optimize import brentq
        rng = np.random.default_rng(23)
        x, y = wedge_points(cfg, 50, rng, r_lo=0.1, pad=0.9)
        t = 0.5 * cfg.phi(x, y)
        up = offset_map(cfg, x, y, t)
        p = cfg.profile
        for j in range(len(x)):
            rad = np.hypot(up[j, 0], up[j, 1])
            ang = np.arctan2(up[j, 1], up[j, 0])
            r_pre = brentq(lambda rr: p.value(rr) - rad, 0.0, 1.2)
            graph_t = r_pre * p.fold_height(r_pre) * ang
            assert up[j, 2] > graph_t
