import math

import numpy as np
import pytest

from qcfold.profiles import (RadialProfile, smooth_kernel, smooth_step,
                             smooth_step_d1, smooth_step_d2,
                             wedge_bump_poly, bump_normalization)
from qcfold.wedge import WedgeConfig


def test_kernel_values():
    assert smooth_kernel(0.0) == 0.0
    assert smooth_kernel(-3.0) == 0.0
    assert smooth_kernel(1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_kernel_underflow_is_zero():
    # e^(-1/x) underflows for tiny positive x; the limit value is 0
    assert smooth_kernel(1e-4) == 0.0


def test_step_endpoints_and_symmetry():
    assert smooth_step(-1.0) == 0.0
    assert smooth_step(2.0) == 1.0
    assert smooth_step(0.5) == 0.5
    x = np.linspace(0.0, 1.0, 2001)
    assert np.max(np.abs(smooth_step(x) + smooth_step(1.0 - x) - 1.0)) <= 1e-14


def test_step_monotone_with_positive_derivative():
    x = np.linspace(-0.5, 1.5, 4001)
    vals = smooth_step(x)
    assert np.all(np.diff(vals) >= 0)
    inner = (x > 1e-3) & (x < 1.0 - 1e-3)
    assert np.all(smooth_step_d1(x[inner]) > 0)


def test_step_derivatives_match_finite_differences():
    x = np.linspace(0.02, 0.98, 301)
    eps = 1e-6
    fd1 = (smooth_step(x + eps) - smooth_step(x - eps)) / (2 * eps)
    assert np.max(np.abs(fd1 - smooth_step_d1(x))) < 1e-7
    fd2 = (smooth_step_d1(x + eps) - smooth_step_d1(x - eps)) / (2 * eps)
    assert np.max(np.abs(fd2 - smooth_step_d2(x))) < 1e-5


class TestRadialProfile:
    def test_param_validation(self):
        with pytest.raises(ValueError):
            RadialProfile(0.0, 0.5)
        with pytest.raises(ValueError):
            RadialProfile(0.5, 1.0)

    def test_rejects_negative_radius(self):
        p = RadialProfile(0.5, 0.1)
        with pytest.raises(ValueError):
            p.value(-0.1)
        with pytest.raises(ValueError):
            p.deriv(np.array([0.5, -1.0]))
        with pytest.raises(ValueError):
            p.fold_height(-2.0)

    def test_plateau_values(self):
        p = RadialProfile(0.5, 0.1)
        r = np.linspace(0.0, 0.5, 101)
        assert np.max(np.abs(p.value(r) - 0.1 * r)) == 0.0
        r = np.linspace(1.0, 2.0, 101)
        assert np.max(np.abs(p.value(r) - r)) <= 1e-12

    def test_midpoint_closed_form(self):
        # step(1/2) = 1/2 exactly, so g(0.75) = 0.9*0.5*0.75 + 0.1*0.75
        p = RadialProfile(0.5, 0.1)
        assert p.value(0.75) == pytest.approx(0.4125, abs=1e-12)
        # step'(1/2) = 2 exactly: g'(0.75) = 1.8*2*0.75 + 0.55
        assert p.deriv(0.75) == pytest.approx(3.25, abs=1e-12)
        expected_h = math.sqrt(3.25 ** 2 - 0.55 ** 2)
        assert p.fold_height(0.75) == pytest.approx(expected_h, abs=1e-10)

    def test_fold_height_vanishes_off_the_band(self):
        p = RadialProfile(0.5, 0.1)
        assert p.fold_height(0.4) == 0.0
        assert p.fold_height(1.0) == 0.0
        assert p.fold_height(1.5) == 0.0

    def test_derivative_bounds_and_identity(self):
        for a in (0.5, 0.75, 0.9):
            p = RadialProfile(a, 0.1)
            r = np.linspace(1e-6, 2.0, 20001)
            gp = p.deriv(r)
            ratio = p.value(r) / r
            h = p.fold_height(r)
            assert np.all(gp >= 0.1 - 1e-9)
            assert gp.max() <= p.lipschitz_measured + 1e-12
            assert np.all(gp >= ratio - 1e-9)
            ident = np.abs(gp ** 2 - ratio ** 2 - h ** 2)
            assert np.max(ident / np.maximum(1.0, gp ** 2)) <= 1e-10

    def test_deriv_matches_finite_differences(self):
        p = RadialProfile(0.5, 0.1)
        r = np.linspace(0.01, 1.99, 999)
        eps = 1e-6
        fd = (p.value(r + eps) - p.value(r - eps)) / (2 * eps)
        rel = np.abs(fd - p.deriv(r)) / np.maximum(1.0, np.abs(fd))
        assert rel.max() < 1e-6

    def test_fold_height_deriv_matches_finite_differences(self):
        p = RadialProfile(0.5, 0.1)
        r = np.linspace(0.505, 0.995, 400)
        eps = 1e-7
        fd = (p.fold_height(r + eps) - p.fold_height(r - eps)) / (2 * eps)
        rel = np.abs(fd - p.fold_height_deriv(r)) / np.maximum(1.0, np.abs(fd))
        assert rel.max() < 1e-6

    def test_radicand_check(self):
        p = RadialProfile(0.5, 0.1)
        assert p.check_radicand(np.linspace(1e-3, 2, 5001)) >= -1e-12


class TestWedgeBump:
    def test_zero_on_all_boundary_pieces(self):
        k, eps = 8, 0.01
        cfg = WedgeConfig(k=k, eps=eps, s=1.0, profile=RadialProfile(0.5, 0.1))
        # radial edge at angle 0
        x = np.linspace(0, 1, 350)
        assert np.max(np.abs(cfg.psi(x, np.zeros_like(x)))) <= 1e-14
        # radial edge at angle pi/k
        a = np.pi / k
        assert np.max(np.abs(cfg.psi(x * np.cos(a), x * np.sin(a)))) <= 1e-14
        # unit arc
        th = np.linspace(0, a, 350)
        assert np.max(np.abs(cfg.psi(np.cos(th), np.sin(th)))) <= 1e-14

    def test_positive_inside_and_bounded(self):
        k, eps = 8, 0.01
        cfg = WedgeConfig(k=k, eps=eps, s=1.0, profile=RadialProfile(0.5, 0.1))
        rng = np.random.default_rng(0)
        r = np.sqrt(rng.uniform(0.01, 0.97, 2000))
        th = rng.uniform(0.02, 0.98, 2000) * np.pi / k
        vals = cfg.psi(r * np.cos(th), r * np.sin(th))
        assert np.all(vals > 0)
        assert np.all(vals <= eps + 1e-15)

    def test_centroid_value_matches_polynomial(self):
        k, eps = 8, 0.01
        cfg = WedgeConfig(k=k, eps=eps, s=1.0, profile=RadialProfile(0.5, 0.1))
        x, y = 0.5 * np.cos(np.pi / 16), 0.5 * np.sin(np.pi / 16)
        expected = eps * wedge_bump_poly(k, x, y) / bump_normalization(k)
        got = cfg.psi(x, y)
        assert 0.0 < got <= eps
        assert got == pytest.approx(expected, rel=1e-15)

    def test_rejects_points_outside_wedge(self):
        cfg = WedgeConfig(k=8, eps=0.01, s=1.0, profile=RadialProfile(0.5, 0.1))
        with pytest.raises(ValueError):
            cfg.psi(0.5, 0.5)  # angle way past pi/8
        with pytest.raises(ValueError):
            cfg.psi(1.2, 0.01)
