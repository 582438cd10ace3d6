import math

import numpy as np
import pytest

from wbcsi.arrays import CarrierConfig, UpaConfig
from wbcsi.rank_laws import (
    AngularDelaySubSupport,
    AngularDelaySupport,
    AngularSubSupport,
    AngularSupport,
    PiecewiseLinear,
    box_support,
    feedback_bound,
    full_range_support,
    rank_spatial_fullrange,
    rho_frequency,
    rho_joint,
    rho_spatial,
)

DEG = math.pi / 180.0


def upa(dh=0.5, dv=0.5, n=1):
    return UpaConfig(n_rows=n, n_cols=n, n_pol=1, spacing_h=dh, spacing_v=dv)


def angular(theta_deg, phi_deg):
    return AngularSupport(
        [
            AngularSubSupport(
                theta_deg[0] * DEG, theta_deg[1] * DEG,
                phi_deg[0] * DEG, phi_deg[1] * DEG,
            )
        ]
    )


def simpson_rho(theta_lo, theta_hi, phi_lo, phi_hi, dh, dv, n=40001):
    """Independent oracle: composite-Simpson quadrature of the zenith
    integral of sin(theta)^2 * (sin(phi_max) - sin(phi_min))."""
    t = np.linspace(theta_lo, theta_hi, n)
    f = np.sin(t) ** 2 * (math.sin(phi_hi) - math.sin(phi_lo))
    h = (theta_hi - theta_lo) / (n - 1)
    weights = np.ones(n)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return dh * dv * (h / 3.0) * float(weights @ f)


class TestRhoSpatial:
    def test_full_range_quarter_pi(self):
        rho = rho_spatial(full_range_support(), upa(), 1.0)
        assert rho == pytest.approx(math.pi / 4, abs=1e-9)

    def test_zero_width_support(self):
        sup = angular((90, 90), (10, 10))
        assert rho_spatial(sup, upa(), 1.0) == 0.0

    def test_bounded_support_closed_form(self):
        # theta 60..120 deg, phi -60..60 deg, spacings (0.5, 0.8) wavelengths
        sup = angular((60, 120), (-60, 60))
        rho = rho_spatial(sup, upa(dh=0.5, dv=0.8), 1.0)
        closed = (
            0.5
            * 0.8
            * (math.sin(60 * DEG) - math.sin(-60 * DEG))
            * (
                0.5 * (120 * DEG - 60 * DEG)
                - 0.25 * (math.sin(240 * DEG) - math.sin(120 * DEG))
            )
        )
        assert closed == pytest.approx(0.6628, abs=5e-5)
        assert rho == pytest.approx(closed, abs=1e-12)
        oracle = simpson_rho(60 * DEG, 120 * DEG, -60 * DEG, 60 * DEG, 0.5, 0.8)
        assert rho == pytest.approx(oracle, abs=1e-6)

    def test_theta_dependent_bounds_against_oracle(self):
        # phi limits shrink linearly with zenith; oracle re-integrates.
        lo = PiecewiseLinear([60 * DEG, 120 * DEG], [-50 * DEG, -20 * DEG])
        hi = PiecewiseLinear([60 * DEG, 120 * DEG], [40 * DEG, 10 * DEG])
        sup = AngularSupport([AngularSubSupport(60 * DEG, 120 * DEG, lo, hi)])
        rho = rho_spatial(sup, upa(), 1.0)
        t = np.linspace(60 * DEG, 120 * DEG, 40001)
        f = np.sin(t) ** 2 * (np.sin(hi(t)) - np.sin(lo(t)))
        h = (t[-1] - t[0]) / (t.size - 1)
        wts = np.ones(t.size)
        wts[1:-1:2] = 4.0
        wts[2:-1:2] = 2.0
        oracle = 0.25 * (h / 3.0) * float(wts @ f)
        assert rho == pytest.approx(oracle, abs=1e-7)

    def test_disjoint_additivity(self):
        sub1 = AngularSubSupport(60 * DEG, 90 * DEG, -60 * DEG, -20 * DEG)
        sub2 = AngularSubSupport(95 * DEG, 120 * DEG, 10 * DEG, 50 * DEG)
        u = upa(dh=0.5, dv=0.8)
        rho_union = rho_spatial(AngularSupport([sub1, sub2]), u, 1.0)
        rho_1 = rho_spatial(AngularSupport([sub1]), u, 1.0)
        rho_2 = rho_spatial(AngularSupport([sub2]), u, 1.0)
        assert rho_union == pytest.approx(rho_1 + rho_2, abs=1e-12)

    def test_mirrored_support_not_double_counted(self):
        # A region and its front-back mirror excite the same subspace.
        front = AngularSubSupport(80 * DEG, 100 * DEG, 20 * DEG, 50 * DEG)
        back = AngularSubSupport(80 * DEG, 100 * DEG, 130 * DEG, 160 * DEG)
        u = upa()
        rho_front = rho_spatial(AngularSupport([front]), u, 1.0)
        rho_both = rho_spatial(AngularSupport([front, back]), u, 1.0)
        assert rho_both == pytest.approx(rho_front, abs=1e-12)

    def test_half_wavelength_cap(self):
        rng = np.random.default_rng(7)
        u = upa(dh=0.5, dv=0.5)
        for _ in range(25):
            t0, t1 = np.sort(rng.uniform(0, math.pi, 2))
            p0, p1 = np.sort(rng.uniform(-math.pi, math.pi, 2))
            sup = AngularSupport([AngularSubSupport(t0, t1, p0, p1)])
            assert rho_spatial(sup, u, 1.0) <= math.pi / 4 + 1e-12

    def test_output_clamped(self):
        # Spacing far above half a wavelength would push the raw ratio
        # beyond 1; the result must stay a valid fraction.
        sup = angular((0, 180), (-90, 90))
        assert rho_spatial(sup, upa(dh=4.0, dv=4.0), 1.0) == 1.0


class TestRankFullRange:
    def test_single_element(self):
        assert rank_spatial_fullrange(upa(), 1.0) == pytest.approx(math.pi / 4)

    def test_linear_in_columns(self):
        u1 = UpaConfig(n_rows=2, n_cols=4, spacing_h=0.5, spacing_v=0.5)
        u2 = UpaConfig(n_rows=2, n_cols=8, spacing_h=0.5, spacing_v=0.5)
        assert rank_spatial_fullrange(u2, 1.0) == pytest.approx(
            2 * rank_spatial_fullrange(u1, 1.0)
        )

    def test_consistent_with_rho(self):
        u = UpaConfig(n_rows=3, n_cols=5, spacing_h=0.4, spacing_v=0.3)
        lhs = rank_spatial_fullrange(u, 1.0)
        rhs = rho_spatial(full_range_support(), u, 1.0) * 15
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestRhoFrequency:
    def test_full_width_saturates(self):
        df = 360e3
        assert rho_frequency([(0.0, 1.0 / df)], df) == 1.0

    def test_empty_list(self):
        assert rho_frequency([], 360e3) == 0.0

    def test_two_microsecond_interval(self):
        assert rho_frequency([(0.0, 2e-6)], 360e3) == pytest.approx(0.72)

    def test_multiple_intervals_add(self):
        df = 360e3
        got = rho_frequency([(0.0, 0.5e-6), (1e-6, 1.5e-6)], df)
        assert got == pytest.approx(2 * 0.5e-6 * df)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            rho_frequency([(0.0, 1e-6), (0.5e-6, 2e-6)], 360e3)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            rho_frequency([(-1e-6, 1e-6)], 360e3)


class TestRhoJoint:
    def test_constant_delay_width_factorizes(self):
        grid_df = 360e3
        tau_w = 1.2e-6
        sup = box_support(
            (60 * DEG, 120 * DEG), (-60 * DEG, 60 * DEG), (0.5e-6, 0.5e-6 + tau_w)
        )
        u = upa(dh=0.5, dv=0.8)
        got = rho_joint(sup, u, 1.0, grid_df)
        expect = rho_spatial(sup.angular, u, 1.0) * grid_df * tau_w
        assert got == pytest.approx(expect, rel=1e-9)

    def test_zero_delay_width(self):
        sup = box_support((60 * DEG, 120 * DEG), (-60 * DEG, 60 * DEG), (1e-6, 1e-6))
        assert rho_joint(sup, upa(), 1.0, 360e3) == 0.0

    def test_delay_beyond_grid_range_rejected(self):
        sup = box_support((60 * DEG, 120 * DEG), (0, 30 * DEG), (0.0, 5e-6))
        with pytest.raises(ValueError):
            rho_joint(sup, upa(), 1.0, 360e3)

    def test_clamped_to_unit(self):
        sup = box_support((0, math.pi), (-math.pi / 2, math.pi / 2), (0.0, 2.7e-6))
        assert rho_joint(sup, upa(dh=3.0, dv=3.0), 1.0, 360e3) == 1.0

    def test_theta_dependent_delay_width_warns_and_integrates(self):
        width = PiecewiseLinear([60 * DEG, 120 * DEG], [0.4e-6, 0.8e-6])
        with pytest.warns(UserWarning):
            sup = AngularDelaySupport(
                [
                    AngularDelaySubSupport(
                        AngularSubSupport(60 * DEG, 120 * DEG, -30 * DEG, 30 * DEG),
                        0.0,
                        width,
                    )
                ]
            )
        got = rho_joint(sup, upa(), 1.0, 360e3)
        # Oracle: Simpson quadrature of the triple-integral reduction.
        t = np.linspace(60 * DEG, 120 * DEG, 40001)
        inner = (math.sin(30 * DEG) - math.sin(-30 * DEG)) * np.sin(t) ** 2 * width(t)
        h = (t[-1] - t[0]) / (t.size - 1)
        wts = np.ones(t.size)
        wts[1:-1:2] = 4.0
        wts[2:-1:2] = 2.0
        oracle = 0.25 * 360e3 * (h / 3.0) * float(wts @ inner)
        assert got == pytest.approx(oracle, rel=1e-6)


class TestFeedbackBound:
    def grid(self, n_subbands=24):
        return CarrierConfig(3.5e9, 3.4e9, 30e3, n_subbands, 12)

    def test_zero_measure_support(self):
        sup = box_support((1.0, 1.0), (0.2, 0.2), (0.0, 0.0))
        assert feedback_bound(sup, upa(n=4), self.grid(), 1.0) == 0

    def test_monotone_in_volume(self):
        g = self.grid()
        u = UpaConfig(n_rows=8, n_cols=8, spacing_h=0.04, spacing_v=0.04)
        lam = g.wavelength("DL")
        small = box_support((80 * DEG, 100 * DEG), (-20 * DEG, 20 * DEG), (0, 0.5e-6))
        large = box_support((60 * DEG, 120 * DEG), (-60 * DEG, 60 * DEG), (0, 1.5e-6))
        assert feedback_bound(small, u, g, lam) <= feedback_bound(large, u, g, lam)

    def test_cross_pol_doubles(self):
        g = self.grid()
        sup = box_support((60 * DEG, 120 * DEG), (-30 * DEG, 30 * DEG), (0, 1e-6))
        u1 = UpaConfig(n_rows=8, n_cols=8, n_pol=1, spacing_h=0.04, spacing_v=0.04)
        u2 = UpaConfig(n_rows=8, n_cols=8, n_pol=2, spacing_h=0.04, spacing_v=0.04)
        assert feedback_bound(sup, u2, g, 0.0857) == 2 * feedback_bound(
            sup, u1, g, 0.0857
        )


class TestSupports:
    def test_overlapping_angular_subs_rejected(self):
        with pytest.raises(ValueError):
            AngularSupport(
                [
                    AngularSubSupport(60 * DEG, 120 * DEG, -30 * DEG, 30 * DEG),
                    AngularSubSupport(90 * DEG, 150 * DEG, 0 * DEG, 60 * DEG),
                ]
            )

    def test_same_angles_disjoint_delays_allowed(self):
        ang = AngularSubSupport(60 * DEG, 120 * DEG, -30 * DEG, 30 * DEG)
        sup = AngularDelaySupport(
            [
                AngularDelaySubSupport(ang, 0.0, 0.4e-6),
                AngularDelaySubSupport(ang, 0.6e-6, 1.0e-6),
            ]
        )
        assert len(sup.subs) == 2

    def test_overlapping_delay_regions_rejected(self):
        ang = AngularSubSupport(60 * DEG, 120 * DEG, -30 * DEG, 30 * DEG)
        with pytest.raises(ValueError):
            AngularDelaySupport(
                [
                    AngularDelaySubSupport(ang, 0.0, 0.7e-6),
                    AngularDelaySubSupport(ang, 0.5e-6, 1.0e-6),
                ]
            )

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            AngularSubSupport(1.0, 0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            AngularSubSupport(0.5, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            AngularDelaySubSupport(
                AngularSubSupport(0.5, 1.0, 0.0, 1.0), 1e-6, 0.5e-6
            )

    def test_sampling_stays_inside(self):
        sup = box_support((60 * DEG, 120 * DEG), (-60 * DEG, 60 * DEG), (0, 2e-6))
        rng = np.random.default_rng(3)
        theta, phi, tau = sup.sample(rng, 2000)
        assert np.all(sup.angular.contains(theta, phi))
        assert np.all((tau >= 0) & (tau <= 2e-6))

    def test_sampling_splits_by_volume(self):
        # Two sub-supports of equal volume: a binomial count within 5 sigma.
        n = 10_000
        sub1 = AngularSubSupport(60 * DEG, 90 * DEG, -40 * DEG, 0 * DEG)
        sub2 = AngularSubSupport(90 * DEG, 120 * DEG, 10 * DEG, 50 * DEG)
        sup = AngularSupport([sub1, sub2])
        rng = np.random.default_rng(5)
        theta, phi = sup.sample(rng, n)
        in_1 = int(np.sum(sub1.contains(theta, phi)))
        sigma = math.sqrt(n * 0.25)
        assert abs(in_1 - n / 2) < 5 * sigma

    def test_point_support_sampling(self):
        sup = box_support((1.0, 1.0), (0.25, 0.25), (1e-6, 1e-6))
        rng = np.random.default_rng(0)
        theta, phi, tau = sup.sample(rng, 50)
        assert np.allclose(theta, 1.0) and np.allclose(phi, 0.25)
        assert np.allclose(tau, 1e-6)

    def test_piecewise_linear_validation(self):
        with pytest.raises(ValueError):
            PiecewiseLinear([0.0], [1.0])
        with pytest.raises(ValueError):
            PiecewiseLinear([0.0, 0.0], [1.0, 2.0])
        pl = PiecewiseLinear([0.0, 1.0], [2.0, 4.0])
        assert pl(0.5) == pytest.approx(3.0)
        assert pl.min == 2.0 and pl.max == 4.0
