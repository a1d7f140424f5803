import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locmix import lmm, mixing, nef, region
from locmix.errors import DomainError, InfeasibleError
from locmix.lmm import LocalMixtureModel
from locmix.nef import binomial, normal, poisson
from locmix.region import LambdaRegion, MomentCurve


def certificate_holds(cert, family, lo, hi, target, r):
    ms = np.linspace(lo, hi, 4001)
    cur = region.moment_curve_point(MomentCurve(family, lo, hi, r), ms)
    scale = np.abs(cert[0]) + np.abs(cert[1:]) @ np.abs(cur).max(axis=0)
    return (cert[0] + cur @ cert[1:]).max() <= 1e-9 * scale and cert[0] + target @ cert[1:] > 0


class TestMomentCurve:
    def test_examples(self):
        c = MomentCurve(normal(), -2, 2, 2)
        np.testing.assert_allclose(region.moment_curve_point(c, 0.5), [0.5, 1.25])
        np.testing.assert_allclose(region.moment_curve_point(MomentCurve(binomial(2), 0.5, 1.5, 2), 1.0), [1, 1.5])
        np.testing.assert_allclose(region.moment_curve_point(MomentCurve(poisson(), 0.5, 3, 3), 1.0), [1, 2, 5])

    def test_outside_interval(self):
        with pytest.raises(DomainError):
            region.moment_curve_point(MomentCurve(normal(), -1, 1, 3), 1.5)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            MomentCurve(normal(), 1, 1, 3)
        with pytest.raises(DomainError):
            MomentCurve(binomial(5), -1, 2, 3)

    def test_length(self):
        assert MomentCurve(poisson(), 1.0, 3.5, 2).length == 2.5


class TestCentralCoordinates:
    @pytest.mark.parametrize("family", [binomial(20), poisson(), normal()], ids=lambda f: f.kind)
    def test_matches_raw_transform(self, family):
        mu = 6.0
        curve = region._Curve(family, mu, 5, mu - 2, mu + 2)
        for m in (mu - 1.5, mu, mu + 0.7):
            raw = [nef.raw_moment(family, m, i) for i in range(1, 6)]
            np.testing.assert_allclose(curve.cols((m - mu) / curve.s)[:, 0],
                                       region._raw_to_central(mu, curve.s, raw), rtol=1e-10, atol=1e-11)


class TestTrueLocalMixture:
    def test_unmixed_is_true(self):
        v = region.is_true_local_mixture(LocalMixtureModel.unmixed(binomial(20), 4, 8.0), (6, 10))
        assert v.member
        assert v.atoms.theta == pytest.approx((8.0,))

    def test_two_point_is_true(self):
        fam = binomial(20)
        Q = mixing.two_point(9.0, 7.5, 10.5)
        v = region.is_true_local_mixture(mixing.localize(fam, Q, 4), (7, 11))
        assert v.member and v.mode == "iff"
        assert len(v.atoms.theta) <= 5
        np.testing.assert_allclose(mixing.mixture_moments(fam, v.atoms, 4),
                                   mixing.mixture_moments(fam, Q, 4), atol=1e-7)

    def test_negative_lambda2_is_false(self):
        fam = binomial(10)
        model = LocalMixtureModel(fam, 3, 5.0, (-0.05, 0.0))
        v = region.is_true_local_mixture(model, (3, 7))
        assert not v.member
        assert certificate_holds(v.certificate, fam, 3, 7, lmm.moment_vector(model, 3), 3)

    def test_normal_counterexample_is_false(self):
        model = LocalMixtureModel(normal(), 4, 0.0, (-0.01, 0.0, 0.003))
        v = region.is_true_local_mixture(model, (-5, 5))
        assert not v.member and v.mode == "sufficient-condition"
        assert certificate_holds(v.certificate, normal(), -5, 5, lmm.moment_vector(model, 4), 4)

    def test_support_too_narrow(self):
        # spread 4 cannot be reproduced by mixings on an interval of length 1
        fam = binomial(20)
        model = mixing.localize(fam, mixing.two_point(10.0, 8.0, 12.0), 4)
        assert not region.is_true_local_mixture(model, (9.5, 10.5)).member

    def test_monotone_in_interval(self):
        fam = binomial(20)
        model = mixing.localize(fam, mixing.two_point(9.0, 7.0, 10.0), 4)
        assert region.is_true_local_mixture(model, (7, 10)).member
        assert region.is_true_local_mixture(model, (5, 13), grid_size=401).member

    def test_grid_refinement_stable(self):
        fam = poisson()
        model = mixing.localize(fam, mixing.DiscreteMixing((1.0, 2.5, 4.0), (0.3, 0.4, 0.3)), 4)
        a = region.is_true_local_mixture(model, (0.5, 5), grid_size=51)
        b = region.is_true_local_mixture(model, (0.5, 5), grid_size=101)
        assert a.member == b.member == True

    def test_verdict_json(self):
        v = region.is_true_local_mixture(LocalMixtureModel.unmixed(binomial(4), 2, 2.0), (1, 3))
        assert v.to_dict()["member"] is True
        w = region.is_true_local_mixture(LocalMixtureModel(binomial(4), 2, 2.0, (-0.1,)), (1, 3))
        assert set(w.to_dict()) == {"member", "certificate", "mode"}

    @settings(max_examples=25)
    @given(mu=st.floats(5.0, 15.0), a=st.floats(0.05, 1.95), b=st.floats(0.05, 1.95))
    def test_forward_direction_binomial(self, mu, a, b):
        fam = binomial(20)
        Q = mixing.two_point(mu, mu - a, mu + b)
        v = region.is_true_local_mixture(mixing.localize(fam, Q, 4), (mu - 2, mu + 2))
        assert v.member
        got = mixing.mixture_moments(fam, v.atoms, 4)
        np.testing.assert_allclose(got, lmm.moment_vector(mixing.localize(fam, Q, 4), 4), atol=1e-7)


class TestCaratheodory:
    def test_single_point(self):
        curve = MomentCurve(binomial(10), 2, 8, 4)
        Q = region.caratheodory_atoms(region.moment_curve_point(curve, 4.5), curve)
        assert Q.theta == pytest.approx((4.5,), abs=1e-6)

    def test_midpoint(self):
        curve = MomentCurve(binomial(10), 2, 8, 4)
        target = 0.5 * (region.moment_curve_point(curve, 3.0) + region.moment_curve_point(curve, 6.0))
        Q = region.caratheodory_atoms(target, curve, grid=[3.0, 6.0])
        assert Q.theta == pytest.approx((3.0, 6.0), abs=1e-6)
        assert Q.rho == pytest.approx((0.5, 0.5), abs=1e-6)

    def test_outside(self):
        curve = MomentCurve(normal(), -1, 1, 2)
        with pytest.raises(InfeasibleError):
            region.caratheodory_atoms([0.0, 0.5], curve)

    def test_atom_count_bound(self):
        fam = poisson()
        curve = MomentCurve(fam, 0.5, 6.0, 3)
        Q0 = mixing.DiscreteMixing((0.6, 1.5, 2.2, 3.1, 4.4, 5.9), (0.1, 0.2, 0.2, 0.2, 0.2, 0.1))
        target = mixing.mixture_moments(fam, Q0, 3)
        Q = region.caratheodory_atoms(target, curve)
        assert len(Q.theta) <= 4
        np.testing.assert_allclose(mixing.mixture_moments(fam, Q, 3), target, atol=1e-7)


class TestLambdaRegion:
    def test_grid_two(self):
        reg = LambdaRegion(binomial(10), 5.0, 3.0, 8.0, 3)
        ext = reg.extremal_points(2)
        assert len(ext) == 2
        Q = mixing.two_point(5.0, 3.0, 8.0)
        np.testing.assert_allclose(ext.lam[0], mixing.phi_map(Q, 5.0, 3))
        np.testing.assert_array_equal(ext.lam[1], 0.0)

    def test_row_count(self):
        reg = LambdaRegion(binomial(10), 5.0, 3.0, 8.0, 4)
        g = 11
        grid = np.linspace(3, 8, g)
        pairs = sum(1 for a in grid for b in grid if a <= 5 <= b and a != b)
        assert len(reg.extremal_points(g)) == pairs + 1

    def test_nonnegative_second_moment(self):
        ext = LambdaRegion(poisson(), 2.0, 0.0, 7.0, 5).extremal_points(41)
        assert np.all(ext.lam[:, 0] >= 0)
        assert np.all(ext.central()[:, 0] >= 0)
        np.testing.assert_allclose(ext.central()[:, 2], ext.lam[:, 2] * 24)

    def test_order_two_segment(self):
        reg = LambdaRegion(normal(), 0.0, -1.0, 2.0, 2)
        ext = reg.extremal_points(31)
        top = ext.lam[:, 0].max()
        assert region.region_membership(reg, [top], grid_size=31)
        assert region.region_membership(reg, [0.3 * top], grid_size=31)
        assert not region.region_membership(reg, [top * 1.001], grid_size=31)
        assert not region.region_membership(reg, [-1e-4], grid_size=31)

    def test_generators_are_members(self):
        reg = LambdaRegion(binomial(12), 6.0, 3.0, 9.0, 4)
        ext = reg.extremal_points(15)
        assert region.region_membership(reg, np.zeros(3), grid_size=15)
        for k in (0, 7, len(ext) // 2, len(ext) - 2):
            assert region.region_membership(reg, ext.lam[k], extremals=ext)

    def test_mode_label(self):
        assert LambdaRegion(binomial(4), 2.0, 1.0, 3.0, 2).mode == "iff"
        assert LambdaRegion(normal(), 0.0, -1.0, 1.0, 2).mode == "sufficient-condition"

    def test_region_matches_true_mixture_test(self):
        fam = binomial(20)
        reg = LambdaRegion(fam, 10.0, 8.0, 12.0, 4)
        ext = reg.extremal_points(21)
        w = np.random.default_rng(3).dirichlet(np.ones(len(ext)))
        lam = w @ ext.lam
        assert region.region_membership(reg, lam, extremals=ext)
        assert region.is_true_local_mixture(LocalMixtureModel(fam, 4, 10.0, tuple(lam)), (8, 12)).member
