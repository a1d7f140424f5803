import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from locmix import lmm, mixing, nef
from locmix.errors import DomainError, InfeasibleError, UnsupportedError
from locmix.mixing import DiscreteMixing, DispersionMixing, squared_deviance, two_point
from locmix.nef import binomial, normal, poisson


class TestDiscreteMixing:
    def test_prunes_and_merges(self):
        Q = DiscreteMixing((1.0, 2.0, 1.0, 3.0), (0.25, 0.5, 0.25, 0.0))
        assert Q.theta == (1.0, 2.0)
        assert Q.rho == (0.5, 0.5)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            DiscreteMixing((1.0, 2.0), (0.6, 0.6))
        with pytest.raises(ValueError):
            DiscreteMixing((1.0, 2.0), (1.5, -0.5))

    def test_json_roundtrip(self):
        Q = DiscreteMixing((2.0, 7.0), (0.3, 0.7))
        assert DiscreteMixing.from_dict(Q.to_dict()) == Q
        with pytest.raises(ValueError):
            DiscreteMixing.from_dict({"atoms": [[1, 1]], "extra": 0})


class TestTwoPoint:
    def test_examples(self):
        assert two_point(5, 8, 4).rho[two_point(5, 8, 4).theta.index(8.0)] == pytest.approx(0.25)
        assert two_point(5, 6, 4).rho == pytest.approx((0.5, 0.5))
        assert two_point(3.0, 3.0, 3.0).degenerate

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            two_point(9.0, 4.0, 8.0)

    @given(a=st.floats(0.1, 4.9), b=st.floats(5.1, 9.9), t=st.floats(0.01, 0.99))
    def test_mean_exact(self, a, b, t):
        mu = a + t * (b - a)
        assert two_point(mu, a, b).mean == pytest.approx(mu, abs=1e-12)


class TestPhiMap:
    def test_point_mass(self):
        np.testing.assert_allclose(mixing.phi_map(DiscreteMixing.point(2.0), 2.0, 5), 0.0)

    def test_symmetric(self):
        d = 0.7
        Q = DiscreteMixing((1 - d, 1 + d), (0.5, 0.5))
        np.testing.assert_allclose(mixing.phi_map(Q, 1.0, 4), [d**2 / 2, 0, d**4 / 24], atol=1e-15)

    def test_asymmetric_example(self):
        mu = 2.0
        Q = two_point(mu, mu + 3, mu - 1)
        # E(theta-mu)^3 = 0.25*27 - 0.75 = 6, so lambda3 = 6/3! = 1
        np.testing.assert_allclose(mixing.phi_map(Q, mu, 3), [1.5, 1.0], rtol=1e-14)

    def test_order_guard(self):
        with pytest.raises(UnsupportedError):
            mixing.phi_map(DiscreteMixing.point(1.0), 1.0, 9)

    @given(atoms=st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 1)), min_size=1, max_size=5))
    def test_lambda2_nonnegative(self, atoms):
        th, w = zip(*atoms)
        w = np.asarray(w) / np.sum(w)
        Q = DiscreteMixing(th, tuple(w))
        lam2 = mixing.phi_map(Q, Q.mean, 2)[0]
        assert lam2 >= -1e-15
        if Q.degenerate:
            assert lam2 == pytest.approx(0.0, abs=1e-15)


class TestExactMixture:
    def test_point_mass_is_family(self):
        fam = poisson()
        x = np.arange(15)
        np.testing.assert_allclose(
            mixing.exact_mixture_density(fam, DiscreteMixing.point(3.2), x), nef.density(fam, x, 3.2))

    def test_binomial_sums_to_one(self):
        fam = binomial(10)
        Q = DiscreteMixing((2.0, 5.0, 8.5), (0.2, 0.3, 0.5))
        assert mixing.exact_mixture_density(fam, Q, np.arange(11)).sum() == pytest.approx(1.0, abs=1e-14)

    def test_atom_outside_domain(self):
        with pytest.raises(DomainError):
            mixing.exact_mixture_density(binomial(10), DiscreteMixing((5.0, 11.0), (0.5, 0.5)), 3)


class TestLocalize:
    def test_point_mass(self):
        m = mixing.localize(binomial(10), DiscreteMixing.point(4.0), 4)
        assert m.mu == 4.0 and np.all(m.lam_array == 0)

    @given(a=st.floats(6.0, 9.9), b=st.floats(10.1, 14.0), t=st.floats(0.05, 0.95))
    def test_binomial_n20_four_moments(self, a, b, t):
        fam = binomial(20)
        Q = two_point(a + t * (b - a), a, b)
        model = mixing.localize(fam, Q, 4)
        assert model.mu == Q.mean
        x = np.arange(21)
        g = lmm.lmm_density(model, x)
        f = mixing.exact_mixture_density(fam, Q, x)
        for i in range(1, 5):
            assert np.dot(x.astype(float) ** i, g) == pytest.approx(np.dot(x.astype(float) ** i, f), abs=1e-9)
        np.testing.assert_allclose(lmm.moment_vector(model, 4), mixing.mixture_moments(fam, Q, 4), atol=1e-9)


class TestSampling:
    def test_bimodal(self):
        fam = binomial(30)
        xs = mixing.mixture_sample(fam, DiscreteMixing((6.0, 24.0), (0.5, 0.5)), 10_000, seed=4)
        assert mixing.count_modes(xs, fam) == 2

    def test_unimodal(self):
        fam = binomial(30)
        xs = mixing.mixture_sample(fam, DiscreteMixing.point(12.0), 10_000, seed=5)
        assert mixing.count_modes(xs, fam) == 1

    def test_mean_clt(self):
        fam = poisson()
        Q = DiscreteMixing((2.0, 9.0), (0.7, 0.3))
        xs = mixing.mixture_sample(fam, Q, 20_000, seed=6)
        var = sum(r * (t + t**2) for t, r in zip(Q.theta, Q.rho)) - Q.mean**2
        assert abs(xs.mean() - Q.mean) < 4 * math.sqrt(var / xs.size)

    def test_reproducible(self):
        Q = DiscreteMixing((2.0, 9.0), (0.7, 0.3))
        a = mixing.mixture_sample(binomial(12), Q, 40, seed=11)
        b = mixing.mixture_sample(binomial(12), Q, 40, seed=11)
        np.testing.assert_array_equal(a, b)


class TestDispersion:
    @pytest.mark.parametrize("eps", [1e-3, 1e-2, 0.1, 0.5, 1.0])
    def test_normal_normal_closed_form(self, eps):
        fam = normal()
        D = DispersionMixing(fam, squared_deviance(), eps, 0.3)
        x = np.linspace(-6, 6, 31)
        np.testing.assert_allclose(mixing.continuous_mixture_density(fam, D, x),
                                   stats.norm.pdf(x, 0.3, math.sqrt(1 + eps)), atol=1e-9)

    def test_small_eps_limit(self):
        fam = normal()
        D = DispersionMixing(fam, squared_deviance(), 1e-6, -0.4)
        x = np.linspace(-3, 3, 7)
        assert np.max(np.abs(mixing.continuous_mixture_density(fam, D, x) - nef.density(fam, x, -0.4))) < 1e-4

    def test_nested_integral(self):
        fam = normal()
        D = DispersionMixing(fam, squared_deviance(), 0.3, 1.0)
        total, _ = integrate.quad(lambda x: mixing.continuous_mixture_density(fam, D, x), -15, 17,
                                  epsabs=1e-12)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_normalizer(self):
        D = DispersionMixing(normal(), squared_deviance(), 0.2, 0.0)
        assert D.normalizer == pytest.approx(1 / math.sqrt(2 * math.pi * 0.2), rel=1e-10)

    def test_poisson_family_window_respects_domain(self):
        D = DispersionMixing(poisson(), squared_deviance(), 0.5, 1.0)
        assert D.window[0] == 0.0
        assert D.normalizer * D.integrate(lambda t: 1.0) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("eps", [1e-3, 0.1, 1.0])
    def test_laplace_lambda(self, eps):
        D = DispersionMixing(normal(), squared_deviance(), eps, 2.0)
        m = mixing.laplace_localize(normal(), D, 4)
        assert m.mu == pytest.approx(2.0, abs=1e-12)
        np.testing.assert_allclose(m.lam_array, [eps / 2, 0, eps**2 / 8], rtol=1e-9, atol=1e-14)

    def test_json(self):
        D = DispersionMixing.from_dict(normal(), {"deviance": "squared", "epsilon": 0.1, "vartheta": 5.0})
        assert D.to_dict() == {"deviance": "squared", "epsilon": 0.1, "vartheta": 5.0}
        with pytest.raises(ValueError):
            DispersionMixing.from_dict(normal(), {"deviance": "gamma", "epsilon": 0.1, "vartheta": 5.0})

    def test_user_deviance(self):
        lin = mixing.Deviance("scaled", lambda t, m: 4 * (t - m) ** 2, lambda t, m: 8 * (t - m), lambda t, m: 8.0)
        D = DispersionMixing(normal(), lin, 0.4, 0.0)
        assert D.central_moment(2) == pytest.approx(0.1, rel=1e-9)
