import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gammashrink.model_core import (
    FixedValue,
    GammaPrior,
    Observation,
    PriorSpec,
    TailIndices,
    conditional_lambda_posterior,
    irb_density,
    irb_log_density,
    kl_divergence,
    kl_neighborhood,
    sb_density,
    sb_log_density,
    shrinkage_factor,
)
from gammashrink.special_math import log_gamma
from helpers import irb_triple_quadrature

pos = st.floats(min_value=1e-3, max_value=1e3)


class TestTypes:
    def test_observation_validation(self):
        Observation(y=1.0, delta=5.0)
        for bad in ({"y": 0.0}, {"delta": -1.0}, {"eta": 0.0}, {"y": math.inf}):
            kwargs = {"y": 1.0, "delta": 5.0, "eta": 1.0, **bad}
            with pytest.raises(ValueError):
                Observation(**kwargs)

    def test_prior_defaults(self):
        spec = PriorSpec("sb")
        assert spec.a == 2.0 and spec.b == 0.5
        assert spec.beta == GammaPrior(0.1, 0.1)
        assert spec.tau == GammaPrior(0.1, 0.1)

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            PriorSpec("horseshoe")
        with pytest.raises(ValueError):
            PriorSpec("sb", a=-1.0)
        with pytest.raises(ValueError):
            GammaPrior(0.0, 1.0)
        with pytest.raises(ValueError):
            FixedValue(-1.0)

    def test_tail_indices(self):
        sb = TailIndices.from_prior(PriorSpec("sb", 2.0, 0.5))
        assert (sb.alpha, sb.gamma_idx) == (2.0, -1.0)
        irb = TailIndices.from_prior(PriorSpec("irb", 2.0, 0.5))
        assert (irb.alpha, irb.gamma_idx) == (0.0, 2.0)
        with pytest.raises(ValueError):
            TailIndices(alpha=0.0, gamma_idx=-0.5)
        with pytest.raises(ValueError):
            TailIndices.from_prior(PriorSpec("gl"))


class TestSbDensity:
    def test_normalizes(self):
        val, _ = integrate.quad(lambda u: sb_density(u, 2.0, 0.5), 0.0, np.inf, limit=400)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_value_at_one(self):
        # 1/(B(2, 1/2) * 2^(5/2)) with B(2, 1/2) = 4/3, confirmed via log_gamma
        log_b = log_gamma(2.0) + log_gamma(0.5) - log_gamma(2.5)
        assert math.exp(log_b) == pytest.approx(4.0 / 3.0, rel=1e-14)
        assert sb_density(1.0, 2.0, 0.5) == pytest.approx(0.13258252147247766, rel=1e-13)

    def test_left_tail_constant(self):
        # density / u^(a-1) tends to 1/B(a, b) at the origin
        log_b = log_gamma(2.0) + log_gamma(0.5) - log_gamma(2.5)
        for u in (1e-6, 1e-8):
            assert sb_density(u, 2.0, 0.5) / u == pytest.approx(
                math.exp(-log_b), rel=1e-5
            )

    def test_tail_exponents(self):
        u = np.geomspace(1e-9, 1e-7, 5)
        slope = np.polyfit(np.log(u), sb_log_density(u, 2.0, 0.5), 1)[0]
        assert slope == pytest.approx(2.0 - 1.0, abs=0.02)
        u = np.geomspace(1e7, 1e9, 5)
        slope = np.polyfit(np.log(u), sb_log_density(u, 2.0, 0.5), 1)[0]
        assert slope == pytest.approx(-1.0 - 0.5, abs=0.02)

    def test_domain(self):
        with pytest.raises(ValueError):
            sb_density(0.0, 2.0, 0.5)


class TestIrbDensity:
    def test_normalizes(self):
        # the left tail decays only logarithmically: integrate the entire
        # double range in log coordinates (mass below u = e^-708 is ~7e-7)
        val, _ = integrate.quad(
            lambda s: irb_density(math.exp(s), 0.5, 2.0) * math.exp(s),
            -708.0, 708.0, points=[0.0], limit=500,
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_right_tail_exponent(self):
        u = np.geomspace(1e7, 1e9, 5)
        slope = np.polyfit(np.log(u), irb_log_density(u, 0.5, 2.0), 1)[0]
        assert slope == pytest.approx(-1.0 - 0.5, abs=0.02)

    def test_left_tail_log_corrected(self):
        # u * density * log(1/u)^(1+a) stays bounded above and below near 0
        u = np.geomspace(1e-10, 1e-4, 13)
        vals = u * irb_density(u, 0.5, 2.0) * np.log(1.0 / u) ** 3.0
        assert vals.min() > 0.1
        assert vals.max() < 10.0
        assert vals.max() / vals.min() < 4.0

    @pytest.mark.parametrize("u", [0.1, 1.0, 10.0])
    def test_matches_three_latent_representation(self, u):
        # nested quadrature over the (s, w, z) gamma-mixture representation
        ref = irb_triple_quadrature(u, 0.5, 2.0)
        assert irb_density(u, 0.5, 2.0) == pytest.approx(ref, rel=1e-5)

    def test_change_of_variables_identity(self):
        # density of u equals density of w = log(1+1/u) under SB(b, a) times |dw/du|
        for u in np.geomspace(1e-6, 1e6, 25):
            w = math.log1p(1.0 / u)
            jac = 1.0 / (u * (1.0 + u))
            assert irb_density(u, 0.5, 2.0) == pytest.approx(
                sb_density(w, 0.5, 2.0) * jac, rel=1e-11
            )


class TestShrinkageFactor:
    def test_basic(self):
        assert shrinkage_factor(1.0, 1.0, 1.0) == pytest.approx(0.5)
        assert shrinkage_factor(1.0, 1e12, 1.0) == pytest.approx(1.0, abs=1e-11)
        assert shrinkage_factor(1.0, 1.0, 5.0) == pytest.approx(1.0 / 6.0, rel=1e-14)

    @given(pos, pos, pos)
    @settings(max_examples=100, deadline=None)
    def test_in_unit_interval(self, tau, u, delta):
        k = shrinkage_factor(tau, u, delta)
        assert 0.0 < k < 1.0


class TestConditionalLambdaPosterior:
    def test_conjugate_case(self):
        shape, scale = conditional_lambda_posterior(
            Observation(y=7.0, delta=5.0), nu=1.0, beta=1.0
        )
        assert (shape, scale) == (7.0, 36.0)
        assert scale / (shape - 1.0) == pytest.approx(6.0)

    def test_eta_rescales_data_term(self):
        shape, scale = conditional_lambda_posterior(
            Observation(y=7.0, delta=5.0, eta=2.0), nu=1.0, beta=1.0
        )
        assert scale == pytest.approx(5.0 * 3.5 + 1.0)
        assert shape == 7.0

    @given(pos, pos, pos, pos)
    @settings(max_examples=150, deadline=None)
    def test_posterior_mean_identity(self, y, delta, nu, beta):
        obs = Observation(y=y, delta=delta)
        shape, scale = conditional_lambda_posterior(obs, nu, beta)
        mean = scale / (shape - 1.0)
        kappa = nu / (delta + nu)
        assert mean == pytest.approx(beta + (1.0 - kappa) * (y - beta), rel=1e-9, abs=1e-9)

    def test_full_shrinkage_limit(self):
        obs = Observation(y=7.0, delta=5.0)
        shape, scale = conditional_lambda_posterior(obs, nu=1e14, beta=3.0)
        assert scale / (shape - 1.0) == pytest.approx(3.0, rel=1e-12)


class TestKlDivergence:
    def test_zero_iff_equal(self):
        assert kl_divergence(2.0, 2.0, 5.0) == 0.0
        assert kl_divergence(2.0, 2.0001, 5.0) > 0.0

    def test_known_value(self):
        # delta=1, lambda0=1, lambda=e: e^-1 - 1 + 1 = 1/e
        assert kl_divergence(1.0, math.e, 1.0) == pytest.approx(1.0 / math.e, rel=1e-13)

    @given(pos, pos, pos)
    @settings(max_examples=100, deadline=None)
    def test_linear_in_delta(self, lam0, lam, delta):
        assert kl_divergence(lam0, lam, 2.0 * delta) == pytest.approx(
            2.0 * kl_divergence(lam0, lam, delta), rel=1e-12, abs=1e-300
        )


class TestKlNeighborhood:
    @given(st.floats(min_value=0.05, max_value=20.0),
           st.floats(min_value=1e-6, max_value=5.0),
           st.floats(min_value=0.2, max_value=20.0))
    @settings(max_examples=100, deadline=None)
    def test_endpoints_and_interior(self, lam0, eps, delta):
        lo, hi = kl_neighborhood(lam0, eps, delta)
        assert 0.0 < lo < lam0 < hi
        assert kl_divergence(lam0, lo, delta) == pytest.approx(eps, abs=1e-10 * max(1, eps))
        assert kl_divergence(lam0, hi, delta) == pytest.approx(eps, abs=1e-10 * max(1, eps))
        for lam in np.geomspace(lo * 1.0001, hi * 0.9999, 7):
            assert kl_divergence(lam0, float(lam), delta) < eps

    def test_width_lower_bound_in_precision(self):
        # the precision interval is wider than eps/(delta*lambda0)... scaled
        for eps in (1e-3, 1e-2, 0.1):
            lam0, delta = 2.0, 5.0
            lo, hi = kl_neighborhood(lam0, eps, delta)
            width_prec = 1.0 / lo - 1.0 / hi
            assert width_prec > eps / (delta * lam0)

    def test_shrinks_to_point(self):
        lo, hi = kl_neighborhood(3.0, 1e-12, 5.0)
        assert lo == pytest.approx(3.0, rel=1e-5)
        assert hi == pytest.approx(3.0, rel=1e-5)

    def test_domain(self):
        with pytest.raises(ValueError):
            kl_neighborhood(1.0, 0.0, 5.0)
