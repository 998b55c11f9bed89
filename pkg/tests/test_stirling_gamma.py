"""
Tests for the Stirling-gamma distribution: density, normalizing constant,
moments, gamma limit and the two rejection samplers
"""
import logging
import math
from unittest.mock import patch

import numpy as np
import pytest
from scipy import integrate, stats

from stirlingdp import stirling_gamma as sg
from stirlingdp.errors import InstabilityError, ParameterError, RejectionBudgetError
from stirlingdp.settings import reload_settings
from stirlingdp.stirling_gamma import StirlingGammaParams


# Integer shapes with every valid reference size from 3 to 20
CLOSED_FORM_GRID = [(a, b, m) for a, b in ((2, 1), (3, 1), (3, 2), (4, 2), (5, 2))
                    for m in range(3, 21) if 1 < a / b < m]


class TestParameters:
    """Tests for parameter validation"""

    @pytest.mark.parametrize("a,b,m", [
        (1.0, 1.0, 10),     # a/b = 1
        (10.0, 1.0, 10),    # a/b = m
        (3.0, 1.0, 1),      # m < 2
        (3.0, 1.0, 10.5),   # non-integer m
        (-1.0, 1.0, 10),
        (1.0, 0.0, 10),
    ])
    def test_invalid_parameters(self, a, b, m):
        """Test that parameters outside 1 < a/b < m raise ParameterError"""
        with pytest.raises(ParameterError):
            sg.validate(a, b, m)

    def test_valid_parameters(self, sg_params):
        """Test the stored values, the location a/b and the string form"""
        assert sg_params.location == 5.0
        assert sg_params.has_integer_shape
        assert str(sg_params) == "Sg(5, 1, 100)"
        assert str(StirlingGammaParams(0.6, 0.2, 149)) == "Sg(0.6, 0.2, 149)"

    def test_parameter_error_is_value_error(self):
        """Test that callers catching ValueError also see parameter errors"""
        with pytest.raises(ValueError):
            StirlingGammaParams(1.0, 2.0, 10)


class TestNormalizingConstant:
    """Tests for the quadrature and closed-form normalizing constants"""

    def test_quadrature_simple_case(self):
        """Test S_{2,1,3} = log 2"""
        p = StirlingGammaParams(2, 1, 3)
        assert sg.log_norm_const_quadrature(p) == pytest.approx(math.log(math.log(2.0)), abs=1e-9)

    def test_quadrature_double_poles(self):
        """Test S_{3,2,3} = 3/2 - 2 log 2"""
        p = StirlingGammaParams(3, 2, 3)
        assert sg.log_norm_const_quadrature(p) == pytest.approx(math.log(1.5 - 2.0 * math.log(2.0)), abs=1e-9)

    @pytest.mark.parametrize("a,b,m", CLOSED_FORM_GRID)
    def test_closed_form_matches_quadrature(self, a, b, m):
        """Test that the partial-fraction closed form agrees with quadrature"""
        p = StirlingGammaParams(a, b, m)
        assert sg.log_norm_const_closed_form(p) == pytest.approx(sg.log_norm_const_quadrature(p), abs=1e-8)

    def test_quadrature_cache_follows_settings(self, clean_settings, monkeypatch):
        """Test that a changed quadrature tolerance is not served from the cache"""
        p = StirlingGammaParams(7, 2, 40)
        sg.log_norm_const_quadrature(p)
        monkeypatch.setenv("STIRLINGDP_QUAD_REL_TOL", "1e-6")
        reload_settings()
        with patch("stirlingdp.stirling_gamma.integrate.quad", wraps=integrate.quad) as quad:
            value = sg.log_norm_const_quadrature(p)
        assert quad.call_count == 1
        assert quad.call_args.kwargs["epsrel"] == 1e-6
        assert value == pytest.approx(sg.log_norm_const_closed_form(p), abs=1e-5)

    def test_closed_form_requires_integer_shape(self, sg_params_small_shape):
        """Test that non-integer a or b is rejected"""
        with pytest.raises(ParameterError):
            sg.log_norm_const_closed_form(sg_params_small_shape)

    def test_closed_form_size_cap(self):
        """Test that reference sizes above the closed-form cap are rejected"""
        with pytest.raises(ParameterError):
            sg.log_norm_const_closed_form(StirlingGammaParams(5, 1, 1000))

    def test_closed_form_reports_cancellation(self):
        """Test that an alternating sum evaluated with too few digits raises InstabilityError"""
        with pytest.raises(InstabilityError):
            sg.partial_fraction_integral(1, [(1, 39, 3)], dps=15, min_digits=12)

    def test_asymptotic_constant_improves_with_m(self):
        """Test that the gamma-limit constant approaches the exact one as m grows"""
        gaps = []
        for m in (100, 1000, 10000):
            p = StirlingGammaParams(5, 1, m)
            gaps.append(abs(sg.log_norm_const_quadrature(p) - sg.log_norm_const_asymptotic(p)))
        assert gaps[0] > gaps[1] > gaps[2]


class TestDensity:
    """Tests for the density, survival function and cdf"""

    @pytest.mark.parametrize("a,b,m", [(5, 1, 100), (0.6, 0.2, 149), (2, 1, 3), (10, 5, 1000)])
    def test_density_integrates_to_one(self, a, b, m):
        """Test that the tabulated density has unit mass"""
        alpha, density = sg.density_grid(StirlingGammaParams(a, b, m), points=4001)
        assert np.trapezoid(density, alpha) == pytest.approx(1.0, abs=1e-4)

    def test_unnormalized_density_formula(self, sg_params):
        """Test log S(alpha) = (a - 1) log alpha - b log (alpha)_m"""
        alpha = 2.5
        expected = 4.0 * math.log(alpha) - (math.lgamma(alpha + 100) - math.lgamma(alpha))
        assert sg.log_unnormalized_density(sg_params, alpha) == pytest.approx(expected, rel=1e-12)

    def test_density_rejects_nonpositive_alpha(self, sg_params):
        """Test that alpha <= 0 raises ParameterError"""
        with pytest.raises(ParameterError):
            sg.log_pdf(sg_params, 0.0)

    def test_cdf_and_survival_are_complementary(self, sg_params):
        """Test cdf(x) + P(alpha > x) = 1"""
        for x in (0.2, 1.0, 5.0):
            total = sg.cdf(sg_params, x) + math.exp(sg.log_survival(sg_params, x))
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_density_grid_bounds(self, sg_params):
        """Test explicit grid bounds and the validation of bad ones"""
        alpha, _ = sg.density_grid(sg_params, points=11, lower=0.5, upper=5.0)
        assert alpha[0] == pytest.approx(0.5)
        assert alpha[-1] == pytest.approx(5.0)
        with pytest.raises(ParameterError):
            sg.density_grid(sg_params, points=1)
        with pytest.raises(ParameterError):
            sg.density_grid(sg_params, lower=5.0, upper=0.5)

    def test_heavy_tail(self, sg_params):
        """
        Test that e^x P(alpha > x) increases on the tail

        The log-density slope (a - 1)/x - b sum_{j<m} 1/(x + j) is close to
        -b log(1 + m/x), which stays below -1 until x is near m / (e - 1),
        about 58 for Sg(5, 1, 100). Below that the hazard exceeds one and
        e^x P(alpha > x) decreases, so the grid starts well past it.
        """
        grid = np.linspace(100.0, 300.0, 21)
        values = [x + sg.log_survival(sg_params, x) for x in grid]
        assert np.all(np.diff(values) > 0)

    def test_gap_to_gamma_limit_increases(self, sg_params):
        """Test that log f_Sg - log f_Ga increases on [50, 500]"""
        limit = sg.gamma_limit_params(sg_params)
        grid = np.linspace(50.0, 500.0, 200)
        gap = sg.log_pdf(sg_params, grid) - limit.logpdf(grid)
        assert np.all(np.diff(gap) > 0)


class TestMoments:
    """Tests for moments and the gamma limit"""

    def test_mean_matches_density(self, sg_params):
        """Test E(alpha) against the integral of alpha times the density"""
        alpha, density = sg.density_grid(sg_params, points=4001)
        assert sg.mean(sg_params) == pytest.approx(np.trapezoid(alpha * density, alpha), rel=1e-4)

    def test_variance_positive(self, sg_params):
        """Test that the variance is finite and positive"""
        assert 0 < sg.variance(sg_params) < math.inf

    def test_moment_regimes(self):
        """Test the finite, boundary and divergent cases around s = mb - a"""
        p = StirlingGammaParams(2, 1, 3)
        assert sg.moment_regime(p, 0.5) == "finite"
        assert sg.moment_regime(p, 1.0) == "boundary"
        assert sg.moment_regime(p, 2.0) == "divergent"
        with pytest.raises(ParameterError):
            sg.moment_regime(p, 0.0)

    def test_boundary_moment_is_infinite(self, caplog):
        """Test that the boundary moment is reported as inf with a warning"""
        p = StirlingGammaParams(2, 1, 3)
        with caplog.at_level(logging.WARNING, logger="stirlingdp.stirling_gamma"):
            assert sg.moment(p, 1.0) == math.inf
        assert "boundary" in caplog.text
        assert sg.variance(p) == math.inf
        assert math.isfinite(sg.moment(p, 0.5))

    def test_gamma_limit_parameters(self, sg_params):
        """Test Ga(a - b, b log m)"""
        limit = sg.gamma_limit_params(sg_params)
        assert limit.shape == 4.0
        assert limit.rate == pytest.approx(math.log(100.0))


class TestSamplers:
    """Tests for the ratio-of-uniforms and beta prime rejection samplers"""

    def test_sampler_selection(self, sg_params, sg_params_small_shape):
        """Test which algorithm is used in each parameter regime"""
        assert sg.sampler_name(sg_params) == "ratio-of-uniforms"
        assert sg.sampler_name(sg_params_small_shape) == "beta-prime"
        # a - b = 1 but alpha^2 S(alpha) is unbounded
        assert sg.sampler_name(StirlingGammaParams(2, 1, 3)) == "beta-prime"

    def test_bounds_when_density_is_monotone(self):
        """Test that a - b = 1 puts the maximizer of S at zero"""
        bounds = sg.ratio_of_uniforms_bounds(StirlingGammaParams(3, 2, 10))
        assert bounds.u_argmax == 0.0
        assert bounds.u_max.log_magnitude == pytest.approx(-2.0 * math.lgamma(10))
        assert bounds.v_argmax > 0

    def test_bounds_require_ratio_of_uniforms_regime(self, sg_params_small_shape):
        """Test that ratio-of-uniforms bounds are refused when a - b < 1"""
        with pytest.raises(ParameterError):
            sg.ratio_of_uniforms_bounds(sg_params_small_shape)

    def test_acceptance_function(self, sg_params_small_shape):
        """Test that A(alpha) <= 1 with A -> 1 at both ends"""
        grid = np.geomspace(1e-3, 1e3, 50)
        assert np.all(sg.log_acceptance_function(sg_params_small_shape, grid) <= 1e-12)
        assert sg.log_acceptance_function(sg_params_small_shape, 1e-12) == pytest.approx(0.0, abs=1e-6)
        assert sg.log_acceptance_function(sg_params_small_shape, 1e9) == pytest.approx(0.0, abs=1e-3)

    def test_beta_prime_mean(self, rng):
        """Test E[BeP(a0, b0, r)] = r a0 / (b0 - 1)"""
        draws = sg.beta_prime_sample(2.0, 5.0, 3.0, rng, size=200_000)
        assert draws.mean() == pytest.approx(1.5, abs=0.02)

    def test_sample_shapes(self, sg_params, rng):
        """Test scalar and array draws"""
        assert isinstance(sg.sample(sg_params, rng), float)
        draws = sg.sample(sg_params, rng, size=10)
        assert draws.shape == (10,)
        assert np.all(draws > 0)

    def test_sampling_is_reproducible(self, sg_params):
        """Test that equal seeds give equal draws"""
        first = sg.sample(sg_params, np.random.default_rng(7), size=100)
        second = sg.sample(sg_params, np.random.default_rng(7), size=100)
        assert np.array_equal(first, second)

    @pytest.mark.parametrize("fixture", ["sg_params", "sg_params_small_shape"])
    def test_empirical_acceptance_matches_exact(self, fixture, rng, request):
        """Test the observed acceptance rate against the exact one"""
        p = request.getfixturevalue(fixture)
        report = sg.sample_with_report(p, rng, 20_000)
        assert report.acceptance_rate == pytest.approx(sg.expected_acceptance(p), abs=0.015)

    @pytest.mark.parametrize("fixture", ["sg_params", "sg_params_small_shape"])
    def test_draws_match_inversion_sampler(self, fixture, rng, request):
        """Test the rejection samplers against inversion of the tabulated cdf"""
        p = request.getfixturevalue(fixture)
        draws = sg.sample(p, rng, size=5000)
        reference = sg.sample_by_inversion(p, rng, 5000)
        assert stats.ks_2samp(draws, reference).pvalue > 1e-3

    @pytest.mark.slow
    @pytest.mark.parametrize("fixture", ["sg_params", "sg_params_small_shape"])
    def test_many_draws_match_inversion_sampler(self, fixture, rng, request):
        """Test the rejection samplers against inversion with 10^5 draws each"""
        p = request.getfixturevalue(fixture)
        draws = sg.sample(p, rng, size=100_000)
        reference = sg.sample_by_inversion(p, rng, 100_000)
        assert stats.ks_2samp(draws, reference).pvalue > 1e-3

    def test_sample_mean_matches_moment(self, sg_params, rng):
        """Test the average of many draws against E(alpha)"""
        draws = sg.sample(sg_params, rng, size=20_000)
        standard_error = math.sqrt(sg.variance(sg_params) / draws.size)
        assert abs(draws.mean() - sg.mean(sg_params)) < 5 * standard_error

    def test_rejection_budget(self, sg_params, rng, clean_settings, monkeypatch):
        """Test that a sampler that never accepts raises RejectionBudgetError"""
        monkeypatch.setenv("STIRLINGDP_REJECTION_BUDGET", "50")
        reload_settings()
        never = (np.ones(64), np.zeros(64, dtype=bool))
        with patch.object(sg._RatioOfUniformsProposal, "propose", return_value=never):
            with pytest.raises(RejectionBudgetError):
                sg.sample(sg_params, rng)

    @pytest.mark.slow
    @pytest.mark.parametrize("a,b,m,rate", [
        (2, 0.2, 100, 0.756),
        (3, 1, 100, 0.724),
        (10, 5, 1000, 0.523),
        (15, 1.5, 1000, 0.349),
        (0.2, 0.1, 100, 0.949),
        (0.6, 0.2, 100, 0.799),
        (1, 0.1, 1000, 0.458),
        (1, 0.6, 1000, 0.670),
    ])
    def test_reference_acceptance_rates(self, a, b, m, rate, rng):
        """Test exact and observed acceptance rates against reference values"""
        p = StirlingGammaParams(a, b, m)
        assert sg.expected_acceptance(p) == pytest.approx(rate, abs=0.03)
        report = sg.sample_with_report(p, rng, 100_000)
        assert report.acceptance_rate == pytest.approx(rate, abs=0.03)
