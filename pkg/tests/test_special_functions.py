"""
Tests for the log-space special-function kernels
"""
import math

import numpy as np
import pytest

from stirlingdp.errors import ParameterError
from stirlingdp.random_partition import enumerate_set_partitions
from stirlingdp.special_functions import (
    LogValue,
    StirlingTable,
    bell_complete,
    digamma,
    generalized_harmonic,
    log_ascending_factorial,
    log_signless_stirling_first,
    trigamma,
)


class TestAscendingFactorial:
    """Tests for log_ascending_factorial"""

    def test_small_values(self):
        """Test (2)_3 = 24 and (x)_0 = 1"""
        assert log_ascending_factorial(2.0, 3) == pytest.approx(math.log(24.0))
        assert log_ascending_factorial(7.5, 0) == 0.0

    def test_matches_gamma_ratio_for_long_products(self):
        """Test the long-product branch against log Gamma(x + n) - log Gamma(x)"""
        x, n = 3.25, 500
        expected = math.lgamma(x + n) - math.lgamma(x)
        assert log_ascending_factorial(x, n) == pytest.approx(expected, rel=1e-12)

    def test_large_argument_branch(self):
        """Test the 1/x expansion used when x dwarfs n"""
        x, n = 1e9, 100
        expected = math.fsum(math.log1p(i / x) for i in range(n)) + n * math.log(x)
        assert log_ascending_factorial(x, n) == pytest.approx(expected, rel=1e-14)

    def test_vectorized(self):
        """Test that arrays of x are handled elementwise"""
        values = log_ascending_factorial(np.array([1.0, 2.0]), 3)
        assert values == pytest.approx([math.log(6.0), math.log(24.0)])

    def test_rejects_nonpositive_x(self):
        """Test that x <= 0 raises ParameterError"""
        with pytest.raises(ParameterError):
            log_ascending_factorial(0.0, 3)

    def test_rejects_negative_n(self):
        """Test that n < 0 raises ParameterError"""
        with pytest.raises(ParameterError):
            log_ascending_factorial(1.0, -1)


class TestStirlingNumbers:
    """Tests for StirlingTable and log_signless_stirling_first"""

    @pytest.mark.parametrize("n,k,value", [(4, 2, 11), (5, 3, 35), (6, 1, 120), (6, 6, 1), (7, 4, 735)])
    def test_known_values(self, n, k, value):
        """Test tabulated values of |s(n, k)|"""
        assert log_signless_stirling_first(n, k) == pytest.approx(math.log(value), abs=1e-12)

    def test_row_sums_to_factorial(self):
        """Test that sum_k |s(n, k)| = n!"""
        table = StirlingTable(max_n=200)
        row = table.row(120)
        assert np.logaddexp.reduce(row[1:]) == pytest.approx(math.lgamma(121), rel=1e-12)

    def test_rows_are_read_only(self):
        """Test that cached rows cannot be modified"""
        table = StirlingTable(max_n=10)
        with pytest.raises(ValueError):
            table.row(5)[1] = 0.0
        with pytest.raises(ValueError):
            table.row(0)[0] = 1.0

    def test_rows_built_out_of_order_agree(self):
        """Test that a row built from a cached row matches one built from scratch"""
        first = StirlingTable(max_n=50)
        first.row(20)
        from_cached = first.row(40)
        from_scratch = StirlingTable(max_n=50).row(40)
        assert np.allclose(from_cached[1:], from_scratch[1:], rtol=1e-14)

    def test_cap_enforced(self):
        """Test that rows beyond the cap raise ParameterError"""
        with pytest.raises(ParameterError):
            StirlingTable(max_n=10).row(11)

    def test_invalid_k(self):
        """Test that k outside 1..n raises ParameterError"""
        with pytest.raises(ParameterError):
            log_signless_stirling_first(4, 0)
        with pytest.raises(ParameterError):
            log_signless_stirling_first(4, 5)


class TestHarmonicAndBell:
    """Tests for generalized_harmonic and bell_complete"""

    def test_harmonic_values(self):
        """Test H_{3,1} = 11/6, H_{2,2} = 5/4 and H_{0,s} = 0"""
        assert generalized_harmonic(3, 1) == pytest.approx(11.0 / 6.0)
        assert generalized_harmonic(2, 2) == pytest.approx(1.25)
        assert generalized_harmonic(0, 3) == 0.0

    def test_harmonic_extended_precision(self):
        """Test the mpmath branch against the float branch"""
        assert float(generalized_harmonic(50, 3, dps=40)) == pytest.approx(generalized_harmonic(50, 3), rel=1e-15)

    def test_harmonic_rejects_bad_order(self):
        """Test that s < 1 raises ParameterError"""
        with pytest.raises(ParameterError):
            generalized_harmonic(3, 0)

    def test_bell_polynomials(self):
        """Test B_0 = 1, B_2 = x1^2 + x2 and B_3 = x1^3 + 3 x1 x2 + x3"""
        assert bell_complete([]) == 1
        assert bell_complete([2.0, 3.0]) == pytest.approx(7.0)
        assert bell_complete([2.0, 3.0, 5.0]) == pytest.approx(8.0 + 18.0 + 5.0)

    def test_bell_of_ones_gives_bell_numbers(self):
        """Test that B_s(1, ..., 1) are the Bell numbers"""
        assert [bell_complete([1] * s) for s in range(7)] == [1, 1, 2, 5, 15, 52, 203]

    @pytest.mark.parametrize("s", range(1, 8))
    def test_bell_matches_partition_enumeration(self, s, rng):
        """Test B_s(x) against the sum over set partitions of the product of x_{block size}"""
        x = rng.uniform(0.1, 2.0, size=s)
        expected = sum(np.prod(x[part.sizes - 1]) for part in enumerate_set_partitions(s))
        assert bell_complete(x.tolist()) == pytest.approx(expected, rel=1e-10, abs=1e-12)


class TestPolygamma:
    """Tests for digamma and trigamma"""

    def test_values_at_one(self):
        """Test psi(1) = -gamma and psi'(1) = pi^2 / 6"""
        assert digamma(1.0) == pytest.approx(-0.5772156649015329)
        assert trigamma(1.0) == pytest.approx(math.pi**2 / 6.0)

    def test_recurrence(self):
        """Test psi(x + 1) = psi(x) + 1/x"""
        assert digamma(4.5) == pytest.approx(digamma(3.5) + 1.0 / 3.5)

    def test_domain(self):
        """Test that nonpositive arguments raise ParameterError"""
        with pytest.raises(ParameterError):
            digamma(0.0)
        with pytest.raises(ParameterError):
            trigamma(-1.0)


class TestLogValue:
    """Tests for the LogValue helper"""

    def test_arithmetic(self):
        """Test products, quotients and square roots in log space"""
        x = LogValue.from_value(8.0)
        y = LogValue.from_value(2.0)
        assert (x * y).value == pytest.approx(16.0)
        assert (x / y).value == pytest.approx(4.0)
        assert y.sqrt().value == pytest.approx(math.sqrt(2.0))

    def test_zero_and_overflow(self):
        """Test the encoding of zero and saturation of huge values"""
        assert LogValue.from_value(0.0).value == 0.0
        assert LogValue(1000.0).value == math.inf
