"""
The Stirling-gamma distribution Sg(a, b, m).

Its density on (0, inf) is proportional to alpha^(a-1) / ((alpha)_m)^b and is
proper exactly when 1 < a/b < m. This module provides the density, the
normalizing constant (adaptive quadrature, with an extended-precision partial
fraction closed form for integer a and b), moments, the large-m gamma
approximation and two exact rejection samplers.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConvergenceError, InstabilityError, ParameterError, RejectionBudgetError
from .settings import get_settings
from .special_functions import LogValue, _log_rising, bell_complete, generalized_harmonic

logger = logging.getLogger(__name__)

# Log-spaced grid scanned to locate the bulk of an integrand before quadrature.
_SCAN_ALPHA = np.geomspace(1e-12, 1e12, 1201)
# Integrand values this far (in log units) below the peak are treated as tails.
_BULK_WIDTH = 30.0
_MIN_BATCH = 64
_MAX_BATCH = 16_384


@dataclass(frozen=True)
class StirlingGammaParams:
    """Parameters (a, b, m) of Sg(a, b, m); construction enforces 1 < a/b < m"""
    a: float
    b: float
    m: int

    def __post_init__(self):
        _check_params(self.a, self.b, self.m)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "m", int(self.m))

    @property
    def location(self):
        """a / b, the expected number of clusters at the reference size m"""
        return self.a / self.b

    @property
    def has_integer_shape(self):
        return float(self.a).is_integer() and float(self.b).is_integer()

    def __str__(self):
        return f"Sg({self.a:g}, {self.b:g}, {self.m})"


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution with shape and rate"""
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError(f"gamma needs shape > 0 and rate > 0, got shape={self.shape}, rate={self.rate}")

    def logpdf(self, x):
        return stats.gamma.logpdf(x, self.shape, scale=1.0 / self.rate)

    def distribution(self):
        """Frozen scipy.stats distribution"""
        return stats.gamma(self.shape, scale=1.0 / self.rate)


def _check_params(a, b, m):
    if not (a > 0 and b > 0):
        raise ParameterError(f"Stirling-gamma needs a > 0 and b > 0, got a={a}, b={b}")
    if int(m) != m or m < 2:
        raise ParameterError(f"Stirling-gamma needs an integer reference size m >= 2, got m={m}")
    ratio = a / b
    if not ratio > 1:
        raise ParameterError(f"Stirling-gamma needs a/b > 1, got a/b = {ratio:g}")
    if not ratio < m:
        raise ParameterError(f"Stirling-gamma needs a/b < m, got a/b = {ratio:g} with m = {int(m)}")


def validate(a, b, m):
    """
    Build validated Stirling-gamma parameters

    Args:
        a: Shape a > 0
        b: Precision b > 0
        m: Reference sample size, integer >= 2

    Returns:
        StirlingGammaParams with 1 < a/b < m
    """
    if int(m) != m:
        raise ParameterError(f"Stirling-gamma needs an integer reference size m >= 2, got m={m}")
    return StirlingGammaParams(float(a), float(b), int(m))


# ---------------------------------------------------------------------------
# Densities and quadrature
# ---------------------------------------------------------------------------

def _log_kernel(alpha, c, b, m, n=1):
    # log of alpha^c / ((alpha+1)_{m-1}^b (alpha+1)_{n-1})
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        value = c * np.log(alpha) - b * _log_rising(alpha + 1.0, m - 1)
    if n > 1:
        value = value - _log_rising(alpha + 1.0, n - 1)
    return value


def log_unnormalized_density(p, alpha):
    """
    log S(alpha) = (a - 1) log alpha - b log (alpha)_m

    Args:
        p: StirlingGammaParams
        alpha: Positive real, scalar or array

    Returns:
        Unnormalized log density with the shape of alpha
    """
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any(~(alpha_arr > 0)):
        raise ParameterError(f"Stirling-gamma density needs alpha > 0, got alpha={alpha}")
    value = _log_kernel(alpha_arr, p.a - p.b - 1.0, p.b, p.m)
    return float(value) if np.ndim(value) == 0 else value


def log_quadrature(log_integrand, lower=0.0, upper=math.inf, rel_tol=None, max_evaluations=None):
    """
    log of int_lower^upper exp(log_integrand(alpha)) d alpha

    The half line is mapped to (0, 1) with alpha = t / (1 - t) and the
    integrand is exponentiated after subtracting its maximum over a scan grid,
    so values far outside double range are handled. The located peak and the
    edges of the bulk are passed to QUADPACK as breakpoints.

    Args:
        log_integrand: Vectorized callable alpha -> log integrand
        lower: Lower limit, >= 0
        upper: Upper limit, > lower (may be inf)
        rel_tol: Relative tolerance (defaults to the quad_rel_tol setting)
        max_evaluations: Evaluation budget (defaults to the quad_max_evaluations setting)

    Returns:
        Natural log of the integral
    """
    settings = get_settings()
    rel_tol = settings.quad_rel_tol if rel_tol is None else rel_tol
    max_evaluations = settings.quad_max_evaluations if max_evaluations is None else max_evaluations
    t_lower = lower / (1.0 + lower)
    t_upper = 1.0 if math.isinf(upper) else upper / (1.0 + upper)

    scan = _SCAN_ALPHA[(_SCAN_ALPHA > lower) & (_SCAN_ALPHA < upper)]
    edges = [lower * (1.0 + 1e-9) if lower > 0 else None, None if math.isinf(upper) else upper * (1.0 - 1e-9)]
    scan = np.concatenate([scan, [x for x in edges if x is not None]])
    scan = np.sort(scan[scan > 0])
    with np.errstate(over="ignore", invalid="ignore"):
        log_scan = np.asarray(log_integrand(scan), dtype=float) + 2.0 * np.log1p(scan)
    finite = np.isfinite(log_scan)
    if not finite.any():
        raise ConvergenceError("integrand is not finite anywhere on the scan grid")
    shift = float(np.max(log_scan[finite]))
    bulk = scan[finite & (log_scan >= shift - _BULK_WIDTH)]
    peak = scan[finite][np.argmax(log_scan[finite])]
    points = sorted({x / (1.0 + x) for x in (bulk[0], peak, bulk[-1])})
    points = [t for t in points if t_lower < t < t_upper]

    def integrand(t):
        alpha = t / (1.0 - t)
        exponent = float(log_integrand(alpha)) - 2.0 * math.log1p(-t) - shift
        if exponent > 700.0:
            raise ConvergenceError(f"integrand at alpha={alpha:g} exceeds the scanned peak by e^{exponent:.0f}")
        return math.exp(exponent) if exponent == exponent else 0.0

    limit = max(50, max_evaluations // 21)
    result = integrate.quad(integrand, t_lower, t_upper, points=points or None, epsabs=0.0,
                            epsrel=rel_tol, limit=limit, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3:
        if not value > 0 or abserr > 1e-7 * value:
            raise ConvergenceError(f"quadrature did not converge: {result[3]} (estimate {value:g} +/- {abserr:g})")
        logger.debug("Quadrature warning accepted (relative error %.2e): %s", abserr / value, result[3])
    if not value > 0:
        raise ConvergenceError(f"quadrature returned a non-positive integral {value!r}")
    return math.log(value) + shift


def _log_kernel_integral(c, b, m, n=1, lower=0.0, upper=math.inf):
    settings = get_settings()
    return _cached_kernel_integral(c, b, m, n, lower, upper, settings.quad_rel_tol, settings.quad_max_evaluations)


# Keyed on the quadrature settings so reload_settings() takes effect.
@lru_cache(maxsize=8192)
def _cached_kernel_integral(c, b, m, n, lower, upper, rel_tol, max_evaluations):
    return log_quadrature(lambda alpha: _log_kernel(alpha, c, b, m, n), lower, upper, rel_tol, max_evaluations)


def log_norm_const_quadrature(p):
    """
    log of the normalizing constant S_{a,b,m} = int alpha^(a-1) / (alpha)_m^b d alpha

    Args:
        p: StirlingGammaParams

    Returns:
        log S_{a,b,m} by adaptive quadrature
    """
    return _log_kernel_integral(p.a - p.b - 1.0, p.b, p.m)


def log_norm_const_asymptotic(p):
    """Large-m approximation log[Gamma(a-b) / (Gamma(m)^b (b log m)^(a-b))]"""
    shape = p.a - p.b
    return float(special.gammaln(shape) - p.b * special.gammaln(p.m) - shape * math.log(p.b * math.log(p.m)))


def log_pdf(p, alpha):
    """Normalized log density of Sg(a, b, m) at alpha"""
    value = np.asarray(log_unnormalized_density(p, alpha)) - log_norm_const_quadrature(p)
    return float(value) if np.ndim(value) == 0 else value


def log_survival(p, x):
    """log P(alpha > x), computed directly by quadrature over (x, inf)"""
    if not x > 0:
        raise ParameterError(f"survival function needs x > 0, got x={x}")
    return _log_kernel_integral(p.a - p.b - 1.0, p.b, p.m, 1, float(x)) - log_norm_const_quadrature(p)


def cdf(p, x):
    """P(alpha <= x) by quadrature over (0, x)"""
    if not x > 0:
        return 0.0
    log_lower = _log_kernel_integral(p.a - p.b - 1.0, p.b, p.m, 1, 0.0, float(x))
    return min(1.0, math.exp(log_lower - log_norm_const_quadrature(p)))


# ---------------------------------------------------------------------------
# Closed forms for integer a and b
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _harmonic(j, s, dps):
    return generalized_harmonic(j, s, dps=dps)


def _offset_power_sum(q, lo, hi, j, dps):
    # sum over i in lo..hi, i != q, of (i - q)^(-j)
    total = mpmath.mpf(0)
    first = max(1, lo - q)
    if hi - q >= first:
        total += _harmonic(hi - q, j, dps) - _harmonic(first - 1, j, dps)
    first = max(1, q - hi)
    if q - lo >= first:
        total += (-1) ** j * (_harmonic(q - lo, j, dps) - _harmonic(first - 1, j, dps))
    return total


def partial_fraction_integral(c, groups, dps=None, min_digits=None):
    """
    int_0^inf alpha^c / prod_q (alpha + q)^(e_q) d alpha for integer c >= 0

    The integrand is expanded in partial fractions; the residue coefficients at
    each pole -q come from the Taylor coefficients of the remaining factor,
    written as complete Bell polynomials of its log-derivatives (generalized
    harmonic numbers). Simple-pole terms contribute -log q, higher orders
    q^(1-s) / (s-1). The alternating sum is accumulated in mpmath.

    Args:
        c: Nonnegative integer power of alpha
        groups: Sequence of (lo, hi, e): poles q = lo..hi with multiplicity e
        dps: Working decimal precision (defaults to settings)
        min_digits: Significant digits that must survive cancellation

    Returns:
        mpmath.mpf value of the integral
    """
    settings = get_settings()
    dps = dps or settings.closed_form_dps
    min_digits = min_digits or settings.closed_form_min_digits
    groups = [(int(lo), int(hi), int(e)) for lo, hi, e in groups if hi >= lo and e > 0]
    c = int(c)
    with mpmath.workdps(dps):
        terms = []
        for lo, hi, e in groups:
            for q in range(lo, hi + 1):
                terms.extend(_pole_terms(q, e, c, groups, dps))
        total = mpmath.fsum(terms)
        largest = max(abs(t) for t in terms)
        if not total > 0:
            raise InstabilityError(f"closed-form sum is non-positive ({mpmath.nstr(total, 5)}); precision exhausted")
        lost = float(mpmath.log10(largest / total))
        if lost > dps - min_digits:
            raise InstabilityError(f"closed-form sum lost {lost:.1f} of {dps} digits (need {min_digits} to survive)")
        return +total


def _pole_terms(q, e, c, groups, dps):
    mpq = mpmath.mpf(q)
    # rho_q(-q): remaining factor of the integrand evaluated at the pole
    sign = (-1) ** c
    log_mag = c * mpmath.log(mpq)
    for lo, hi, mult in groups:
        for i in range(lo, hi + 1):
            if i == q:
                continue
            if i < q:
                sign *= (-1) ** mult
            log_mag -= mult * mpmath.log(abs(i - q))
    rho = sign * mpmath.exp(log_mag)

    x = []
    for j in range(1, e):
        others = sum(mult * _offset_power_sum(q, lo, hi, j, dps) for lo, hi, mult in groups)
        x.append(math.factorial(j - 1) * (-c / mpq**j - (-1) ** (j - 1) * others))

    terms = []
    for s in range(1, e + 1):
        d = e - s
        coefficient = rho * bell_complete(x[:d]) / math.factorial(d)
        weight = -mpmath.log(mpq) if s == 1 else mpq ** (1 - s) / (s - 1)
        terms.append(coefficient * weight)
    return terms


def _require_integer_shape(p, n=None):
    settings = get_settings()
    if not p.has_integer_shape:
        raise ParameterError(f"closed form needs integer a and b, got {p}")
    size = max(p.m, n or 0)
    if size > settings.closed_form_max_m:
        raise ParameterError(f"closed form limited to sizes <= {settings.closed_form_max_m}, got {size}")


def log_norm_const_closed_form(p):
    """
    log S_{a,b,m} from the partial-fraction closed form (integer a, b only)

    Args:
        p: StirlingGammaParams with integer a and b and m within the closed-form cap

    Returns:
        log S_{a,b,m}
    """
    _require_integer_shape(p)
    a, b = int(p.a), int(p.b)
    value = partial_fraction_integral(a - b - 1, [(1, p.m - 1, b)])
    return float(mpmath.log(value))


# ---------------------------------------------------------------------------
# Moments and limits
# ---------------------------------------------------------------------------

def moment_regime(p, s):
    """
    Classify the moment E(alpha^s)

    Returns:
        'finite' when s < mb - a, 'boundary' when s == mb - a, 'divergent' otherwise
    """
    if not s > 0:
        raise ParameterError(f"moment order must be positive, got s={s}")
    threshold = p.m * p.b - p.a
    if math.isclose(s, threshold, rel_tol=1e-12, abs_tol=1e-12):
        return "boundary"
    return "finite" if s < threshold else "divergent"


def moment(p, s):
    """
    Moment E(alpha^s) = S_{a+s,b,m} / S_{a,b,m}

    Args:
        p: StirlingGammaParams
        s: Positive order

    Returns:
        The moment, or inf when s >= mb - a (the boundary is log-divergent)
    """
    regime = moment_regime(p, s)
    if regime != "finite":
        if regime == "boundary":
            logger.warning("Moment of order %g sits on the boundary mb - a of %s; reporting inf", s, p)
        return math.inf
    log_upper = _log_kernel_integral(p.a + s - p.b - 1.0, p.b, p.m)
    return math.exp(log_upper - log_norm_const_quadrature(p))


def mean(p):
    return moment(p, 1.0)


def variance(p):
    second = moment(p, 2.0)
    if math.isinf(second):
        return math.inf
    return second - mean(p) ** 2


def gamma_limit_params(p):
    """
    Gamma approximation Ga(a - b, b log m) to Sg(a, b, m) for large m

    Args:
        p: StirlingGammaParams with a > b

    Returns:
        GammaParams(shape=a - b, rate=b log m)
    """
    if not p.a > p.b:
        raise ParameterError(f"gamma limit needs a > b, got a={p.a}, b={p.b}")
    return GammaParams(p.a - p.b, p.b * math.log(p.m))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioOfUniformsBounds:
    """Suprema M_u = sup S and M_v = sup alpha^2 S together with their maximizers"""
    u_max: LogValue
    v_max: LogValue
    u_argmax: float
    v_argmax: float


@dataclass(frozen=True)
class SamplingReport:
    """Draws together with the number of proposals that produced them"""
    draws: np.ndarray
    proposals: int

    @property
    def acceptance_rate(self):
        return len(self.draws) / self.proposals if self.proposals else math.nan


def _solve_weighted_occupancy(p, target):
    # root in alpha of sum_{i=1..m-1} alpha / (alpha + i) = target, monotone in log alpha
    offsets = np.arange(1, p.m, dtype=float)

    def excess(log_alpha):
        alpha = math.exp(log_alpha)
        return float(np.sum(alpha / (alpha + offsets))) - target

    lo, hi = math.log(1e-12), math.log(1e8)
    if not excess(lo) < 0 < excess(hi):
        raise ConvergenceError(f"no bracket for the density maximizer of {p} on (1e-12, 1e8)")
    return math.exp(optimize.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-10))


def ratio_of_uniforms_bounds(p):
    """
    Bounding rectangle of the ratio-of-uniforms region for Sg(a, b, m)

    The maximizers solve (a - b -/+ 1) / b = sum_{i<m} alpha / (alpha + i),
    the stationarity conditions of log S and log S + 2 log alpha. When
    a - b = 1, S decreases on (0, inf) and M_u is the limit 1 / Gamma(m)^b.

    Args:
        p: StirlingGammaParams with a - b >= 1 and a + 1 < mb

    Returns:
        RatioOfUniformsBounds in log space
    """
    if p.a - p.b < 1:
        raise ParameterError(f"ratio-of-uniforms needs a - b >= 1, got a - b = {p.a - p.b:g}")
    if not p.a + 1 < p.m * p.b:
        raise ParameterError(f"alpha^2 S(alpha) is unbounded for {p}; ratio-of-uniforms needs a + 1 < mb")
    if math.isclose(p.a - p.b, 1.0, rel_tol=0.0, abs_tol=1e-9):
        u_argmax = 0.0
        log_u = -p.b * float(special.gammaln(p.m))
    else:
        u_argmax = _solve_weighted_occupancy(p, (p.a - p.b - 1.0) / p.b)
        log_u = float(_log_kernel(u_argmax, p.a - p.b - 1.0, p.b, p.m))
    v_argmax = _solve_weighted_occupancy(p, (p.a - p.b + 1.0) / p.b)
    log_v = float(_log_kernel(v_argmax, p.a - p.b + 1.0, p.b, p.m))
    return RatioOfUniformsBounds(LogValue(log_u), LogValue(log_v), u_argmax, v_argmax)


def beta_prime_sample(a0, b0, r, rng, size=None):
    """
    Generalized beta prime BeP(a0, b0, r): r x / (1 - x) with x ~ Beta(a0, b0)

    x / (1 - x) is formed as a ratio of independent gammas, which avoids
    rounding 1 - x to zero.

    Args:
        a0: Positive shape
        b0: Positive shape
        r: Positive scale
        rng: numpy Generator
        size: None for a single draw, else the number of draws

    Returns:
        float or ndarray of draws
    """
    if not (a0 > 0 and b0 > 0 and r > 0):
        raise ParameterError(f"beta prime needs a0, b0, r > 0, got a0={a0}, b0={b0}, r={r}")
    count = 1 if size is None else int(size)
    numerator = rng.standard_gamma(a0, count)
    denominator = rng.standard_gamma(b0, count)
    with np.errstate(divide="ignore", invalid="ignore"):
        draws = r * (numerator / denominator)
    return float(draws[0]) if size is None else draws


class _RatioOfUniformsProposal:
    """Uniform proposals on [0, sqrt(M_u)] x [0, sqrt(M_v)]"""

    name = "ratio-of-uniforms"

    def __init__(self, p):
        self.params = p
        self.bounds = ratio_of_uniforms_bounds(p)
        self.half_log_u = 0.5 * self.bounds.u_max.log_magnitude
        self.half_log_v = 0.5 * self.bounds.v_max.log_magnitude

    def propose(self, rng, size):
        p = self.params
        log_u = self.half_log_u + np.log1p(-rng.random(size))
        log_v = self.half_log_v + np.log1p(-rng.random(size))
        with np.errstate(over="ignore"):
            alpha = np.exp(log_v - log_u)
        valid = np.isfinite(alpha) & (alpha > 0)
        accept = np.zeros(size, dtype=bool)
        accept[valid] = 2.0 * log_u[valid] <= _log_kernel(alpha[valid], p.a - p.b - 1.0, p.b, p.m)
        return alpha, accept

    def expected_acceptance(self):
        log_area = log_norm_const_quadrature(self.params) - math.log(2.0)
        return math.exp(log_area - self.half_log_u - self.half_log_v)


class _BetaPrimeProposal:
    """BeP(a - b, mb - a, Gamma(m)^(1/(m-1))) proposals with acceptance A(alpha)"""

    name = "beta-prime"

    def __init__(self, p):
        self.params = p
        self.a0 = p.a - p.b
        self.b0 = p.m * p.b - p.a
        self.log_r = float(special.gammaln(p.m)) / (p.m - 1)
        self.r = math.exp(self.log_r)

    def log_acceptance(self, alpha):
        p = self.params
        alpha = np.asarray(alpha, dtype=float)
        return p.b * (p.m - 1) * np.log(alpha + self.r) - p.b * _log_rising(alpha + 1.0, p.m - 1)

    def propose(self, rng, size):
        alpha = beta_prime_sample(self.a0, self.b0, self.r, rng, size)
        valid = np.isfinite(alpha) & (alpha > 0)
        log_uniform = np.log1p(-rng.random(size))
        accept = np.zeros(size, dtype=bool)
        accept[valid] = log_uniform[valid] <= self.log_acceptance(alpha[valid])
        return alpha, accept

    def expected_acceptance(self):
        log_rate = (log_norm_const_quadrature(self.params) + self.b0 * self.log_r
                    - float(special.betaln(self.a0, self.b0)))
        return math.exp(log_rate)


@lru_cache(maxsize=512)
def _proposal_for(p):
    if p.a - p.b >= 1 and p.a + 1 < p.m * p.b:
        proposal = _RatioOfUniformsProposal(p)
    else:
        proposal = _BetaPrimeProposal(p)
    logger.debug("Sampling %s with the %s algorithm", p, proposal.name)
    return proposal


def sampler_name(p):
    """Name of the rejection algorithm used for p"""
    return _proposal_for(p).name


def expected_acceptance(p):
    """Exact acceptance probability of the rejection sampler chosen for p"""
    return _proposal_for(p).expected_acceptance()


def log_acceptance_function(p, alpha):
    """log A(alpha) of the beta-prime proposal, A <= 1 with A(0) = A(inf) = 1"""
    return _BetaPrimeProposal(p).log_acceptance(alpha)


def sample_with_report(p, rng, size):
    """
    Exact draws from Sg(a, b, m) plus the proposal count

    Uses ratio-of-uniforms when a - b >= 1 (and a + 1 < mb), otherwise
    rejection from the generalized beta prime proposal.

    Args:
        p: StirlingGammaParams
        rng: numpy Generator
        size: Number of draws

    Returns:
        SamplingReport
    """
    proposal = _proposal_for(p)
    budget = get_settings().rejection_budget
    size = int(size)
    draws = np.empty(size)
    filled = proposals = streak = 0
    while filled < size:
        batch = int(min(_MAX_BATCH, max(_MIN_BATCH, 2 * (size - filled))))
        candidates, accept = proposal.propose(rng, batch)
        hits = np.flatnonzero(accept)
        gap = int(hits[0]) if hits.size else batch
        if streak + gap >= budget:
            raise RejectionBudgetError(f"{streak + gap} consecutive rejections sampling {p} with {proposal.name}")
        if hits.size == 0:
            streak += batch
            proposals += batch
            continue
        take = hits[: size - filled]
        draws[filled:filled + take.size] = candidates[take]
        filled += take.size
        # the unused tail of the final batch does not count as proposals
        proposals += batch if filled < size else int(take[-1]) + 1
        streak = batch - 1 - int(hits[-1])
    return SamplingReport(draws, proposals)


def sample(p, rng, size=None):
    """
    Exact draw(s) from Sg(a, b, m)

    Args:
        p: StirlingGammaParams
        rng: numpy Generator (owned by the caller)
        size: None for one float, else the number of draws

    Returns:
        float or ndarray
    """
    report = sample_with_report(p, rng, 1 if size is None else size)
    return float(report.draws[0]) if size is None else report.draws


def _log_mass(p, u):
    # log of alpha times the kernel at alpha = e^u (the density of log alpha)
    return _log_kernel(np.exp(u), p.a - p.b - 1.0, p.b, p.m) + u


def _bulk_log_range(p, depth=40.0):
    # log-alpha interval where the density of log alpha is within e^-depth of its peak
    coarse = np.linspace(math.log(1e-300), math.log(1e12), 8001)
    coarse_mass = _log_mass(p, coarse)
    peak = float(np.max(coarse_mass))
    inside = np.flatnonzero(coarse_mass >= peak - depth)
    lo = coarse[max(inside[0] - 1, 0)]
    hi = coarse[min(inside[-1] + 1, coarse.size - 1)]
    return float(lo), float(hi), peak


def density_grid(p, points=2001, lower=None, upper=None):
    """
    Normalized density on a grid covering the bulk of Sg(a, b, m)

    Without explicit bounds the grid is log-spaced over the region where the
    density of log alpha is within e^-40 of its peak.

    Args:
        p: StirlingGammaParams
        points: Number of grid points
        lower: Optional lower bound (> 0)
        upper: Optional upper bound

    Returns:
        (alpha grid, density values)
    """
    if points < 2:
        raise ParameterError(f"density grid needs at least 2 points, got {points}")
    lo, hi, _ = _bulk_log_range(p)
    lo = math.log(lower) if lower is not None else lo
    hi = math.log(upper) if upper is not None else hi
    if not hi > lo:
        raise ParameterError(f"density grid needs lower < upper, got {math.exp(lo)!r}, {math.exp(hi)!r}")
    alpha = np.geomspace(math.exp(lo), math.exp(hi), int(points))
    return alpha, np.exp(log_pdf(p, alpha))


def sample_by_inversion(p, rng, size, grid_size=100_001):
    """
    Draws by inverting a tabulated CDF (reference sampler for exactness checks)

    The CDF is built by the trapezoid rule in log(alpha) over the region where
    the density is within e^-40 of its peak.

    Args:
        p: StirlingGammaParams
        rng: numpy Generator
        size: Number of draws
        grid_size: Points of the fine log-alpha grid

    Returns:
        ndarray of draws
    """
    lo, hi, peak = _bulk_log_range(p)
    grid = np.linspace(lo, hi, grid_size)
    mass = np.exp(_log_mass(p, grid) - peak)
    table = integrate.cumulative_trapezoid(mass, grid, initial=0.0)
    table /= table[-1]
    return np.exp(np.interp(rng.random(int(size)), table, grid))
