"""
Exchangeable random partitions: the Dirichlet-process and Stirling-gamma
EPPFs, urn simulation, exact pmfs of the number of clusters K_n and their
large-n limits.
"""
import logging
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special, stats

from .diagnostics import total_variation
from .errors import NumericalError, ParameterError
from .settings import get_settings
from .special_functions import StirlingTable, _log_rising, default_stirling_table, log_ascending_factorial
from .stirling_gamma import (
    _log_kernel,
    _log_kernel_integral,
    _require_integer_shape,
    log_norm_const_quadrature,
    log_quadrature,
    partial_fraction_integral,
    sample,
)

logger = logging.getLogger(__name__)

# Step of the log-alpha trapezoid rule used for whole pmf rows.
_ROW_STEP = 0.01
_ROW_CHUNK = 128
# Terms more than this far below a row's peak (log units) are dropped.
_ROW_DEPTH = 60.0


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Partition of n units in canonical form

    Labels run 1..k in order of first appearance, so two partitions are equal
    exactly when their label arrays are equal.
    """
    assignments: np.ndarray

    def __post_init__(self):
        labels = np.array(self.assignments, dtype=np.int64).reshape(-1)
        if labels.size == 0:
            raise ParameterError("a partition needs at least one unit")
        if not np.array_equal(labels, _canonical(labels)):
            raise ParameterError(f"labels are not in order-of-appearance form: {labels.tolist()[:20]}")
        labels.setflags(write=False)
        object.__setattr__(self, "assignments", labels)

    @classmethod
    def from_labels(cls, labels):
        """Canonicalize arbitrary labels (any hashable integers) into a Partition"""
        return cls(_canonical(np.asarray(labels).reshape(-1)))

    @classmethod
    def from_line(cls, line):
        """Parse one line of comma-separated labels"""
        items = [item.strip() for item in line.strip().split(",") if item.strip()]
        return cls.from_labels([int(item) for item in items])

    @property
    def n(self):
        return int(self.assignments.size)

    @property
    def k(self):
        return int(self.assignments.max())

    @property
    def sizes(self):
        return np.bincount(self.assignments)[1:]

    def blocks(self):
        """Unit indices (0-based) of each block, in label order"""
        return [np.flatnonzero(self.assignments == label) for label in range(1, self.k + 1)]

    def to_line(self):
        return ",".join(str(label) for label in self.assignments.tolist())

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.assignments, other.assignments)

    def __hash__(self):
        return hash(self.assignments.tobytes())

    def __repr__(self):
        return f"Partition({self.to_line()})"


def _canonical(labels):
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(1, first.size + 1)
    return rank[inverse.reshape(-1)]


@dataclass(frozen=True)
class ClusterCountPmf:
    """Exact pmf of K_n on 1..n (probabilities[k - 1] = pr(K_n = k))"""
    n: int
    probabilities: np.ndarray

    def __post_init__(self):
        probabilities = np.asarray(self.probabilities, dtype=float)
        if probabilities.shape != (self.n,):
            raise ParameterError(f"pmf of K_{self.n} needs {self.n} entries, got {probabilities.shape}")
        if np.any(probabilities < 0) or abs(probabilities.sum() - 1.0) > 1e-8:
            raise NumericalError(f"pmf of K_{self.n} is not normalized (sum {probabilities.sum()!r})")
        probabilities.setflags(write=False)
        object.__setattr__(self, "probabilities", probabilities)

    @property
    def support(self):
        return np.arange(1, self.n + 1)

    def mean(self):
        return float(np.dot(self.support, self.probabilities))

    def variance(self):
        return float(np.dot(self.support**2, self.probabilities)) - self.mean() ** 2

    def mode(self):
        return int(np.argmax(self.probabilities)) + 1

    def total_variation(self, other):
        """Total variation distance to another pmf (ClusterCountPmf or array over k = 1, 2, ...)"""
        other_probs = other.probabilities if isinstance(other, ClusterCountPmf) else np.asarray(other)
        return total_variation(self.probabilities, other_probs)


def _normalized_pmf(n, log_probabilities, label):
    probabilities = np.exp(log_probabilities)
    drift = probabilities.sum() - 1.0
    if abs(drift) > 1e-6:
        raise NumericalError(f"{label} pmf of K_{n} drifted from 1 by {drift:.3e}")
    logger.debug("%s pmf of K_%d normalization drift %.2e", label, n, drift)
    return ClusterCountPmf(n, probabilities / probabilities.sum())


# ---------------------------------------------------------------------------
# EPPFs and V coefficients
# ---------------------------------------------------------------------------

def dp_log_eppf(alpha, part):
    """
    Log EPPF of the Dirichlet process: k log alpha - log (alpha)_n + sum_j log Gamma(n_j)

    Args:
        alpha: Positive precision
        part: Partition

    Returns:
        Log probability of the partition
    """
    if not alpha > 0:
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    return float(part.k * math.log(alpha) - log_ascending_factorial(alpha, part.n)
                 + special.gammaln(part.sizes).sum())


def v_coefficient(p, n, k):
    """
    log V(n, k) = log int alpha^(a+k-1) / ((alpha)_m^b (alpha)_n) d alpha

    Args:
        p: StirlingGammaParams
        n: Positive integer
        k: Integer in 1..n

    Returns:
        log V(n, k) by adaptive quadrature
    """
    _check_nk(n, k)
    return _log_kernel_integral(p.a + k - p.b - 2.0, p.b, p.m, int(n))


def _check_nk(n, k):
    if not (int(n) == n and n >= 1 and int(k) == k and 1 <= k <= n):
        raise ParameterError(f"V coefficient needs 1 <= k <= n, got n={n}, k={k}")


def v_coefficient_closed_form(p, n, k):
    """
    log V(n, k) from the partial-fraction closed form (integer a, b only)

    Poles 1..min(n, m)-1 carry multiplicity b + 1; the remaining
    |n - m| poles carry b (when n < m) or 1 (when n > m).
    """
    _check_nk(n, k)
    _require_integer_shape(p, n)
    a, b, m, n = int(p.a), int(p.b), p.m, int(n)
    if n >= m:
        groups = [(1, m - 1, b + 1), (m, n - 1, 1)]
    else:
        groups = [(1, n - 1, b + 1), (n, m - 1, b)]
    return float(mpmath.log(partial_fraction_integral(a + k - b - 2, groups)))


def sgp_log_eppf(p, part):
    """
    Log EPPF of the Stirling-gamma process

    log[V(n, k) / V(1, 1)] + sum_j log Gamma(n_j)

    Args:
        p: StirlingGammaParams
        part: Partition

    Returns:
        Log probability of the partition
    """
    return (v_coefficient(p, part.n, part.k) - log_norm_const_quadrature(p)
            + float(special.gammaln(part.sizes).sum()))


def _log_power_integrals(exponents, log_base):
    """
    log int_0^inf alpha^c exp(log_base(alpha)) d alpha for every c in exponents

    Each integrand is log-concave in u = log alpha, so a trapezoid rule in u
    over the region within e^-60 of the peaks converges geometrically. Rows are
    processed in chunks whose u-range is read off the chunk's extreme exponents.
    """
    exponents = np.asarray(exponents, dtype=float)
    coarse = np.arange(-700.0, 700.0, 0.25)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        coarse_base = log_base(np.exp(coarse)) + coarse
    out = np.empty(exponents.size)
    for start in range(0, exponents.size, _ROW_CHUNK):
        chunk = exponents[start:start + _ROW_CHUNK]
        lo, hi = math.inf, -math.inf
        for c in (chunk[0], chunk[-1]):
            values = c * coarse + coarse_base
            inside = np.flatnonzero(values >= np.nanmax(values) - _ROW_DEPTH)
            lo = min(lo, coarse[max(inside[0] - 2, 0)])
            hi = max(hi, coarse[min(inside[-1] + 2, coarse.size - 1)])
        grid = np.arange(lo, hi + _ROW_STEP, _ROW_STEP)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            base = log_base(np.exp(grid)) + grid
        terms = np.outer(chunk, grid) + base
        out[start:start + chunk.size] = special.logsumexp(terms, axis=1) + math.log(_ROW_STEP)
    return out


def v_coefficient_row(p, n):
    """log V(n, k) for k = 1..n, computed together"""
    n = int(n)
    exponents = p.a + np.arange(1, n + 1) - p.b - 2.0

    def log_base(alpha):
        return -p.b * _log_rising(alpha + 1.0, p.m - 1) - _log_rising(alpha + 1.0, n - 1)

    return _log_power_integrals(exponents, log_base)


# ---------------------------------------------------------------------------
# Cluster-count distributions
# ---------------------------------------------------------------------------

def kn_pmf_dp(alpha, n, table=None):
    """
    pr(K_n = k) = alpha^k |s(n, k)| / (alpha)_n under a DP(alpha) partition

    Args:
        alpha: Positive precision
        n: Positive integer within the Stirling table cap
        table: Optional StirlingTable

    Returns:
        ClusterCountPmf
    """
    if not alpha > 0:
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    table = table or default_stirling_table()
    n = int(n)
    k = np.arange(1, n + 1)
    log_probs = k * math.log(alpha) - log_ascending_factorial(alpha, n) + table.row(n)[1:]
    return _normalized_pmf(n, log_probs, "DP")


def kn_pmf_sgp(p, n, table=None):
    """
    pr(K_n = k) = V(n, k) |s(n, k)| / V(1, 1) under the Stirling-gamma process

    Args:
        p: StirlingGammaParams
        n: Positive integer within the Stirling table cap
        table: Optional StirlingTable

    Returns:
        ClusterCountPmf
    """
    table = table or default_stirling_table()
    n = int(n)
    stirling_row = table.row(n)[1:]
    log_v = v_coefficient_row(p, n)
    # V(1, 1) through the same rule, so discretization errors cancel in the ratio
    log_v11 = _log_power_integrals([p.a - p.b - 1.0], lambda alpha: -p.b * _log_rising(alpha + 1.0, p.m - 1))[0]
    return _normalized_pmf(n, log_v - log_v11 + stirling_row, "Stirling-gamma")


def kn_pmf_gamma(shape, rate, n, table=None):
    """
    pr(K_n = k) when the DP precision has a Ga(shape, rate) prior

    Args:
        shape: Positive gamma shape
        rate: Positive gamma rate
        n: Positive integer within the Stirling table cap
        table: Optional StirlingTable

    Returns:
        ClusterCountPmf
    """
    if not (shape > 0 and rate > 0):
        raise ParameterError(f"gamma prior needs shape > 0 and rate > 0, got {shape}, {rate}")
    table = table or default_stirling_table()
    n = int(n)
    exponents = np.arange(1, n + 1) + shape - 2.0

    def log_base(alpha):
        return -rate * alpha - _log_rising(alpha + 1.0, n - 1)

    log_integrals = _log_power_integrals(exponents, log_base)
    log_probs = (log_integrals + shape * math.log(rate) - special.gammaln(shape)
                 + table.row(n)[1:])
    return _normalized_pmf(n, log_probs, "gamma-mixture")


def d_constant(p):
    """
    D = E[alpha^2 sum_{i=0..m-1} 1 / (alpha + i)^2] under Sg(a, b, m)

    Equivalently E[alpha^2 (psi'(alpha) - psi'(alpha + m))]; the sum is taken
    term by term so the weight stays exact for large alpha.

    Args:
        p: StirlingGammaParams

    Returns:
        D_{a,b,m} by quadrature (at least 1)
    """
    offsets = np.arange(p.m, dtype=float)

    def log_weighted(alpha):
        alpha = np.asarray(alpha, dtype=float)
        ratios = alpha[..., None] / (alpha[..., None] + offsets)
        weight = np.sum(ratios * ratios, axis=-1)
        return _log_kernel(alpha, p.a - p.b - 1.0, p.b, p.m) + np.log(weight)

    return math.exp(log_quadrature(log_weighted) - log_norm_const_quadrature(p))


def dp_expected_clusters(alpha, n):
    """E(K_n | alpha) = alpha (psi(alpha + n) - psi(alpha))"""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    value = alpha * (special.digamma(alpha + n) - special.digamma(alpha))
    return float(value) if value.ndim == 0 else value


def dp_cluster_variance(alpha, n):
    """Var(K_n | alpha) = E(K_n | alpha) - alpha^2 (psi'(alpha) - psi'(alpha + n))"""
    if not alpha > 0:
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    spread = float(special.polygamma(1, alpha) - special.polygamma(1, alpha + n))
    return dp_expected_clusters(alpha, n) - alpha**2 * spread


def dp_cluster_laplace(alpha, n, t):
    """E(exp(-t K_n) | alpha) = (alpha e^-t)_n / (alpha)_n"""
    if not alpha > 0:
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    return math.exp(log_ascending_factorial(alpha * math.exp(-t), n) - log_ascending_factorial(alpha, n))


def negbin_limit_pmf(a, b, k):
    """
    pmf at k of 1 + NegBin(a - b, b / (b + 1)), the limit of K_m under Sg(a, b, m)

    Args:
        a: Shape, a > b
        b: Precision, b > 0
        k: Positive integer (or array)

    Returns:
        Probability (float or array)
    """
    if not (b > 0 and a > b):
        raise ParameterError(f"negative-binomial limit needs a > b > 0, got a={a}, b={b}")
    value = stats.nbinom.pmf(np.asarray(k) - 1, a - b, b / (b + 1.0))
    return float(value) if np.ndim(value) == 0 else value


def poisson_limit_pmf(lam, k):
    """pmf at k of 1 + Poisson(lam), the limit of K_m when alpha = lam / log m"""
    if not lam > 0:
        raise ParameterError(f"Poisson limit needs lam > 0, got {lam}")
    value = stats.poisson.pmf(np.asarray(k) - 1, lam)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def sample_partition_crp(alpha, n, rng):
    """
    Chinese restaurant process draw of a partition of n units

    Unit i + 1 opens a new block with probability alpha / (alpha + i) and
    otherwise joins the block of a uniformly chosen earlier unit, which is
    block j with probability n_j / (alpha + i) overall.

    Args:
        alpha: Positive precision
        n: Number of units
        rng: numpy Generator

    Returns:
        Partition in canonical form
    """
    if not alpha > 0:
        raise ParameterError(f"DP precision must be positive, got alpha={alpha}")
    n = int(n)
    opens = rng.random(n) < alpha / (alpha + np.arange(n))
    picks = rng.random(n)
    labels = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        if opens[i]:
            k += 1
            labels[i] = k
        else:
            labels[i] = labels[int(picks[i] * i)]
    return Partition(labels)


def sample_cluster_count_crp(alpha, n, rng, size=None):
    """K_n under DP(alpha) as a sum of independent Bernoulli(alpha / (alpha + i)) table openings"""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise ParameterError("DP precision must be positive")
    count = 1 if size is None else int(size)
    alpha = np.broadcast_to(alpha, (count,))
    clusters = np.zeros(count, dtype=np.int64)
    for i in range(int(n)):
        clusters += rng.random(count) < alpha / (alpha + i)
    return int(clusters[0]) if size is None else clusters


def sample_partition_sgp(p, n, rng):
    """Stirling-gamma process partition: alpha ~ Sg(a, b, m), then a CRP(alpha) partition"""
    return sample_partition_crp(sample(p, rng), n, rng)


def sample_cluster_counts_sgp(p, n, rng, size):
    """K_n draws under the Stirling-gamma process (one alpha per replicate)"""
    return sample_cluster_count_crp(sample(p, rng, size), n, rng, size)


def sgp_predictive_probabilities(p, part):
    """
    Urn weights for unit n + 1 given a partition of the first n units

    Existing block j: n_j V(n+1, k) / V(n, k); new block: V(n+1, k+1) / V(n, k).

    Args:
        p: StirlingGammaParams
        part: Partition of the first n units

    Returns:
        Array of length k + 1, the last entry being the new-block probability
    """
    n, k = part.n, part.k
    log_current = v_coefficient(p, n, k)
    stay = math.exp(v_coefficient(p, n + 1, k) - log_current)
    new = math.exp(v_coefficient(p, n + 1, k + 1) - log_current)
    return np.append(part.sizes * stay, new)


def enumerate_set_partitions(n):
    """
    All set partitions of n units in canonical form (Bell-number many)

    Args:
        n: Positive integer (small)

    Yields:
        Partition
    """
    n = int(n)
    if n < 1:
        raise ParameterError(f"enumeration needs n >= 1, got n={n}")
    labels = [1] * n

    def extend(i, k):
        if i == n:
            yield Partition(np.array(labels))
            return
        for label in range(1, k + 2):
            labels[i] = label
            yield from extend(i + 1, max(k, label))

    yield from extend(1, 1)


# ---------------------------------------------------------------------------
# Large-m limits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitComparison:
    """Exact K_m pmfs at n = m next to their large-m limits"""
    m: int
    sgp: ClusterCountPmf
    negbin: np.ndarray
    dp: ClusterCountPmf
    poisson: np.ndarray
    tv_negbin: float
    tv_poisson: float


def _tv_to_limit(pmf, limit):
    # limit mass beyond k = n counts fully toward the distance
    return pmf.total_variation(limit) + 0.5 * max(0.0, 1.0 - float(np.sum(limit)))


def limit_comparison(p, lam=3.0, table=None):
    """
    Compare K_m with 1 + NegBin(a - b, b / (b + 1)) under Sg(a, b, m), and K_m
    under DP(lam / log m) with 1 + Poisson(lam)

    Args:
        p: StirlingGammaParams (n is taken to be the reference size m)
        lam: Poisson limit parameter
        table: Optional StirlingTable covering row m

    Returns:
        LimitComparison
    """
    m = p.m
    if table is None:
        cap = get_settings().stirling_cap
        table = default_stirling_table() if m <= cap else StirlingTable(m)
    k = np.arange(1, m + 1)
    sgp = kn_pmf_sgp(p, m, table)
    negbin = negbin_limit_pmf(p.a, p.b, k)
    dp = kn_pmf_dp(lam / math.log(m), m, table)
    poisson = poisson_limit_pmf(lam, k)
    return LimitComparison(m, sgp, negbin, dp, poisson, _tv_to_limit(sgp, negbin), _tv_to_limit(dp, poisson))
