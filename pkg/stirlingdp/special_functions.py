"""
Log-space special-function kernels: ascending factorials, signless Stirling
numbers of the first kind, generalized harmonic numbers, complete Bell
polynomials and the digamma/trigamma pair.
"""
import logging
import math
import threading
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special

from .errors import ParameterError
from .settings import get_settings

logger = logging.getLogger(__name__)

# Below this length the ascending factorial is summed term by term.
_DIRECT_SUM_MAX = 64
# Beyond x = ratio * n the ascending factorial uses its 1/x expansion.
_ASYMPTOTIC_RATIO = 1e3


@dataclass(frozen=True, order=True)
class LogValue:
    """Nonnegative quantity stored as its natural logarithm (-inf encodes zero)"""
    log_magnitude: float

    @classmethod
    def from_value(cls, value):
        if value < 0:
            raise ParameterError(f"LogValue requires a nonnegative value, got {value}")
        return cls(math.log(value) if value > 0 else -math.inf)

    def __mul__(self, other):
        return LogValue(self.log_magnitude + other.log_magnitude)

    def __truediv__(self, other):
        return LogValue(self.log_magnitude - other.log_magnitude)

    def sqrt(self):
        return LogValue(0.5 * self.log_magnitude)

    @property
    def value(self):
        """Exponentiated value; may underflow to 0.0 or overflow to inf"""
        return math.exp(self.log_magnitude) if self.log_magnitude < 709.0 else math.inf


def log_ascending_factorial(x, n):
    """
    Logarithm of the ascending factorial (x)_n = x (x+1) ... (x+n-1)

    Args:
        x: Positive real, scalar or array
        n: Nonnegative integer

    Returns:
        log (x)_n with the shape of x
    """
    n = int(n)
    if n < 0:
        raise ParameterError(f"ascending factorial needs n >= 0, got n={n}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise ParameterError(f"ascending factorial needs x > 0, got x={x}")
    result = _log_rising(x_arr, n)
    return float(result) if np.ndim(result) == 0 else result


def _log_rising(x, n):
    # Unchecked kernel for the quadrature integrands.
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.zeros_like(x)
    if n <= _DIRECT_SUM_MAX:
        offsets = np.arange(n, dtype=float)
        return np.log(np.add.outer(x, offsets)).sum(axis=-1)
    # gammaln differences lose all digits once x dwarfs n; expand log1p(i/x) instead
    large = x > _ASYMPTOTIC_RATIO * n
    safe = np.where(large, 1.0, x)
    value = special.gammaln(safe + n) - special.gammaln(safe)
    if np.any(large):
        big = np.where(large, x, 1.0)
        s1 = n * (n - 1) / 2.0
        s2 = (n - 1) * n * (2 * n - 1) / 6.0
        s3 = s1 * s1
        series = n * np.log(big) + s1 / big - s2 / (2.0 * big**2) + s3 / (3.0 * big**3)
        value = np.where(large, series, value)
    return value


class StirlingTable:
    """
    Memoized rows of log |s(n, k)|, the signless Stirling numbers of the first kind

    Rows are built with the recursion |s(n+1, k)| = n |s(n, k)| + |s(n, k-1)|
    in log space. Only requested rows are cached; building row n starts from
    the closest cached row below it.
    """

    def __init__(self, max_n=None):
        self.max_n = int(max_n if max_n is not None else get_settings().stirling_cap)
        base = np.zeros(1)
        base.setflags(write=False)
        self._rows = {0: base}
        self._lock = threading.Lock()

    def row(self, n):
        """
        Full row log |s(n, k)| for k = 0..n (entry 0 is -inf for n >= 1)

        Args:
            n: Row index, 0 <= n <= max_n

        Returns:
            Read-only float array of length n + 1
        """
        n = int(n)
        if n < 0 or n > self.max_n:
            raise ParameterError(f"Stirling row n={n} outside 0..{self.max_n} (raise the table cap)")
        with self._lock:
            cached = self._rows.get(n)
            if cached is not None:
                return cached
            start = max(key for key in self._rows if key <= n)
            row = self._rows[start]
            for j in range(start, n):
                row = _next_stirling_row(row, j)
            row.setflags(write=False)
            self._rows[n] = row
            logger.debug("Built Stirling row n=%d from cached row %d", n, start)
            return row

    def log_value(self, n, k):
        if not 1 <= k <= n:
            raise ParameterError(f"Stirling number needs 1 <= k <= n, got n={n}, k={k}")
        return float(self.row(n)[k])


def _next_stirling_row(row, j):
    # row holds log|s(j, k)|, k = 0..j; returns log|s(j+1, k)|, k = 0..j+1
    keep = np.append(row, -np.inf)
    shift = np.insert(row, 0, -np.inf)
    if j == 0:
        return shift
    return np.logaddexp(math.log(j) + keep, shift)


_default_table = None
_default_lock = threading.Lock()


def default_stirling_table():
    """Process-wide table sized by the configured cap"""
    global _default_table
    with _default_lock:
        if _default_table is None:
            _default_table = StirlingTable()
        return _default_table


def log_signless_stirling_first(n, k, table=None):
    """
    log |s(n, k)|, the signless Stirling number of the first kind

    Args:
        n: Positive integer within the table cap
        k: Integer in 1..n
        table: Optional StirlingTable (defaults to the shared table)

    Returns:
        Natural logarithm of |s(n, k)|
    """
    table = table or default_stirling_table()
    return table.log_value(int(n), int(k))


def generalized_harmonic(j, s, dps=None):
    """
    Generalized harmonic number H_{j,s} = sum_{i=1..j} 1 / i^s

    Args:
        j: Nonnegative integer
        s: Positive integer order
        dps: When given, evaluate in mpmath with this many decimal digits

    Returns:
        float, or mpmath.mpf when dps is given
    """
    j, s = int(j), int(s)
    if j < 0 or s < 1:
        raise ParameterError(f"harmonic number needs j >= 0 and s >= 1, got j={j}, s={s}")
    if dps is None:
        return math.fsum(1.0 / i**s for i in range(j, 0, -1))
    with mpmath.workdps(dps):
        return mpmath.fsum(mpmath.mpf(i) ** -s for i in range(1, j + 1))


def bell_complete(x):
    """
    Complete exponential Bell polynomial B_s(x_1, ..., x_s)

    Uses B_{s+1} = sum_{i=0..s} C(s, i) B_{s-i} x_{i+1} with B_0 = 1. Works for
    floats and mpmath numbers alike.

    Args:
        x: Sequence x_1..x_s (may be empty)

    Returns:
        B_s evaluated at x
    """
    values = list(x)
    bell = [1]
    for s in range(len(values)):
        bell.append(sum(math.comb(s, i) * bell[s - i] * values[i] for i in range(s + 1)))
    return bell[-1]


def digamma(x):
    """psi(x) = Gamma'(x) / Gamma(x) for x > 0"""
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise ParameterError(f"digamma needs x > 0, got x={x}")
    result = special.digamma(x_arr)
    return float(result) if np.ndim(result) == 0 else result


def trigamma(x):
    """psi'(x), the derivative of the digamma function, for x > 0"""
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise ParameterError(f"trigamma needs x > 0, got x={x}")
    result = special.polygamma(1, x_arr)
    return float(result) if np.ndim(result) == 0 else result
