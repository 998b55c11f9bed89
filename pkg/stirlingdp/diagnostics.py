"""Chain and distribution diagnostics shared by the samplers"""
import logging

import numpy as np
from scipy import fft

from .errors import ParameterError

logger = logging.getLogger(__name__)


def _autocovariance(trace):
    # FFT autocovariance at lags 0..n-1, biased (divided by n)
    n = trace.size
    centered = trace - trace.mean()
    size = fft.next_fast_len(2 * n)
    spectrum = np.fft.rfft(centered, n=size)
    return np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n] / n


def effective_sample_size(trace, method="monotone"):
    """
    Effective sample size of a single chain

    The autocorrelation sum is truncated with Geyer's initial positive
    sequence; with method="monotone" the paired sums are additionally forced
    to be non-increasing (initial monotone sequence).

    Args:
        trace: 1-D array of draws
        method: "monotone" or "positive"

    Returns:
        ESS as a float (nan for constant or too-short traces)
    """
    if method not in ("monotone", "positive"):
        raise ParameterError(f"ESS method must be 'monotone' or 'positive', got {method!r}")
    trace = np.asarray(trace, dtype=float).reshape(-1)
    n = trace.size
    if n < 4 or not np.all(np.isfinite(trace)):
        return float("nan")
    acov = _autocovariance(trace)
    if acov[0] <= 0:
        return float("nan")
    mean_var = acov[0] * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n

    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - acov[1]) / var_plus
    rho[1] = rho_odd

    t = 1
    while t < n - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - acov[t + 1]) / var_plus
        rho_odd = 1.0 - (mean_var - acov[t + 2]) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    if method == "monotone":
        t = 1
        while t <= max_t - 2:
            if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
                rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
                rho[t + 2] = rho[t + 1]
            t += 2

    tau = -1.0 + 2.0 * np.sum(rho[:max_t]) + np.sum(rho[max_t + 1:max_t + 2])
    return float(n / tau)


def total_variation(p, q):
    """Half the L1 distance between two pmfs on 1, 2, ... (shorter one zero-padded)"""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    size = max(p.size, q.size)
    p = np.pad(p, (0, size - p.size))
    q = np.pad(q, (0, size - q.size))
    return 0.5 * float(np.abs(p - q).sum())


def histogram_counts(values, support_max):
    """Counts of integer values on 1..support_max"""
    values = np.asarray(values, dtype=np.int64)
    return np.bincount(values, minlength=support_max + 1)[1:support_max + 1]


def empirical_pmf(values, support_max):
    counts = histogram_counts(values, support_max)
    return counts / max(counts.sum(), 1)


class CoClusteringAccumulator:
    """Running count of how often each pair of units shares a block"""

    def __init__(self, n):
        self.counts = np.zeros((n, n), dtype=np.int64)
        self.draws = 0

    def add(self, labels):
        labels = np.asarray(labels)
        self.counts += labels[:, None] == labels[None, :]
        self.draws += 1

    def merge(self, other):
        self.counts += other.counts
        self.draws += other.draws

    def frequencies(self):
        """Posterior similarity matrix (co-clustering frequencies)"""
        return self.counts / max(self.draws, 1)


def co_clustering(label_matrix):
    """
    Co-clustering frequency matrix of a stack of partitions

    Args:
        label_matrix: (draws, n) integer labels

    Returns:
        (n, n) matrix of pairwise same-block frequencies
    """
    label_matrix = np.atleast_2d(np.asarray(label_matrix))
    accumulator = CoClusteringAccumulator(label_matrix.shape[1])
    for labels in label_matrix:
        accumulator.add(labels)
    return accumulator.frequencies()
