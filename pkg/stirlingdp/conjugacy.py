"""
Conjugate updates of the DP precision under a Stirling-gamma prior.

Conditioning uses cluster counts only. The update is exact only when the
prior's reference size m equals the number of units n; any other case is
refused with ConjugacyError.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConjugacyError, ParameterError
from .stirling_gamma import StirlingGammaParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionObservations:
    """Cluster counts k_1..k_N of N observed partitions of the same n units"""
    n: int
    cluster_counts: tuple

    def __post_init__(self):
        counts = tuple(int(k) for k in self.cluster_counts)
        if len(counts) == 0:
            raise ParameterError("at least one observed partition is required")
        if any(not 1 <= k <= self.n for k in counts):
            raise ParameterError(f"cluster counts must lie in 1..{self.n}, got {counts}")
        object.__setattr__(self, "cluster_counts", counts)

    @classmethod
    def from_partitions(cls, partitions):
        partitions = list(partitions)
        sizes = {part.n for part in partitions}
        if len(sizes) != 1:
            raise ParameterError(f"observed partitions must share n, got sizes {sorted(sizes)}")
        return cls(sizes.pop(), tuple(part.k for part in partitions))

    @property
    def count(self):
        return len(self.cluster_counts)

    @property
    def total_clusters(self):
        return sum(self.cluster_counts)

    @property
    def mean_clusters(self):
        return float(np.mean(self.cluster_counts))


def _require_reference_size(prior, n):
    if prior.m != n:
        raise ConjugacyError(
            f"conjugate update needs the prior reference size m to equal n; got m={prior.m}, n={n}"
        )


def posterior_single(prior, k, n):
    """
    Posterior of alpha after observing one partition of n units with k clusters

    Args:
        prior: StirlingGammaParams with m == n
        k: Observed number of clusters, 1 <= k <= n
        n: Number of units

    Returns:
        StirlingGammaParams Sg(a + k, b + 1, n)
    """
    _require_reference_size(prior, n)
    if not 1 <= k <= n:
        raise ParameterError(f"cluster count must lie in 1..{n}, got k={k}")
    return StirlingGammaParams(prior.a + k, prior.b + 1.0, n)


def posterior_pooled(prior, obs):
    """
    Posterior of a precision shared by N partitions of the same n units

    Args:
        prior: StirlingGammaParams with m == obs.n
        obs: PartitionObservations

    Returns:
        StirlingGammaParams Sg(a + sum k_s, b + N, n)
    """
    _require_reference_size(prior, obs.n)
    return StirlingGammaParams(prior.a + obs.total_clusters, prior.b + obs.count, obs.n)


def fold_posterior(prior, cluster_counts, n):
    """Apply posterior_single once per observed partition"""
    posterior = prior
    for k in cluster_counts:
        posterior = posterior_single(posterior, k, n)
    return posterior


def posterior_mean_expected_clusters(prior, obs):
    """
    Posterior mean of E(K_n | alpha) = alpha (psi(alpha + n) - psi(alpha))

    A convex combination of the prior location a/b and the observed mean
    cluster count, with weights b / (b + N) and N / (b + N).

    Args:
        prior: StirlingGammaParams with m == obs.n
        obs: PartitionObservations

    Returns:
        (b / (b + N)) (a / b) + (N / (b + N)) mean(k)
    """
    _require_reference_size(prior, obs.n)
    weight = prior.b / (prior.b + obs.count)
    return weight * prior.location + (1.0 - weight) * obs.mean_clusters


def prior_elicit(expected_clusters, precision_b, n):
    """
    Prior with a given expected number of clusters at the reference size n

    Args:
        expected_clusters: Target E(K_n), strictly between 1 and n
        precision_b: Precision b > 0 (larger means more confident)
        n: Reference sample size

    Returns:
        StirlingGammaParams Sg(expected_clusters * b, b, n)
    """
    if not 1 < expected_clusters < n:
        raise ParameterError(f"expected number of clusters must lie strictly in (1, {n}), got {expected_clusters}")
    if not precision_b > 0:
        raise ParameterError(f"precision b must be positive, got {precision_b}")
    prior = StirlingGammaParams(expected_clusters * precision_b, precision_b, int(n))
    logger.debug("Elicited %s for E(K_%d) = %g", prior, n, expected_clusters)
    return prior
