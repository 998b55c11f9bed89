"""
Marginal Gibbs sampler for a Dirichlet-process mixture of multivariate
Gaussians with a conjugate normal-inverse-Wishart baseline and a fixed or
Stirling-gamma distributed precision.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .conjugacy import posterior_single
from .diagnostics import CoClusteringAccumulator, effective_sample_size, histogram_counts
from .errors import NumericalError, ParameterError, StateConsistencyError
from .random_partition import Partition, sample_partition_crp
from .settings import get_settings
from .stirling_gamma import StirlingGammaParams, sample

logger = logging.getLogger(__name__)

FOUR_COMPONENT_MEANS = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])
FOUR_COMPONENT_VARIANCE = 0.15


@dataclass(frozen=True)
class NiwParams:
    """Normal-inverse-Wishart baseline N(mu; mean0, Sigma / kappa0) IW(Sigma; nu0, scale0)"""
    mean0: np.ndarray
    kappa0: float
    nu0: float
    scale0: np.ndarray

    def __post_init__(self):
        mean0 = np.asarray(self.mean0, dtype=float).reshape(-1)
        scale0 = np.asarray(self.scale0, dtype=float)
        d = mean0.size
        if scale0.shape != (d, d):
            raise ParameterError(f"scale0 must be {d}x{d}, got shape {scale0.shape}")
        if not np.allclose(scale0, scale0.T):
            raise ParameterError("scale0 must be symmetric")
        try:
            np.linalg.cholesky(scale0)
        except np.linalg.LinAlgError as e:
            raise ParameterError("scale0 must be positive definite") from e
        if not self.kappa0 > 0:
            raise ParameterError(f"kappa0 must be positive, got {self.kappa0}")
        if not self.nu0 > d - 1:
            raise ParameterError(f"nu0 must exceed dimension - 1 = {d - 1}, got {self.nu0}")
        object.__setattr__(self, "mean0", mean0)
        object.__setattr__(self, "scale0", scale0)

    @classmethod
    def default(cls, dimension, kappa0=0.01, nu0=None):
        """Zero mean, identity scale, nu0 = dimension + 2 unless given"""
        return cls(np.zeros(dimension), kappa0, dimension + 2.0 if nu0 is None else nu0, np.eye(dimension))

    @property
    def dimension(self):
        return self.mean0.size


@dataclass(frozen=True)
class ClusterStats:
    """Sufficient statistics of one cluster: size, sum and sum of outer products"""
    count: int
    total: np.ndarray
    outer: np.ndarray

    @classmethod
    def empty(cls, dimension):
        return cls(0, np.zeros(dimension), np.zeros((dimension, dimension)))

    @classmethod
    def of(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(points.shape[0], points.sum(axis=0), points.T @ points)


@dataclass(frozen=True)
class PrecisionPrior:
    """
    Prior on the DP precision

    kind is one of:
        fixed        alpha held at `alpha`
        sg           one Stirling-gamma precision (mixture sampler)
        independent  one Stirling-gamma precision per network
        pooled       a single Stirling-gamma precision shared by all networks
    When m is None it is set to the number of units by resolve().
    """
    kind: str
    alpha: float | None = None
    a: float | None = None
    b: float | None = None
    m: int | None = None

    KINDS = ("fixed", "sg", "independent", "pooled")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"precision prior kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind == "fixed":
            if self.alpha is None or not self.alpha > 0:
                raise ParameterError(f"fixed precision must be positive, got alpha={self.alpha}")
        elif self.a is None or self.b is None:
            raise ParameterError(f"{self.kind} prior needs a and b")
        elif self.m is not None:
            StirlingGammaParams(self.a, self.b, self.m)

    @classmethod
    def fixed(cls, alpha):
        return cls("fixed", alpha=float(alpha))

    @classmethod
    def stirling_gamma(cls, params, kind="sg"):
        return cls(kind, a=params.a, b=params.b, m=params.m)

    @classmethod
    def parse(cls, text):
        """
        Parse 'fixed:<alpha>', 'sg:<a>,<b>[,<m>]', 'independent:<a>,<b>[,<m>]' or 'pooled:<a>,<b>[,<m>]'

        Args:
            text: Prior specification from the command line or a config file

        Returns:
            PrecisionPrior
        """
        kind, _, rest = str(text).partition(":")
        kind = kind.strip().lower()
        try:
            values = [float(item) for item in rest.split(",") if item.strip()]
        except ValueError as e:
            raise ParameterError(f"cannot parse precision prior {text!r}") from e
        if kind == "fixed" and len(values) == 1:
            return cls.fixed(values[0])
        if kind in ("sg", "independent", "pooled") and len(values) in (2, 3):
            m = int(values[2]) if len(values) == 3 else None
            if m is not None and m != values[2]:
                raise ParameterError(f"reference size m must be an integer in {text!r}")
            return cls(kind, a=values[0], b=values[1], m=m)
        raise ParameterError(f"cannot parse precision prior {text!r}; expected fixed:<alpha> or sg:<a>,<b>[,<m>]")

    def resolve(self, n):
        """Fill in m = n when the reference size was left implicit"""
        if self.kind == "fixed" or self.m is not None:
            return self
        return PrecisionPrior(self.kind, a=self.a, b=self.b, m=int(n))

    @property
    def params(self):
        if self.kind == "fixed":
            raise ParameterError("a fixed precision has no Stirling-gamma parameters")
        if self.m is None:
            raise ParameterError("reference size m unresolved; call resolve(n) first")
        return StirlingGammaParams(self.a, self.b, self.m)

    def initial_alpha(self, rng):
        return self.alpha if self.kind == "fixed" else sample(self.params, rng)

    def describe(self):
        if self.kind == "fixed":
            return f"fixed:{self.alpha!r}"
        suffix = "" if self.m is None else f",{self.m}"
        return f"{self.kind}:{self.a!r},{self.b!r}{suffix}"


# ---------------------------------------------------------------------------
# Posterior predictive
# ---------------------------------------------------------------------------

def _predictive_parameters(counts, totals, outers, niw):
    # Student-t predictive (loc, precision, log-normalizer, df) for a stack of clusters
    d = niw.dimension
    counts = np.asarray(counts, dtype=float)
    kappa = niw.kappa0 + counts
    nu = niw.nu0 + counts
    loc = (niw.kappa0 * niw.mean0 + totals) / kappa[:, None]
    scatter = (niw.scale0 + outers + niw.kappa0 * np.outer(niw.mean0, niw.mean0)
               - kappa[:, None, None] * loc[:, :, None] * loc[:, None, :])
    df = nu - d + 1.0
    shape = scatter * ((kappa + 1.0) / (kappa * df))[:, None, None]
    sign, logdet = np.linalg.slogdet(shape)
    if np.any(sign <= 0):
        raise NumericalError("posterior scale matrix lost positive definiteness")
    precision = np.linalg.inv(shape)
    const = (special.gammaln((df + d) / 2.0) - special.gammaln(df / 2.0)
             - 0.5 * d * np.log(df * math.pi) - 0.5 * logdet)
    return loc, precision, const, df


def _log_student_t(x, loc, precision, const, df):
    diff = x - loc
    delta = np.einsum("kd,kde,ke->k", diff, precision, diff)
    d = loc.shape[1]
    return const - 0.5 * (df + d) * np.log1p(delta / df)


def log_posterior_predictive(cluster, x, niw):
    """
    Log density at x of the Student-t posterior predictive of one cluster

    Args:
        cluster: ClusterStats (count 0 gives the prior predictive)
        x: Point of the data dimension
        niw: NiwParams

    Returns:
        Log predictive density
    """
    params = _predictive_parameters(np.array([cluster.count]), np.asarray(cluster.total)[None, :],
                                    np.asarray(cluster.outer)[None, :, :], niw)
    return float(_log_student_t(np.asarray(x, dtype=float), *params)[0])


# ---------------------------------------------------------------------------
# Chain state
# ---------------------------------------------------------------------------

class MixtureChainState:
    """
    Cluster assignments, per-cluster sufficient statistics and the current precision

    Clusters occupy slots 0..K-1; an emptied cluster is replaced by the last
    slot. Predictive parameters are cached per slot and refreshed from the
    sufficient statistics whenever a slot changes.
    """

    def __init__(self, data, niw, labels, alpha):
        self.data = np.asarray(data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != niw.dimension:
            raise ParameterError(f"data must be (n, {niw.dimension}), got shape {self.data.shape}")
        self.niw = niw
        self.alpha = float(alpha)
        self.n, self.d = self.data.shape
        self._outer_points = self.data[:, :, None] * self.data[:, None, :]
        self.labels = Partition.from_labels(labels).assignments.astype(np.int64) - 1
        self._rebuild()
        empty = _predictive_parameters(np.zeros(1), np.zeros((1, self.d)), np.zeros((1, self.d, self.d)), niw)
        self.prior_log_predictive = np.array([_log_student_t(x, *empty)[0] for x in self.data])

    @classmethod
    def single_cluster(cls, data, niw, alpha):
        return cls(data, niw, np.zeros(len(data), dtype=np.int64), alpha)

    def _rebuild(self):
        self.K = int(self.labels.max()) + 1
        capacity = max(8, 2 * self.K)
        self.counts = np.zeros(capacity, dtype=np.int64)
        self.totals = np.zeros((capacity, self.d))
        self.outers = np.zeros((capacity, self.d, self.d))
        np.add.at(self.counts, self.labels, 1)
        np.add.at(self.totals, self.labels, self.data)
        np.add.at(self.outers, self.labels, self._outer_points)
        self._loc = np.zeros((capacity, self.d))
        self._precision = np.zeros((capacity, self.d, self.d))
        self._const = np.zeros(capacity)
        self._df = np.ones(capacity)
        for j in range(self.K):
            self._refresh(j)

    def _grow(self):
        capacity = 2 * self.counts.size
        for name in ("counts", "totals", "outers", "_loc", "_precision", "_const", "_df"):
            old = getattr(self, name)
            new = np.zeros((capacity,) + old.shape[1:], dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def _refresh(self, j):
        loc, precision, const, df = _predictive_parameters(
            self.counts[j:j + 1], self.totals[j:j + 1], self.outers[j:j + 1], self.niw)
        self._loc[j], self._precision[j], self._const[j], self._df[j] = loc[0], precision[0], const[0], df[0]

    def remove(self, i):
        """Take unit i out of its cluster, deleting the cluster if it empties"""
        j = self.labels[i]
        self.counts[j] -= 1
        self.totals[j] -= self.data[i]
        self.outers[j] -= self._outer_points[i]
        self.labels[i] = -1
        if self.counts[j] == 0:
            last = self.K - 1
            if j != last:
                for name in ("counts", "totals", "outers", "_loc", "_precision", "_const", "_df"):
                    array = getattr(self, name)
                    array[j] = array[last]
                self.labels[self.labels == last] = j
            self.K -= 1
        else:
            self._refresh(j)

    def add(self, i, j):
        """Put unit i into cluster j (j == K opens a new cluster)"""
        if j == self.K:
            if self.K == self.counts.size:
                self._grow()
            self.counts[j] = 0
            self.totals[j] = 0.0
            self.outers[j] = 0.0
            self.K += 1
        self.counts[j] += 1
        self.totals[j] += self.data[i]
        self.outers[j] += self._outer_points[i]
        self.labels[i] = j
        self._refresh(j)

    def log_predictive(self, x):
        """Log predictive density of x under each current cluster"""
        K = self.K
        return _log_student_t(x, self._loc[:K], self._precision[:K], self._const[:K], self._df[:K])

    def canonicalize(self):
        """Relabel clusters in order of first appearance"""
        _, first = np.unique(self.labels, return_index=True)
        order = self.labels[np.sort(first)]
        mapping = np.empty(self.K, dtype=np.int64)
        mapping[order] = np.arange(self.K)
        self.labels = mapping[self.labels]
        for name in ("counts", "totals", "outers", "_loc", "_precision", "_const", "_df"):
            array = getattr(self, name)
            array[: self.K] = array[order]

    @property
    def partition(self):
        return Partition.from_labels(self.labels)

    def cluster_stats(self, j):
        return ClusterStats(int(self.counts[j]), self.totals[j].copy(), self.outers[j].copy())

    def check_consistency(self, tol=1e-8):
        """Compare the running statistics with a from-scratch recomputation"""
        counts = np.bincount(self.labels, minlength=self.K)
        totals = np.zeros((self.K, self.d))
        outers = np.zeros((self.K, self.d, self.d))
        np.add.at(totals, self.labels, self.data)
        np.add.at(outers, self.labels, self._outer_points)
        scale = 1.0 + np.abs(outers).max()
        if (counts.size != self.K or not np.array_equal(counts, self.counts[: self.K])
                or not np.allclose(totals, self.totals[: self.K], rtol=tol, atol=tol * scale)
                or not np.allclose(outers, self.outers[: self.K], rtol=tol, atol=tol * scale)):
            raise StateConsistencyError("mixture sufficient statistics diverged from their recomputation")


def _sample_log_weights(log_weights, rng):
    weights = np.exp(log_weights - log_weights.max())
    cumulative = np.cumsum(weights)
    return int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))


def gibbs_sweep_assignments(state, rng):
    """
    One sequential sweep of cluster reassignments

    Unit i joins cluster j with weight n_{j,-i} times the cluster predictive,
    or a new cluster with weight alpha times the prior predictive.

    Args:
        state: MixtureChainState (modified in place)
        rng: numpy Generator

    Returns:
        The updated state
    """
    log_alpha = math.log(state.alpha)
    for i in range(state.n):
        state.remove(i)
        K = state.K
        log_weights = np.empty(K + 1)
        if K:
            log_weights[:K] = np.log(state.counts[:K]) + state.log_predictive(state.data[i])
        log_weights[K] = log_alpha + state.prior_log_predictive[i]
        state.add(i, _sample_log_weights(log_weights, rng))
    state.canonicalize()
    return state


def gibbs_step_alpha(state, prior, rng):
    """
    Redraw alpha from Sg(a + K, b + 1, n) given the last sampled partition

    A fixed prior leaves alpha unchanged.

    Args:
        state: MixtureChainState
        prior: PrecisionPrior (resolved, kind fixed or sg)
        rng: numpy Generator

    Returns:
        The updated state
    """
    if prior.kind == "fixed":
        return state
    if prior.kind != "sg":
        raise ParameterError(f"mixture sampler supports fixed or sg priors, got {prior.kind}")
    state.alpha = sample(posterior_single(prior.params, state.K, state.n), rng)
    return state


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass
class MixtureTrace:
    """Post-burn-in draws of one chain"""
    iterations: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    co_clustering: np.ndarray
    partitions: np.ndarray | None = None
    prior: str = ""
    info: dict = field(default_factory=dict)

    def k_histogram(self):
        return histogram_counts(self.k, self.co_clustering.shape[0])

    def k_pmf(self):
        counts = self.k_histogram()
        return counts / counts.sum()

    def k_mode(self):
        return int(np.argmax(self.k_histogram())) + 1

    def alpha_ess(self, method="monotone"):
        return effective_sample_size(self.alpha, method)


def run_chain(data, niw, prior, iterations, burn_in, rng, thin=1, keep_partitions=True, log_every=1000):
    """
    Run one marginal Gibbs chain

    Each iteration is a sweep of the assignments followed by the precision step.

    Args:
        data: (n, d) array
        niw: NiwParams
        prior: PrecisionPrior (m defaults to n)
        iterations: Total iterations including burn-in
        burn_in: Iterations discarded
        rng: numpy Generator
        thin: Keep every thin-th post-burn-in draw
        keep_partitions: Store the sampled partitions
        log_every: Progress logging interval (0 disables)

    Returns:
        MixtureTrace
    """
    if not iterations > burn_in >= 0:
        raise ParameterError(f"iterations ({iterations}) must exceed burn_in ({burn_in})")
    data = np.asarray(data, dtype=float)
    prior = prior.resolve(len(data))
    state = MixtureChainState.single_cluster(data, niw, prior.initial_alpha(rng))
    consistency_every = get_settings().consistency_every
    kept_iterations, kept_k, kept_alpha, kept_partitions = [], [], [], []
    co_clustering = CoClusteringAccumulator(state.n)

    for iteration in range(1, iterations + 1):
        gibbs_sweep_assignments(state, rng)
        gibbs_step_alpha(state, prior, rng)
        if consistency_every and iteration % consistency_every == 0:
            state.check_consistency()
        if iteration > burn_in and (iteration - burn_in) % thin == 0:
            kept_iterations.append(iteration)
            kept_k.append(state.K)
            kept_alpha.append(state.alpha)
            co_clustering.add(state.labels)
            if keep_partitions:
                kept_partitions.append((state.labels + 1).astype(np.int32))
        if log_every and iteration % log_every == 0:
            logger.info("Mixture chain %s: iteration %d/%d, K=%d, alpha=%.4g",
                        prior.describe(), iteration, iterations, state.K, state.alpha)

    return MixtureTrace(
        iterations=np.asarray(kept_iterations),
        k=np.asarray(kept_k),
        alpha=np.asarray(kept_alpha),
        co_clustering=co_clustering.frequencies(),
        partitions=np.asarray(kept_partitions) if keep_partitions else None,
        prior=prior.describe(),
    )


def _run_chain_job(job):
    data, niw, prior, iterations, burn_in, seed_seq, thin, keep_partitions, log_every = job
    return run_chain(data, niw, prior, iterations, burn_in, np.random.default_rng(seed_seq),
                     thin=thin, keep_partitions=keep_partitions, log_every=log_every)


def chain_seeds(seed, chains):
    """Independent per-chain seed sequences derived from one base seed"""
    return np.random.SeedSequence(seed).spawn(int(chains))


def run_chains(data, niw, prior, iterations, burn_in, chains, seed, thin=1, keep_partitions=True,
               log_every=1000, max_workers=None):
    """
    Run independent chains concurrently, one process per chain

    Chain c uses the c-th child of SeedSequence(seed), so results do not depend
    on scheduling.

    Returns:
        List of MixtureTrace, in chain order
    """
    jobs = [(data, niw, prior, iterations, burn_in, seq, thin, keep_partitions, log_every)
            for seq in chain_seeds(seed, chains)]
    if len(jobs) == 1:
        return [_run_chain_job(jobs[0])]
    with ProcessPoolExecutor(max_workers=max_workers or len(jobs)) as executor:
        return list(executor.map(_run_chain_job, jobs))


def pool_traces(traces):
    """Concatenate post-burn-in draws of several chains into one MixtureTrace"""
    total = sum(len(trace.k) for trace in traces)
    co_clustering = sum(trace.co_clustering * len(trace.k) for trace in traces) / max(total, 1)
    partitions = None
    if all(trace.partitions is not None for trace in traces):
        partitions = np.concatenate([trace.partitions for trace in traces])
    return MixtureTrace(
        iterations=np.concatenate([trace.iterations for trace in traces]),
        k=np.concatenate([trace.k for trace in traces]),
        alpha=np.concatenate([trace.alpha for trace in traces]),
        co_clustering=co_clustering,
        partitions=partitions,
        prior=traces[0].prior if traces else "",
        info={"chains": len(traces)},
    )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate_four_component_data(n, rng, return_labels=False):
    """
    Equal-weight mixture of four bivariate normals

    Means (-1,-1), (1,-1), (-1,1), (1,1) with covariance diag(0.15, 0.15).

    Args:
        n: Number of points (>= 4)
        rng: numpy Generator
        return_labels: Also return the component index of each point

    Returns:
        (n, 2) array, plus the labels when requested
    """
    if n < 4:
        raise ParameterError(f"four-component simulation needs n >= 4, got n={n}")
    labels = rng.integers(0, 4, size=n)
    data = FOUR_COMPONENT_MEANS[labels] + math.sqrt(FOUR_COMPONENT_VARIANCE) * rng.standard_normal((n, 2))
    return (data, labels) if return_labels else data


def simulate_data_given_partition(partition, niw, rng):
    """Draw fresh cluster parameters from the NIW baseline and data for each block"""
    data = np.empty((partition.n, niw.dimension))
    for block in partition.blocks():
        sigma = np.atleast_2d(stats.invwishart.rvs(df=niw.nu0, scale=niw.scale0, random_state=rng))
        mu = rng.multivariate_normal(niw.mean0, sigma / niw.kappa0)
        data[block] = rng.multivariate_normal(mu, sigma, size=block.size)
    return data


def simulate_from_prior(n, niw, prior, rng):
    """
    Joint draw of (alpha, partition, data) from the mixture prior

    Args:
        n: Number of units
        niw: NiwParams
        prior: PrecisionPrior (fixed or sg; m defaults to n)
        rng: numpy Generator

    Returns:
        (alpha, Partition, (n, d) data)
    """
    prior = prior.resolve(n)
    alpha = prior.initial_alpha(rng)
    partition = sample_partition_crp(alpha, n, rng)
    return alpha, partition, simulate_data_given_partition(partition, niw, rng)
