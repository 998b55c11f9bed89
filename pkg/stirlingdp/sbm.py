"""
Collapsed Gibbs sampler for Beta-Bernoulli stochastic block models fitted to
several binary networks over the same nodes.

Each network has its own partition. The DP precisions are fixed, independent
Stirling-gamma per network, or a single Stirling-gamma precision pooled across
networks. Edge probabilities carry uniform Beta(1, 1) priors and are
integrated out, so blocks are scored by their edge and pair counts alone.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from sklearn.metrics import adjusted_rand_score

from .conjugacy import PartitionObservations, posterior_pooled, posterior_single
from .diagnostics import CoClusteringAccumulator, effective_sample_size, histogram_counts
from .dpm_mixture import PrecisionPrior, chain_seeds
from .errors import ParameterError, StateConsistencyError
from .random_partition import Partition, dp_log_eppf, enumerate_set_partitions
from .settings import get_settings
from .stirling_gamma import StirlingGammaParams, sample

logger = logging.getLogger(__name__)

SIMULATION_CLUSTERS = 6
SIMULATION_DIRICHLET = 10.0
SIMULATION_P_IN = (0.95, 0.90, 0.85, 0.80, 0.75, 0.70)
SIMULATION_P_OUT = (0.05, 0.10, 0.10, 0.15, 0.15, 0.30)
PRIOR_KINDS = ("fixed", "independent", "pooled")


@dataclass(frozen=True)
class NetworkData:
    """N symmetric binary adjacency matrices with zero diagonal over the same n nodes"""
    adjacency: np.ndarray

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency)
        if adjacency.ndim == 2:
            adjacency = adjacency[None, :, :]
        if adjacency.ndim != 3 or adjacency.shape[1] != adjacency.shape[2]:
            raise ParameterError(f"adjacency must be (N, n, n), got shape {adjacency.shape}")
        if adjacency.shape[0] == 0 or adjacency.shape[1] == 0:
            raise ParameterError("at least one network with one node is required")
        if not np.isin(adjacency, (0, 1)).all():
            raise ParameterError("adjacency entries must be 0 or 1")
        adjacency = adjacency.astype(np.int8)
        if not np.array_equal(adjacency, adjacency.transpose(0, 2, 1)):
            raise ParameterError("adjacency matrices must be symmetric")
        if np.any(np.diagonal(adjacency, axis1=1, axis2=2)):
            raise ParameterError("adjacency matrices must have a zero diagonal")
        adjacency.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)

    @classmethod
    def from_matrices(cls, matrices):
        matrices = [np.asarray(matrix) for matrix in matrices]
        sizes = {matrix.shape for matrix in matrices}
        if len(sizes) != 1:
            raise ParameterError(f"networks must share the node set, got shapes {sorted(sizes)}")
        return cls(np.stack(matrices))

    @property
    def networks(self):
        return int(self.adjacency.shape[0])

    @property
    def n(self):
        return int(self.adjacency.shape[1])

    def __getitem__(self, s):
        return self.adjacency[s]


# ---------------------------------------------------------------------------
# Block likelihood
# ---------------------------------------------------------------------------

def log_collapsed_block_likelihood(edge_count, pair_count):
    """
    Log marginal of one block's edges under a uniform Beta prior

    log B(1 + e, 1 + q - e) = log G(1 + e) + log G(1 + q - e) - log G(2 + q)

    Args:
        edge_count: Number of edges e in the block
        pair_count: Number of node pairs q in the block

    Returns:
        Log marginal likelihood (0 for an empty block)
    """
    e = np.asarray(edge_count)
    q = np.asarray(pair_count)
    if np.any(e < 0) or np.any(e > q):
        raise ParameterError(f"block counts need 0 <= edges <= pairs, got edges={edge_count}, pairs={pair_count}")
    value = special.gammaln(1 + e) + special.gammaln(1 + q - e) - special.gammaln(2 + q)
    return float(value) if np.ndim(value) == 0 else value


class _BlockScorer:
    # gammaln lookup over every pair count a network of n nodes can reach

    def __init__(self, n):
        self.table = special.gammaln(np.arange(n * (n - 1) // 2 + 3, dtype=float))

    def __call__(self, e, q):
        table = self.table
        return table[1 + e] + table[1 + q - e] - table[2 + q]


def _block_counts(adjacency, labels, k):
    # Edge counts between blocks; the diagonal holds within-block edges
    onehot = np.zeros((labels.size, k), dtype=np.int64)
    onehot[np.arange(labels.size), labels] = 1
    counts = onehot.T @ adjacency.astype(np.int64) @ onehot
    counts[np.diag_indices(k)] //= 2
    return counts, onehot.sum(axis=0)


def _pair_counts(sizes):
    pairs = np.outer(sizes, sizes)
    pairs[np.diag_indices(sizes.size)] = sizes * (sizes - 1) // 2
    return pairs


def partition_log_likelihood(adjacency, partition):
    """Sum of block log marginals of one network under a partition, from scratch"""
    labels = partition.assignments - 1
    edges, sizes = _block_counts(np.asarray(adjacency), labels, partition.k)
    upper = np.triu_indices(partition.k)
    return float(np.sum(log_collapsed_block_likelihood(edges[upper], _pair_counts(sizes)[upper])))


# ---------------------------------------------------------------------------
# Chain state
# ---------------------------------------------------------------------------

class NetworkBlocks:
    """
    Partition of one network plus its block sizes and between-block edge counts

    Blocks occupy slots 0..K-1; an emptied block is replaced by the last slot.
    """

    def __init__(self, adjacency, labels, scorer=None):
        self.adjacency = np.asarray(adjacency)
        self.n = self.adjacency.shape[0]
        self.neighbors = [np.flatnonzero(row) for row in self.adjacency]
        self.scorer = scorer or _BlockScorer(self.n)
        self.labels = Partition.from_labels(labels).assignments.astype(np.int64) - 1
        self._rebuild()

    def _rebuild(self):
        self.K = int(self.labels.max()) + 1
        capacity = max(8, 2 * self.K)
        edges, sizes = _block_counts(self.adjacency, self.labels, self.K)
        self.edges = np.zeros((capacity, capacity), dtype=np.int64)
        self.edges[: self.K, : self.K] = edges
        self.sizes = np.zeros(capacity, dtype=np.int64)
        self.sizes[: self.K] = sizes

    def _grow(self):
        capacity = 2 * self.sizes.size
        edges = np.zeros((capacity, capacity), dtype=np.int64)
        edges[: self.K, : self.K] = self.edges[: self.K, : self.K]
        sizes = np.zeros(capacity, dtype=np.int64)
        sizes[: self.K] = self.sizes[: self.K]
        self.edges, self.sizes = edges, sizes

    def edge_vector(self, i):
        """Edges from node i into each current block"""
        return np.bincount(self.labels[self.neighbors[i]], minlength=self.K)

    def remove(self, i, e):
        z = self.labels[i]
        K = self.K
        self.edges[z, :K] -= e
        self.edges[:K, z] -= e
        self.edges[z, z] += e[z]
        self.sizes[z] -= 1
        self.labels[i] = -1
        if self.sizes[z] == 0:
            last = K - 1
            if z != last:
                order = np.arange(K)
                order[z], order[last] = last, z
                self.edges[:K, :K] = self.edges[np.ix_(order, order)]
                self.sizes[:K] = self.sizes[order]
                self.labels[self.labels == last] = z
            self.edges[last, :K] = 0
            self.edges[:K, last] = 0
            self.sizes[last] = 0
            self.K -= 1
            return z, last
        return None

    def add(self, i, h, e):
        if h == self.K:
            if self.K == self.sizes.size:
                self._grow()
            self.K += 1
            e = np.append(e, 0)
        K = self.K
        self.edges[h, :K] += e
        self.edges[:K, h] += e
        self.edges[h, h] -= e[h]
        self.sizes[h] += 1
        self.labels[i] = h

    def assignment_log_weights(self, e, log_alpha):
        """Unnormalized log probabilities of each existing block and of a new block"""
        K = self.K
        sizes = self.sizes[:K]
        edges = self.edges[:K, :K]
        pairs = _pair_counts(sizes)
        score = self.scorer
        gain = (score(edges + e[None, :], pairs + sizes[None, :]) - score(edges, pairs)).sum(axis=1)
        weights = np.empty(K + 1)
        weights[:K] = np.log(sizes) + gain
        weights[K] = log_alpha + score(e, sizes).sum()
        return weights

    def canonicalize(self):
        _, first = np.unique(self.labels, return_index=True)
        order = self.labels[np.sort(first)]
        mapping = np.empty(self.K, dtype=np.int64)
        mapping[order] = np.arange(self.K)
        self.labels = mapping[self.labels]
        K = self.K
        self.edges[:K, :K] = self.edges[np.ix_(order, order)]
        self.sizes[:K] = self.sizes[order]

    def log_likelihood(self):
        K = self.K
        upper = np.triu_indices(K)
        pairs = _pair_counts(self.sizes[:K])
        return float(self.scorer(self.edges[:K, :K][upper], pairs[upper]).sum())

    @property
    def partition(self):
        return Partition.from_labels(self.labels)

    def check_consistency(self):
        edges, sizes = _block_counts(self.adjacency, self.labels, self.K)
        if not (np.array_equal(edges, self.edges[: self.K, : self.K])
                and np.array_equal(sizes, self.sizes[: self.K])):
            raise StateConsistencyError("block edge counts diverged from their recomputation")


class MultiNetworkState:
    """Per-network NetworkBlocks and the vector of precisions alpha_1..alpha_N"""

    def __init__(self, data, labels, alphas):
        self.data = data
        scorer = _BlockScorer(data.n)
        labels = np.asarray(labels)
        if labels.ndim == 1:
            labels = np.broadcast_to(labels, (data.networks, data.n))
        if labels.shape != (data.networks, data.n):
            raise ParameterError(f"labels must be ({data.networks}, {data.n}), got shape {labels.shape}")
        self.networks = [NetworkBlocks(data[s], labels[s], scorer) for s in range(data.networks)]
        alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (data.networks,)).copy()
        if np.any(~(alphas > 0)):
            raise ParameterError(f"precisions must be positive, got {alphas}")
        self.alphas = alphas

    @classmethod
    def initial(cls, data, alphas, init="singletons"):
        """All nodes in their own block ('singletons') or in one block ('single')"""
        if init == "singletons":
            labels = np.arange(data.n)
        elif init == "single":
            labels = np.zeros(data.n, dtype=np.int64)
        else:
            raise ParameterError(f"init must be 'singletons' or 'single', got {init!r}")
        return cls(data, labels, alphas)

    @property
    def cluster_counts(self):
        return np.array([blocks.K for blocks in self.networks])

    def partition(self, s):
        return self.networks[s].partition

    def check_consistency(self, tol=1e-8):
        for s, blocks in enumerate(self.networks):
            blocks.check_consistency()
            cached = blocks.log_likelihood()
            scratch = partition_log_likelihood(blocks.adjacency, blocks.partition)
            if not math.isclose(cached, scratch, rel_tol=tol, abs_tol=tol):
                raise StateConsistencyError(
                    f"network {s + 1}: block log likelihood {cached!r} != recomputed {scratch!r}")


def _sample_log_weights(log_weights, rng):
    weights = np.exp(log_weights - log_weights.max())
    cumulative = np.cumsum(weights)
    return int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))


def gibbs_sweep_network(state, s, rng):
    """
    One sequential sweep over the nodes of network s

    Node i joins block h with weight n_{h,-i} times the change in block
    marginals, or a new block with weight alpha_s times the marginal of its
    edges to every existing block.

    Args:
        state: MultiNetworkState (modified in place)
        s: Network index (0-based)
        rng: numpy Generator

    Returns:
        The updated state
    """
    blocks = state.networks[s]
    log_alpha = math.log(state.alphas[s])
    for i in range(blocks.n):
        e = blocks.edge_vector(i)
        moved = blocks.remove(i, e)
        if moved is not None:
            z, last = moved
            if z != last:
                e[z] = e[last]
            e = e[: blocks.K]
        h = _sample_log_weights(blocks.assignment_log_weights(e, log_alpha), rng)
        blocks.add(i, h, e)
    blocks.canonicalize()
    return state


def log_joint_block_likelihood(state, s):
    """Sum of the block log marginals of network s from the cached counts"""
    return state.networks[s].log_likelihood()


def _check_prior_kind(prior):
    # "sg" does not say whether the precision is shared across networks
    if prior.kind not in PRIOR_KINDS:
        raise ParameterError(f"SBM precision prior must be one of {PRIOR_KINDS}, got {prior.kind!r}; "
                             "use independent:<a>,<b> or pooled:<a>,<b>")


def gibbs_step_alpha_pooled(state, prior, rng):
    """
    Update the precisions given the current cluster counts k_1..k_N

    fixed: no change. independent: each alpha_s from Sg(a + k_s, b + 1, n).
    pooled: one alpha from Sg(a + sum k_s, b + N, n) shared by every network.

    Args:
        state: MultiNetworkState
        prior: PrecisionPrior, or StirlingGammaParams for the pooled update
        rng: numpy Generator

    Returns:
        The updated state
    """
    n = state.data.n
    if isinstance(prior, StirlingGammaParams):
        prior = PrecisionPrior.stirling_gamma(prior, kind="pooled")
    _check_prior_kind(prior)
    if prior.kind == "fixed":
        return state
    params = prior.resolve(n).params
    counts = state.cluster_counts
    if prior.kind == "pooled":
        posterior = posterior_pooled(params, PartitionObservations(n, tuple(counts)))
        state.alphas[:] = sample(posterior, rng)
    else:
        for s, k in enumerate(counts):
            state.alphas[s] = sample(posterior_single(params, int(k), n), rng)
    return state


def adjusted_rand_index(p1, p2):
    """
    Adjusted Rand index between two partitions of the same units

    Args:
        p1: Partition
        p2: Partition

    Returns:
        ARI (1 for identical partitions)
    """
    if p1.n != p2.n:
        raise ParameterError(f"ARI needs partitions of the same size, got {p1.n} and {p2.n}")
    return float(adjusted_rand_score(p1.assignments, p2.assignments))


def enumerate_posterior(adjacency, alpha):
    """
    Exact partition posterior of one network under a DP(alpha) prior

    Args:
        adjacency: Symmetric binary (n, n) matrix, n small
        alpha: Fixed positive precision

    Returns:
        (list of Partition, array of posterior probabilities)
    """
    adjacency = NetworkData(adjacency)[0]
    partitions = list(enumerate_set_partitions(adjacency.shape[0]))
    log_post = np.array([dp_log_eppf(alpha, part) + partition_log_likelihood(adjacency, part)
                         for part in partitions])
    return partitions, np.exp(log_post - special.logsumexp(log_post))


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass
class SbmTrace:
    """Post-burn-in draws of one multi-network chain"""
    iterations: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    co_clustering: np.ndarray
    partitions: np.ndarray | None = None
    ari: np.ndarray | None = None
    prior: str = ""
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.co_clustering.shape[1]

    def k_histograms(self):
        """Per-network K_n counts on 1..n, shape (N, n)"""
        return np.array([histogram_counts(self.k[:, s], self.n) for s in range(self.k.shape[1])])

    def k_modes(self):
        return np.argmax(self.k_histograms(), axis=1) + 1

    def mean_ari(self):
        """Posterior mean ARI per network (None without a reference partition)"""
        return None if self.ari is None else self.ari.mean(axis=0)

    def alpha_ess(self, method="monotone"):
        return np.array([effective_sample_size(self.alpha[:, s], method) for s in range(self.alpha.shape[1])])

    def summary(self):
        mean_ari = self.mean_ari()
        return {
            "prior": self.prior,
            "draws": int(len(self.iterations)),
            "k_mean": self.k.mean(axis=0).tolist(),
            "k_mode": self.k_modes().tolist(),
            "alpha_mean": self.alpha.mean(axis=0).tolist(),
            "alpha_ess": self.alpha_ess().tolist(),
            "mean_ari": None if mean_ari is None else mean_ari.tolist(),
            "overall_mean_ari": None if mean_ari is None else float(mean_ari.mean()),
        }


def run_multinetwork_chain(data, prior, iterations, burn_in, rng, truth=None, thin=1,
                           keep_partitions=False, init="singletons", log_every=1000):
    """
    Run one collapsed Gibbs chain over all networks

    Each iteration sweeps every network and then updates the precisions.

    Args:
        data: NetworkData
        prior: PrecisionPrior (fixed, independent or pooled; m defaults to n)
        iterations: Total iterations including burn-in
        burn_in: Iterations discarded
        rng: numpy Generator
        truth: Optional reference Partition (or one per network) for ARI traces
        thin: Keep every thin-th post-burn-in draw
        keep_partitions: Store the sampled partitions
        init: Starting partition, 'singletons' or 'single'
        log_every: Progress logging interval (0 disables)

    Returns:
        SbmTrace
    """
    if not iterations > burn_in >= 0:
        raise ParameterError(f"iterations ({iterations}) must exceed burn_in ({burn_in})")
    prior = prior.resolve(data.n)
    _check_prior_kind(prior)
    if prior.kind == "fixed":
        alphas = prior.alpha
    elif prior.kind == "pooled":
        alphas = sample(prior.params, rng)
    else:
        alphas = sample(prior.params, rng, data.networks)
    state = MultiNetworkState.initial(data, alphas, init)
    if truth is not None:
        truth = [truth] * data.networks if isinstance(truth, Partition) else list(truth)
        if len(truth) != data.networks or any(part.n != data.n for part in truth):
            raise ParameterError("reference partitions must cover every network and every node")

    consistency_every = get_settings().consistency_every
    kept_iterations, kept_k, kept_alpha, kept_ari, kept_partitions = [], [], [], [], []
    accumulators = [CoClusteringAccumulator(data.n) for _ in range(data.networks)]

    for iteration in range(1, iterations + 1):
        for s in range(data.networks):
            gibbs_sweep_network(state, s, rng)
        gibbs_step_alpha_pooled(state, prior, rng)
        if consistency_every and iteration % consistency_every == 0:
            state.check_consistency()
        if iteration > burn_in and (iteration - burn_in) % thin == 0:
            kept_iterations.append(iteration)
            kept_k.append(state.cluster_counts)
            kept_alpha.append(state.alphas.copy())
            for s, blocks in enumerate(state.networks):
                accumulators[s].add(blocks.labels)
            if truth is not None:
                kept_ari.append([adjusted_rand_index(state.partition(s), truth[s]) for s in range(data.networks)])
            if keep_partitions:
                kept_partitions.append(np.stack([blocks.labels + 1 for blocks in state.networks]).astype(np.int32))
        if log_every and iteration % log_every == 0:
            logger.info("SBM chain %s: iteration %d/%d, K=%s", prior.describe(), iteration, iterations,
                        state.cluster_counts.tolist())

    return SbmTrace(
        iterations=np.asarray(kept_iterations),
        k=np.asarray(kept_k),
        alpha=np.asarray(kept_alpha),
        co_clustering=np.stack([acc.frequencies() for acc in accumulators]),
        partitions=np.asarray(kept_partitions) if keep_partitions else None,
        ari=np.asarray(kept_ari) if truth is not None else None,
        prior=prior.describe(),
    )


def _run_chain_job(job):
    data, prior, iterations, burn_in, seed_seq, truth, thin, keep_partitions, init, log_every = job
    return run_multinetwork_chain(data, prior, iterations, burn_in, np.random.default_rng(seed_seq),
                                  truth=truth, thin=thin, keep_partitions=keep_partitions, init=init,
                                  log_every=log_every)


def run_multinetwork_chains(data, prior, iterations, burn_in, chains, seed, truth=None, thin=1,
                            keep_partitions=False, init="singletons", log_every=1000, max_workers=None):
    """Independent multi-network chains in separate processes, seeded from one base seed"""
    jobs = [(data, prior, iterations, burn_in, seq, truth, thin, keep_partitions, init, log_every)
            for seq in chain_seeds(seed, chains)]
    if len(jobs) == 1:
        return [_run_chain_job(jobs[0])]
    with ProcessPoolExecutor(max_workers=max_workers or len(jobs)) as executor:
        return list(executor.map(_run_chain_job, jobs))


def pool_traces(traces):
    """Concatenate post-burn-in draws of several chains"""
    total = sum(len(trace.iterations) for trace in traces)
    co_clustering = sum(trace.co_clustering * len(trace.iterations) for trace in traces) / max(total, 1)
    has_ari = all(trace.ari is not None for trace in traces)
    has_partitions = all(trace.partitions is not None for trace in traces)
    return SbmTrace(
        iterations=np.concatenate([trace.iterations for trace in traces]),
        k=np.concatenate([trace.k for trace in traces]),
        alpha=np.concatenate([trace.alpha for trace in traces]),
        co_clustering=co_clustering,
        partitions=np.concatenate([trace.partitions for trace in traces]) if has_partitions else None,
        ari=np.concatenate([trace.ari for trace in traces]) if has_ari else None,
        prior=traces[0].prior if traces else "",
        info={"chains": len(traces)},
    )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate_networks(n, rng, p_in=SIMULATION_P_IN, p_out=SIMULATION_P_OUT):
    """
    Networks sharing one planted partition into six clusters

    Cluster probabilities come from a symmetric Dirichlet(10, ..., 10); network
    s has within-cluster edge probability p_in[s] and between-cluster p_out[s].

    Args:
        n: Number of nodes (>= 12)
        rng: numpy Generator
        p_in: Within-cluster probabilities, one per network
        p_out: Between-cluster probabilities, one per network

    Returns:
        (NetworkData, true Partition)
    """
    if n < 12:
        raise ParameterError(f"network simulation needs n >= 12, got n={n}")
    if len(p_in) != len(p_out):
        raise ParameterError("p_in and p_out must have one entry per network")
    weights = rng.dirichlet(np.full(SIMULATION_CLUSTERS, SIMULATION_DIRICHLET))
    labels = rng.choice(SIMULATION_CLUSTERS, size=n, p=weights)
    truth = Partition.from_labels(labels)
    same = labels[:, None] == labels[None, :]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    matrices = []
    for inside, outside in zip(p_in, p_out):
        probabilities = np.where(same, inside, outside)
        draws = (rng.random((n, n)) < probabilities) & upper
        matrices.append((draws | draws.T).astype(np.int8))
    return NetworkData.from_matrices(matrices), truth
