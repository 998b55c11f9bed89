"""
Command-line front end

    stirlingdp sg {pdf,sample,moments,elicit}
    stirlingdp partition {kn-pmf,sample,limits}
    stirlingdp simulate {mixture,networks}
    stirlingdp fit-mixture
    stirlingdp fit-sbm

Every command that writes files also writes manifest.json with the fully
resolved arguments, so a run can be repeated from its manifest with --config.
"""
import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .conjugacy import prior_elicit
from .dpm_mixture import NiwParams, PrecisionPrior, pool_traces, run_chains, simulate_four_component_data
from .errors import ParameterError, StirlingDPError, exit_code_for
from .random_partition import (
    Partition,
    dp_expected_clusters,
    kn_pmf_dp,
    kn_pmf_gamma,
    kn_pmf_sgp,
    limit_comparison,
    sample_partition_crp,
    sample_partition_sgp,
)
from .sbm import NetworkData, run_multinetwork_chains, simulate_networks
from .sbm import pool_traces as pool_sbm_traces
from .settings import get_settings
from .special_functions import StirlingTable
from .stirling_gamma import (
    StirlingGammaParams,
    density_grid,
    expected_acceptance,
    moment,
    moment_regime,
    sample_with_report,
    sampler_name,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240101
_INTERNAL_KEYS = ("handler", "parser", "config")
# recorded in manifests but never applied as defaults
_SELECTOR_KEYS = ("command", "action")


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors exit with the validation code instead of argparse's 2
    def error(self, message):
        raise ParameterError(f"{self.prog}: {message}")


def _banner(title):
    print("=" * 60)
    print(title)
    print("=" * 60)


def _output_dir(args):
    path = Path(args.output_dir or get_settings().output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(args, out_dir):
    arguments = {key: value for key, value in sorted(vars(args).items()) if key not in _INTERNAL_KEYS}
    io.write_json(out_dir / "manifest.json", {"version": __version__, "arguments": arguments})


def _sg_params(args):
    if args.a is None or args.b is None or args.m is None:
        raise ParameterError("Stirling-gamma parameters need --a, --b and --m")
    return StirlingGammaParams(args.a, args.b, args.m)


def _table_for(n):
    return StirlingTable(max(int(n), get_settings().stirling_cap))


# ---------------------------------------------------------------------------
# sg
# ---------------------------------------------------------------------------

def cmd_sg_pdf(args):
    p = _sg_params(args)
    out_dir = _output_dir(args)
    alpha, density = density_grid(p, args.points, args.lower, args.upper)
    path = out_dir / "sg_pdf.csv"
    io.write_trace_csv(path, {"alpha": alpha, "density": density})
    _write_manifest(args, out_dir)
    print(f"✓ Density of {p} on {alpha.size} points written to {path}")
    print(f"  trapezoid mass: {np.trapezoid(density, alpha):.8f}")


def cmd_sg_sample(args):
    p = _sg_params(args)
    if args.count < 1:
        raise ParameterError(f"--count must be positive, got {args.count}")
    out_dir = _output_dir(args)
    report = sample_with_report(p, np.random.default_rng(args.seed), args.count)
    path = out_dir / "sg_samples.csv"
    io.write_matrix_csv(path, report.draws[:, None])
    summary = {
        "params": {"a": p.a, "b": p.b, "m": p.m},
        "sampler": sampler_name(p),
        "draws": int(report.draws.size),
        "proposals": int(report.proposals),
        "acceptance_rate": report.acceptance_rate,
        "expected_acceptance": expected_acceptance(p),
    }
    io.write_json(out_dir / "sg_sample_summary.json", summary)
    _write_manifest(args, out_dir)
    print(f"✓ Drew {report.draws.size} values from {p} with the {summary['sampler']} sampler")
    print(f"  acceptance rate: {report.acceptance_rate:.4f} (exact {summary['expected_acceptance']:.4f})")


def cmd_sg_moments(args):
    p = _sg_params(args)
    out_dir = _output_dir(args)
    first, second = moment(p, 1.0), moment(p, 2.0)
    payload = {
        "params": {"a": p.a, "b": p.b, "m": p.m},
        "mean": first,
        "second_moment": second,
        "variance": second - first**2 if math.isfinite(second) else math.inf,
        "mean_finite": math.isfinite(first),
        "second_moment_finite": math.isfinite(second),
        "mean_regime": moment_regime(p, 1.0),
        "second_moment_regime": moment_regime(p, 2.0),
    }
    io.write_json(out_dir / "sg_moments.json", payload)
    _write_manifest(args, out_dir)
    print(f"✓ Moments of {p}: E(alpha) = {first!r}, E(alpha^2) = {second!r}")


def cmd_sg_elicit(args):
    prior = prior_elicit(args.ek, args.b, args.n)
    print(prior)


# ---------------------------------------------------------------------------
# partition
# ---------------------------------------------------------------------------

def cmd_partition_kn_pmf(args):
    n = args.n
    table = _table_for(n)
    if args.dp:
        if args.alpha is None:
            raise ParameterError("--dp needs --alpha")
        pmf, label = kn_pmf_dp(args.alpha, n, table), f"DP({args.alpha!r})"
    elif args.gamma is not None:
        shape, rate = args.gamma
        pmf, label = kn_pmf_gamma(shape, rate, n, table), f"DP with Ga({shape!r}, {rate!r}) precision"
    else:
        p = _sg_params(args)
        pmf, label = kn_pmf_sgp(p, n, table), str(p)
    out_dir = _output_dir(args)
    path = out_dir / "kn_pmf.csv"
    io.write_pmf_csv(path, pmf)
    io.write_json(out_dir / "kn_pmf_summary.json",
                  {"model": label, "n": n, "mean": pmf.mean(), "variance": pmf.variance(), "mode": pmf.mode()})
    _write_manifest(args, out_dir)
    print(f"✓ pmf of K_{n} under {label} written to {path}")
    print(f"  mean {pmf.mean():.10g}, variance {pmf.variance():.10g}, mode {pmf.mode()}")


def cmd_partition_sample(args):
    if args.count < 1:
        raise ParameterError(f"--count must be positive, got {args.count}")
    rng = np.random.default_rng(args.seed)
    if args.alpha is not None:
        partitions = [sample_partition_crp(args.alpha, args.n, rng) for _ in range(args.count)]
    else:
        p = _sg_params(args)
        partitions = [sample_partition_sgp(p, args.n, rng) for _ in range(args.count)]
    out_dir = _output_dir(args)
    path = out_dir / "partitions.csv"
    io.write_partitions(path, partitions)
    _write_manifest(args, out_dir)
    counts = np.array([part.k for part in partitions])
    print(f"✓ {len(partitions)} partitions of {args.n} units written to {path}")
    print(f"  mean number of clusters: {counts.mean():.4f}")


def cmd_partition_limits(args):
    p = _sg_params(args)
    out_dir = _output_dir(args)
    comparison = limit_comparison(p, args.lam, _table_for(p.m))
    reference = None
    if args.reference_m is not None and args.reference_m != p.m:
        reference_params = StirlingGammaParams(p.a, p.b, args.reference_m)
        reference = limit_comparison(reference_params, args.lam, _table_for(args.reference_m))
    path = out_dir / "kn_limits.csv"
    io.write_pmf_csv(path, comparison.sgp, columns={
        "negbin_limit": comparison.negbin,
        "dp_probability": comparison.dp.probabilities,
        "poisson_limit": comparison.poisson,
    })
    summary = {"m": p.m, "lam": args.lam, "tv_negbin": comparison.tv_negbin, "tv_poisson": comparison.tv_poisson}
    if reference is not None:
        summary.update({"reference_m": reference.m, "reference_tv_negbin": reference.tv_negbin,
                        "reference_tv_poisson": reference.tv_poisson})
    io.write_json(out_dir / "kn_limits_summary.json", summary)
    _write_manifest(args, out_dir)
    print(f"✓ Limit comparison for {p} written to {path}")
    print(f"  TV(K_m, 1 + NegBin) = {comparison.tv_negbin:.6g}; TV(K_m, 1 + Poisson) = {comparison.tv_poisson:.6g}")
    if reference is not None:
        print(f"  at m = {reference.m}: {reference.tv_negbin:.6g} and {reference.tv_poisson:.6g}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate_mixture(args):
    out_dir = _output_dir(args)
    data, labels = simulate_four_component_data(args.n, np.random.default_rng(args.seed), return_labels=True)
    io.write_mixture_data(out_dir / "mixture_data.csv", data)
    io.write_partition_line(out_dir / "mixture_truth.csv", Partition.from_labels(labels))
    _write_manifest(args, out_dir)
    print(f"✓ {args.n} points from the four-component mixture written to {out_dir / 'mixture_data.csv'}")


def cmd_simulate_networks(args):
    out_dir = _output_dir(args)
    data, truth = simulate_networks(args.n, np.random.default_rng(args.seed))
    for s in range(data.networks):
        io.write_matrix_csv(out_dir / f"network_{s + 1}.csv", data[s])
    io.write_partition_line(out_dir / "network_truth.csv", truth)
    _write_manifest(args, out_dir)
    print(f"✓ {data.networks} networks over {data.n} nodes written to {out_dir}")
    print(f"  planted clusters: {truth.k}, sizes {truth.sizes.tolist()}")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit_mixture(args):
    data = io.read_mixture_data(args.data)
    prior = PrecisionPrior.parse(args.prior)
    if prior.kind not in ("fixed", "sg"):
        raise ParameterError(f"fit-mixture takes fixed:<alpha> or sg:<a>,<b>[,<m>], got {args.prior!r}")
    niw = NiwParams.default(data.shape[1], kappa0=args.kappa0, nu0=args.nu0)
    out_dir = _output_dir(args)
    _write_manifest(args, out_dir)

    _banner(f"Fitting DP mixture to {data.shape[0]} points with prior {prior.describe()}")
    traces = run_chains(data, niw, prior, args.iterations, args.burn_in, args.chains, args.seed,
                        thin=args.thin, keep_partitions=args.save_partitions, log_every=args.log_every)
    for c, trace in enumerate(traces, start=1):
        io.write_trace_csv(out_dir / f"trace_chain{c}.csv",
                           {"iteration": trace.iterations, "k": trace.k, "alpha": trace.alpha})
        io.write_matrix_csv(out_dir / f"coclustering_chain{c}.csv", trace.co_clustering)
        if trace.partitions is not None:
            io.write_matrix_csv(out_dir / f"partitions_chain{c}.csv", trace.partitions)
        print(f"✓ Chain {c}: posterior mode of K_n = {trace.k_mode()}")

    pooled = pool_traces(traces)
    io.write_pmf_csv(out_dir / "k_posterior.csv", pooled.k_pmf())
    io.write_matrix_csv(out_dir / "coclustering.csv", pooled.co_clustering)
    summary = {
        "prior": pooled.prior,
        "chains": len(traces),
        "draws": int(pooled.k.size),
        "k_mode": pooled.k_mode(),
        "k_mean": float(pooled.k.mean()),
        "alpha_mean": float(pooled.alpha.mean()),
        "alpha_ess": [trace.alpha_ess(args.ess_method) for trace in traces],
    }
    io.write_json(out_dir / "summary.json", summary)
    _banner(f"✓ Posterior mode of K_n: {summary['k_mode']} (mean {summary['k_mean']:.3f})")


def cmd_fit_sbm(args):
    matrices = [io.read_network(path, args.format, args.nodes) for path in args.networks]
    data = NetworkData.from_matrices(matrices)
    prior = PrecisionPrior.parse(args.prior)
    truth = io.read_partition_line(args.truth) if args.truth else None
    if truth is not None and truth.n != data.n:
        raise ParameterError(f"reference partition covers {truth.n} nodes, networks have {data.n}")
    out_dir = _output_dir(args)
    _write_manifest(args, out_dir)

    _banner(f"Fitting SBM to {data.networks} networks over {data.n} nodes with prior {prior.describe()}")
    traces = run_multinetwork_chains(data, prior, args.iterations, args.burn_in, args.chains, args.seed,
                                     truth=truth, thin=args.thin, init=args.init, log_every=args.log_every)
    for c, trace in enumerate(traces, start=1):
        columns = {"iteration": trace.iterations}
        columns.update({f"k_{s + 1}": trace.k[:, s] for s in range(data.networks)})
        columns.update({f"alpha_{s + 1}": trace.alpha[:, s] for s in range(data.networks)})
        if trace.ari is not None:
            columns.update({f"ari_{s + 1}": trace.ari[:, s] for s in range(data.networks)})
        io.write_trace_csv(out_dir / f"trace_chain{c}.csv", columns)
        for s in range(data.networks):
            io.write_matrix_csv(out_dir / f"coclustering_chain{c}_network{s + 1}.csv", trace.co_clustering[s])
        print(f"✓ Chain {c}: posterior modes of K_n = {trace.k_modes().tolist()}")

    pooled = pool_sbm_traces(traces)
    histograms = pooled.k_histograms()
    columns = {"k": np.arange(1, data.n + 1)}
    columns.update({f"network_{s + 1}": histograms[s] for s in range(data.networks)})
    io.write_trace_csv(out_dir / "k_histograms.csv", columns)
    summary = pooled.summary()
    summary["chains"] = len(traces)
    summary["alpha_ess"] = pooled.alpha_ess(args.ess_method).tolist()
    summary["alpha_ess_by_chain"] = [trace.alpha_ess(args.ess_method).tolist() for trace in traces]
    if prior.kind == "fixed":
        summary["expected_clusters_at_fixed_alpha"] = dp_expected_clusters(prior.alpha, data.n)
    io.write_json(out_dir / "summary.json", summary)
    message = f"✓ Posterior modes of K_n: {summary['k_mode']}"
    if summary["overall_mean_ari"] is not None:
        message += f"; mean ARI {summary['overall_mean_ari']:.3f}"
    _banner(message)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_sg_arguments(parser, required=True):
    parser.add_argument("--a", type=float, required=required, help="shape a")
    parser.add_argument("--b", type=float, required=required, help="precision b")
    parser.add_argument("--m", type=int, required=required, help="reference sample size m")


def build_parser():
    common = _ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=None,
                        help="output directory (default: STIRLINGDP_OUTPUT_DIR or 'results')")
    common.add_argument("--config", default=None, help="JSON file of argument defaults (e.g. a manifest)")
    seeded = _ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=DEFAULT_SEED, help="base random seed")

    parser = _ArgumentParser(prog="stirlingdp", description="Stirling-gamma priors for Dirichlet-process models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    # leaf parsers, so --config defaults can be applied before parsing
    parser.leaves = []

    def add(group, name, handler, parents, help_text):
        sub = group.add_parser(name, parents=parents, help=help_text)
        sub.set_defaults(handler=handler, parser=sub)
        parser.leaves.append(sub)
        return sub

    sg = commands.add_parser("sg", help="the Stirling-gamma distribution").add_subparsers(dest="action", required=True)
    sub = add(sg, "pdf", cmd_sg_pdf, [common], "tabulate the density")
    _add_sg_arguments(sub)
    sub.add_argument("--points", type=int, default=2001)
    sub.add_argument("--lower", type=float, default=None)
    sub.add_argument("--upper", type=float, default=None)
    sub = add(sg, "sample", cmd_sg_sample, [common, seeded], "exact draws and acceptance rate")
    _add_sg_arguments(sub)
    sub.add_argument("--count", type=int, default=100_000)
    sub = add(sg, "moments", cmd_sg_moments, [common], "first and second moments")
    _add_sg_arguments(sub)
    sub = add(sg, "elicit", cmd_sg_elicit, [], "prior with a given expected number of clusters")
    sub.add_argument("--ek", type=float, required=True, help="expected number of clusters at n")
    sub.add_argument("--b", type=float, required=True, help="precision b")
    sub.add_argument("--n", type=int, required=True, help="reference sample size")

    partition = commands.add_parser("partition", help="random partitions").add_subparsers(dest="action", required=True)
    sub = add(partition, "kn-pmf", cmd_partition_kn_pmf, [common], "exact pmf of the number of clusters")
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--dp", action="store_true", help="Dirichlet process with fixed --alpha")
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--gamma", type=float, nargs=2, metavar=("SHAPE", "RATE"), default=None,
                     help="Dirichlet process with a gamma precision prior")
    _add_sg_arguments(sub, required=False)
    sub = add(partition, "sample", cmd_partition_sample, [common, seeded], "draw partitions")
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--count", type=int, default=1)
    sub.add_argument("--alpha", type=float, default=None, help="fixed DP precision (else --a --b --m)")
    _add_sg_arguments(sub, required=False)
    sub = add(partition, "limits", cmd_partition_limits, [common], "distances to the large-m limits")
    _add_sg_arguments(sub)
    sub.add_argument("--lam", type=float, default=3.0, help="Poisson limit parameter")
    sub.add_argument("--reference-m", type=int, default=100)

    simulate = commands.add_parser("simulate", help="synthetic data").add_subparsers(dest="action", required=True)
    sub = add(simulate, "mixture", cmd_simulate_mixture, [common, seeded], "four-component bivariate mixture")
    sub.add_argument("--n", type=int, default=800)
    sub = add(simulate, "networks", cmd_simulate_networks, [common, seeded], "six networks with planted blocks")
    sub.add_argument("--n", type=int, default=100)

    sub = add(commands, "fit-mixture", cmd_fit_mixture, [common, seeded], "DP mixture Gibbs sampler")
    sub.add_argument("--data", required=True, help="headerless CSV of observations")
    sub.add_argument("--prior", default="sg:0.73,0.1", help="fixed:<alpha> or sg:<a>,<b>[,<m>]")
    sub.add_argument("--iterations", type=int, default=20_000)
    sub.add_argument("--burn-in", type=int, default=5_000)
    sub.add_argument("--thin", type=int, default=1)
    sub.add_argument("--chains", type=int, default=1)
    sub.add_argument("--kappa0", type=float, default=0.01)
    sub.add_argument("--nu0", type=float, default=None, help="default: dimension + 2")
    sub.add_argument("--save-partitions", action="store_true")
    sub.add_argument("--log-every", type=int, default=1000)
    sub.add_argument("--ess-method", choices=("monotone", "positive"), default="monotone",
                     help="truncation rule of the autocorrelation sum")

    sub = add(commands, "fit-sbm", cmd_fit_sbm, [common, seeded], "multi-network SBM Gibbs sampler")
    sub.add_argument("--networks", nargs="+", required=True, help="one adjacency or edge-list file per network")
    sub.add_argument("--format", choices=("auto", "dense", "edges"), default="auto")
    sub.add_argument("--nodes", type=int, default=None, help="node count for edge lists")
    sub.add_argument("--prior", default="pooled:6,0.3",
                     help="fixed:<alpha>, independent:<a>,<b>[,<m>] or pooled:<a>,<b>[,<m>]")
    sub.add_argument("--truth", default=None, help="reference partition file for ARI traces")
    sub.add_argument("--iterations", type=int, default=10_000)
    sub.add_argument("--burn-in", type=int, default=2_000)
    sub.add_argument("--thin", type=int, default=1)
    sub.add_argument("--chains", type=int, default=1)
    sub.add_argument("--init", choices=("singletons", "single"), default="singletons")
    sub.add_argument("--log-every", type=int, default=1000)
    sub.add_argument("--ess-method", choices=("monotone", "positive"), default="monotone",
                     help="truncation rule of the autocorrelation sum")
    return parser


def _apply_config(parser, path):
    config = io.read_json(path)
    config = config.get("arguments", config)
    defaults = {str(key).replace("-", "_"): value for key, value in config.items()}
    skipped = _INTERNAL_KEYS + _SELECTOR_KEYS
    known = {action.dest for leaf in parser.leaves for action in leaf._actions}
    unknown = sorted(set(defaults) - known - set(skipped))
    if unknown:
        raise ParameterError(f"unknown keys in {path}: {', '.join(unknown)}")
    for leaf in parser.leaves:
        applied = {}
        for action in leaf._actions:
            if action.dest in defaults and action.dest not in skipped:
                # a value from the config satisfies a required flag
                action.required = False
                applied[action.dest] = defaults[action.dest]
        leaf.set_defaults(**applied)


def parse_args(argv=None):
    """
    Parse the command line, applying --config values as defaults

    Explicit flags take precedence over the config file.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    pre = _ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        _apply_config(parser, known.config)
    return parser.parse_args(argv)


def main(argv=None):
    """Entry point; returns the process exit code"""
    logging.basicConfig(level=get_settings().log_level.upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        args.handler(args)
    except (StirlingDPError, OSError) as e:
        print("=" * 60, file=sys.stderr)
        print(f"✗ Error occurred: {e}", file=sys.stderr)
        print("=" * 60, file=sys.stderr)
        return exit_code_for(e)
    return 0


if __name__ == "__main__":
    sys.exit(main())
