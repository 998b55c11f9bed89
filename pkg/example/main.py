import os

import numpy as np
from dotenv import load_dotenv

from stirlingdp.conjugacy import PartitionObservations, posterior_pooled, prior_elicit
from stirlingdp.dpm_mixture import NiwParams, PrecisionPrior, run_chain, simulate_four_component_data
from stirlingdp.random_partition import kn_pmf_dp, kn_pmf_sgp
from stirlingdp.stirling_gamma import expected_acceptance, sample, sampler_name

load_dotenv()


# Configuration
SEED = int(os.getenv('EXAMPLE_SEED', '20240101'))
N = int(os.getenv('EXAMPLE_N', '200'))  # Number of observations
EXPECTED_CLUSTERS = float(os.getenv('EXAMPLE_EXPECTED_CLUSTERS', '4'))  # Prior guess for E(K_n)
PRIOR_PRECISION = float(os.getenv('EXAMPLE_PRIOR_PRECISION', '0.2'))  # b: confidence in that guess
ITERATIONS = int(os.getenv('EXAMPLE_ITERATIONS', '2000'))
BURN_IN = int(os.getenv('EXAMPLE_BURN_IN', '500'))


try:
    rng = np.random.default_rng(SEED)

    # Elicit a prior on the DP precision from the expected number of clusters
    print("=" * 60)
    print("Eliciting a Stirling-gamma prior...")
    print("=" * 60)
    prior = prior_elicit(EXPECTED_CLUSTERS, PRIOR_PRECISION, N)
    print(f"✓ Prior: {prior} ({sampler_name(prior)} sampler, acceptance {expected_acceptance(prior):.3f})")

    # Compare the implied distribution of K_n with a DP at the prior's location
    sgp = kn_pmf_sgp(prior, N)
    dp = kn_pmf_dp(float(np.median(sample(prior, rng, size=2000))), N)
    print(f"  E(K_n) = {sgp.mean():.3f} with variance {sgp.variance():.3f}")
    print(f"  DP at the median precision: E(K_n) = {dp.mean():.3f} with variance {dp.variance():.3f}")

    # Fit a DP mixture to simulated four-component data
    print("\n" + "=" * 60)
    print("Running the DP mixture Gibbs sampler...")
    print("=" * 60)
    data = simulate_four_component_data(N, rng)
    trace = run_chain(data, NiwParams.default(2), PrecisionPrior.stirling_gamma(prior), ITERATIONS, BURN_IN, rng,
                      keep_partitions=False)
    print(f"✓ Posterior mode of K_n: {trace.k_mode()}; mean precision {trace.alpha.mean():.3f}")

    # Conjugate update from the sampled cluster counts
    print("\n" + "=" * 60)
    print("Conjugate update of the precision...")
    print("=" * 60)
    observations = PartitionObservations(N, (trace.k_mode(),))
    print(f"✓ Posterior given K_n = {trace.k_mode()}: {posterior_pooled(prior, observations)}")

    print("\n" + "=" * 60)
    print("✓ Process completed successfully!")
    print("=" * 60)

except Exception as e:
    print("\n" + "=" * 60)
    print(f"✗ Error occurred: {str(e)}")
    print("=" * 60)
    raise
