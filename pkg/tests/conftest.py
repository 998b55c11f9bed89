"""
Pytest configuration and shared fixtures for stirlingdp tests
"""
import pytest
import sys
import os

import numpy as np

# Add parent directory to path so we can import stirlingdp
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dotenv import load_dotenv

load_dotenv()

# Seed for every generator handed out by the fixtures below
TEST_SEED = int(os.getenv('STIRLINGDP_TEST_SEED', '12345'))


@pytest.fixture
def rng():
    """Fixture that provides a seeded numpy Generator"""
    return np.random.default_rng(TEST_SEED)


@pytest.fixture
def sg_params():
    """Fixture providing Sg(5, 1, 100), a prior with a - b >= 1 (ratio-of-uniforms regime)"""
    from stirlingdp.stirling_gamma import StirlingGammaParams
    return StirlingGammaParams(5, 1, 100)


@pytest.fixture
def sg_params_small_shape():
    """Fixture providing Sg(0.6, 0.2, 149), a prior with a - b < 1 (beta prime regime)"""
    from stirlingdp.stirling_gamma import StirlingGammaParams
    return StirlingGammaParams(0.6, 0.2, 149)


@pytest.fixture
def small_partition():
    """Fixture providing the partition {1, 2, 4}, {3}, {5} of five units"""
    from stirlingdp.random_partition import Partition
    return Partition([1, 1, 2, 1, 3])


@pytest.fixture
def niw_2d():
    """Fixture providing the default bivariate normal-inverse-Wishart baseline"""
    from stirlingdp.dpm_mixture import NiwParams
    return NiwParams.default(2)


@pytest.fixture
def two_block_network():
    """Fixture providing a planted two-block network on 30 nodes and its true partition"""
    from stirlingdp.random_partition import Partition
    from stirlingdp.sbm import NetworkData

    rng = np.random.default_rng(TEST_SEED + 1)
    labels = np.repeat([0, 1], 15)
    same = labels[:, None] == labels[None, :]
    draws = (rng.random((30, 30)) < np.where(same, 0.9, 0.05)) & np.triu(np.ones((30, 30), dtype=bool), k=1)
    adjacency = (draws | draws.T).astype(np.int8)
    return NetworkData(adjacency), Partition.from_labels(labels)


@pytest.fixture
def clean_settings(monkeypatch):
    """Fixture that clears STIRLINGDP_* variables and the cached settings"""
    from stirlingdp.settings import reload_settings

    for key in list(os.environ):
        if key.startswith('STIRLINGDP_') and key != 'STIRLINGDP_TEST_SEED':
            monkeypatch.delenv(key, raising=False)
    yield reload_settings()
    monkeypatch.undo()
    reload_settings()
