import numpy as np
import pytest

from poislsm import SimConfig, simulate_dataset


@pytest.fixture(scope="session")
def small_sim():
    """One moderate simulated instance shared by read-only tests."""
    return simulate_dataset(SimConfig(n=40, T=6, k=2, alpha_case="uniform", seed=314))


def random_instance(seed, n=6, T=3, k=2, scale=0.6):
    """Generic bounded instance: centered Z, moderate negative baselines."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, k)) * scale
    Z -= Z.mean(axis=0)
    alpha = rng.uniform(-1.5, -0.3, size=(n, T))
    return Z, alpha


def zero_residual_counts(Z, alpha):
    """Fractional 'counts' equal to the intensities, so all residuals vanish."""
    from poislsm import natural_params

    return np.exp(natural_params(Z, alpha))
