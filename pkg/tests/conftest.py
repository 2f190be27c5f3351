import numpy as np
import pytest

from rsbeam import (
    MessageSet,
    OneRingGeometry,
    PrecodingProblem,
    build_one_ring_covariance,
    kl_factorize,
    lmmse_error_covariance,
    sample_channel,
    sample_csit,
)


def make_states(rng, num_antennas, num_users, tau_p=4.0, sigma2=1.0,
                aoas=None, spread=np.pi / 6):
    """Channel states drawn from the one-ring model."""
    states = []
    for k in range(num_users):
        aoa = aoas[k] if aoas is not None else rng.uniform(0, 2 * np.pi)
        cov = build_one_ring_covariance(OneRingGeometry(num_antennas, aoa, spread))
        h = sample_channel(kl_factorize(cov), rng)
        phi = lmmse_error_covariance(cov, tau_p, sigma2)
        states.append(sample_csit(h, phi, rng, cov=cov))
    return tuple(states)


def make_problem(rng, num_antennas, num_users, groups=(), snr_db=10.0,
                 tau_p=4.0, **kwargs):
    states = make_states(rng, num_antennas, num_users, tau_p=tau_p, **kwargs)
    msgset = MessageSet(num_users, tuple(frozenset(g) for g in groups))
    return PrecodingProblem(states, msgset, 10.0 ** (-snr_db / 10.0))


def random_unit_stack(rng, dim):
    f = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return f / np.linalg.norm(f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240)
