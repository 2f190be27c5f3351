import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsbeam import (
    OneRingGeometry,
    SpatialCovariance,
    build_one_ring_covariance,
    kl_factorize,
    lmmse_error_covariance,
    sample_channel,
    sample_csit,
)
from rsbeam.channel import KlFactor, circular_radius_factor

TRAPEZOID = getattr(np, "trapezoid", None) or np.trapz


def test_radius_factor_matches_definition():
    for n in [2, 3, 4, 8, 16]:
        step = 2 * np.pi / n
        expected = 0.5 / np.sqrt((1 - np.cos(step)) ** 2 + np.sin(step) ** 2)
        assert circular_radius_factor(n) == pytest.approx(expected, abs=0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        OneRingGeometry(0, 0.0, 0.1)
    with pytest.raises(ValueError):
        OneRingGeometry(4, 0.0, 0.0)
    with pytest.raises(ValueError):
        OneRingGeometry(4, 0.0, 4.0)  # spread > pi


def test_covariance_rejects_bad_quadrature():
    geom = OneRingGeometry(4, 0.3, np.pi / 6)
    with pytest.raises(ValueError):
        build_one_ring_covariance(geom, quad_points=7)
    with pytest.raises(ValueError):
        build_one_ring_covariance(geom, quad_points=4)


def test_unit_diagonal_any_geometry():
    for n, aoa, spread in [(1, 0.0, 0.2), (4, 1.1, np.pi / 6), (8, 5.0, np.pi)]:
        r = build_one_ring_covariance(OneRingGeometry(n, aoa, spread)).matrix
        assert np.allclose(np.diag(r), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    aoa=st.floats(0.0, 2 * np.pi),
    spread=st.floats(0.02, np.pi),
    n=st.integers(2, 6),
)
def test_covariance_invariants(aoa, spread, n):
    r = build_one_ring_covariance(OneRingGeometry(n, aoa, spread)).matrix
    assert np.linalg.norm(r - r.conj().T, ord=np.inf) <= 1e-12
    eigs = np.linalg.eigvalsh(r)
    assert eigs.min() >= -1e-10 * max(eigs.max(), 1.0)
    assert np.allclose(np.diag(r).real, 1.0, atol=1e-6)


def test_point_source_limit_is_rank_one():
    n = 4
    geom = OneRingGeometry(n, 0.9, 1e-9)
    r = build_one_ring_covariance(geom).matrix
    eigs = np.sort(np.linalg.eigvalsh(r))
    assert eigs[-1] == pytest.approx(n, rel=1e-6)
    assert eigs[-2] < 1e-6
    # leading eigenvector matches the steering direction up to a phase
    pos = geom.antenna_positions()
    steer = np.exp(
        -1j * 2 * np.pi * (np.cos(0.9) * pos[:, 0] + np.sin(0.9) * pos[:, 1])
    )
    steer /= np.linalg.norm(steer)
    _, vecs = np.linalg.eigh(r)
    lead = vecs[:, -1]
    assert abs(np.vdot(steer, lead)) == pytest.approx(1.0, abs=1e-6)


def test_entry_against_high_resolution_trapezoid():
    geom = OneRingGeometry(4, np.pi / 3, np.pi / 6)
    r = build_one_ring_covariance(geom, quad_points=200).matrix
    pos = geom.antenna_positions()
    diff = pos[0] - pos[1]
    x = np.linspace(geom.aoa - geom.angular_spread, geom.aoa + geom.angular_spread, 100_000)
    integrand = np.exp(-1j * 2 * np.pi * (np.cos(x) * diff[0] + np.sin(x) * diff[1]))
    expected = TRAPEZOID(integrand, x) / (2 * geom.angular_spread)
    assert abs(r[0, 1] - expected) <= 1e-8


def test_quadrature_refinement_is_converged():
    for n in [4, 6, 16]:
        for aoa, spread in [(0.2, np.pi / 6), (2.5, np.pi / 2)]:
            geom = OneRingGeometry(n, aoa, spread)
            coarse = build_one_ring_covariance(geom, 200).matrix
            fine = build_one_ring_covariance(geom, 400).matrix
            assert np.abs(coarse - fine).max() <= 1e-8


def test_kl_identity_spectrum():
    kl = kl_factorize(SpatialCovariance(np.eye(5, dtype=complex)))
    assert kl.rank == 5
    assert np.allclose(kl.eigenvalues, 1.0)


def test_kl_rank_one():
    v = np.array([2.0, 0.0, 0.0], dtype=complex)
    kl = kl_factorize(SpatialCovariance(np.outer(v, v.conj())))
    assert kl.rank == 1
    assert kl.eigenvalues[0] == pytest.approx(4.0)


def test_kl_reconstruction(rng):
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    r = a @ a.conj().T
    kl = kl_factorize(SpatialCovariance(r))
    rec = (kl.eigenvectors * kl.eigenvalues) @ kl.eigenvectors.conj().T
    assert np.linalg.norm(rec - r) <= 1e-10 * np.linalg.norm(r)
    gram = kl.eigenvectors.conj().T @ kl.eigenvectors
    assert np.linalg.norm(gram - np.eye(kl.rank)) <= 1e-10


def test_kl_rejects_nonfinite():
    bad = np.eye(3, dtype=complex)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        kl_factorize(SpatialCovariance(bad))


def test_sample_channel_zero_covariance(rng):
    kl = kl_factorize(SpatialCovariance(np.zeros((4, 4), dtype=complex)))
    assert np.all(sample_channel(kl, rng) == 0)


def test_sample_channel_deterministic():
    cov = build_one_ring_covariance(OneRingGeometry(4, 1.0, np.pi / 6))
    kl = kl_factorize(cov)
    h1 = sample_channel(kl, np.random.default_rng(99))
    h2 = sample_channel(kl, np.random.default_rng(99))
    assert np.array_equal(h1, h2)


def test_sample_channel_moments():
    cov = build_one_ring_covariance(OneRingGeometry(4, 1.0, np.pi / 6))
    kl = kl_factorize(cov)
    rng = np.random.default_rng(5)
    n_draws = 50_000
    draws = np.stack([sample_channel(kl, rng) for _ in range(n_draws)])
    emp = draws.conj().T @ draws / n_draws  # E[h h^H] transposed indexing
    emp = emp.T
    r = cov.matrix
    # standard error of entry (i, j) of the empirical cross moment
    se = np.sqrt(np.outer(np.diag(r).real, np.diag(r).real) / n_draws)
    assert np.all(np.abs(emp - r) <= 5 * se)


def test_lmmse_perfect_training_limit():
    cov = build_one_ring_covariance(OneRingGeometry(4, 0.7, np.pi / 6))
    phi = lmmse_error_covariance(cov, 1e12, 1.0)
    assert np.linalg.norm(phi) < 1e-9 * np.linalg.norm(cov.matrix)


def test_lmmse_scalar_case():
    phi = lmmse_error_covariance(SpatialCovariance(np.eye(3, dtype=complex)), 1.0, 1.0)
    assert np.allclose(phi, 0.5 * np.eye(3), atol=1e-12)


def test_lmmse_rank_containment(rng):
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    r = np.outer(v, v.conj())
    phi = lmmse_error_covariance(SpatialCovariance(r), 3.0, 1.0)
    eigs = np.sort(np.linalg.eigvalsh(phi))[::-1]
    assert np.all(eigs[1:] <= 1e-10 * max(eigs[0], 1.0))


def test_lmmse_psd_ordering():
    for taup in [0.1, 1.0, 4.0, 100.0]:
        cov = build_one_ring_covariance(OneRingGeometry(5, 2.2, np.pi / 4))
        phi = lmmse_error_covariance(cov, taup, 1.0)
        lam_max = np.linalg.eigvalsh(cov.matrix).max()
        assert np.linalg.eigvalsh(phi).min() >= -1e-10 * lam_max
        assert np.linalg.eigvalsh(cov.matrix - phi).min() >= -1e-10 * lam_max


def test_lmmse_rejects_bad_budget():
    cov = SpatialCovariance(np.eye(2, dtype=complex))
    with pytest.raises(ValueError):
        lmmse_error_covariance(cov, 0.0, 1.0)
    with pytest.raises(ValueError):
        lmmse_error_covariance(cov, -1.0, 1.0)


def test_csit_perfect_when_phi_zero(rng):
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    state = sample_csit(h, np.zeros((4, 4)), rng)
    assert np.allclose(state.h_hat, h, atol=0)


def test_csit_deterministic():
    h = np.ones(3, dtype=complex)
    phi = 0.3 * np.eye(3)
    s1 = sample_csit(h, phi, np.random.default_rng(11))
    s2 = sample_csit(h, phi, np.random.default_rng(11))
    assert np.array_equal(s1.h_hat, s2.h_hat)


def test_csit_error_moments():
    cov = build_one_ring_covariance(OneRingGeometry(4, 1.3, np.pi / 6))
    phi = lmmse_error_covariance(cov, 4.0, 1.0)
    h = np.zeros(4, dtype=complex)
    rng = np.random.default_rng(17)
    n_draws = 50_000
    errors = np.stack([h - sample_csit(h, phi, rng).h_hat for _ in range(n_draws)])
    emp = (errors.conj().T @ errors / n_draws).T
    diag = np.clip(np.diag(phi).real, 1e-12, None)
    se = np.sqrt(np.outer(diag, diag) / n_draws)
    assert np.all(np.abs(emp - phi) <= 5 * se)


def test_csit_residual_decomposition(rng):
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    phi = 0.2 * np.eye(4)
    state = sample_csit(h, phi, rng)
    err = state.h - state.h_hat
    assert np.allclose(state.h_hat + err, h, atol=1e-15)


def test_manual_klfactor_zero_eigenvalues(rng):
    kl = KlFactor(eigenvectors=np.eye(3, dtype=complex), eigenvalues=np.zeros(3))
    assert np.all(sample_channel(kl, rng) == 0)
