import numpy as np
import pytest

from rsbeam import (
    MessageSet,
    PrecodingProblem,
    UserChannelState,
    exact_breakdown,
    mrt_precoders,
    rzf_precoders,
    sdma_gpi_solve,
)
from rsbeam.baselines import embed_private_stack
from rsbeam.oracles import fd_gradient, project_tangent
from rsbeam.rates import private_only_rates
from rsbeam.solver import SolverConfig, extract_precoders

from conftest import make_problem, make_states


def perfect_states(h_list):
    out = []
    for h in h_list:
        h = np.asarray(h, dtype=complex)
        out.append(
            UserChannelState(h=h, h_hat=h, error_cov=np.zeros((len(h), len(h))))
        )
    return tuple(out)


def test_mrt_zero_common_power(rng):
    states = make_states(rng, 4, 3)
    stack = mrt_precoders(states, 0.1)
    _, fractions = extract_precoders(stack.fbar, stack.layout)
    assert fractions[0] == 0.0
    assert fractions.sum() == pytest.approx(1.0, abs=1e-12)


def test_mrt_single_user_matched_filter(rng):
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    states = perfect_states([h])
    stack = mrt_precoders(states, 0.1)
    f1 = stack.blocks[1]
    assert np.allclose(f1, h / np.linalg.norm(h), atol=1e-12)


def test_mrt_orthonormal_channels_closed_form():
    h1 = np.array([1.0, 0.0, 0.0], dtype=complex)
    h2 = np.array([0.0, 1.0, 0.0], dtype=complex)
    h3 = np.array([0.0, 0.0, 1.0], dtype=complex)
    states = perfect_states([h1, h2, h3])
    snr_inv = 0.2
    problem = PrecodingProblem(states, MessageSet(3), snr_inv)
    stack = mrt_precoders(states, snr_inv)
    bd = exact_breakdown(stack.fbar, problem)
    # orthogonal channels: no interference, each private gets power 1/K
    expected = np.log2(1 + (1.0 / 3.0) / snr_inv)
    assert bd.private_rates == pytest.approx([expected] * 3, abs=1e-12)
    assert bd.common_rate == 0.0


def test_rzf_low_snr_approaches_mrt(rng):
    states = make_states(rng, 4, 3)
    stack = rzf_precoders(states, snr_inv=1e9)
    for k, state in enumerate(states):
        f = stack.blocks[stack.layout.num_messages - 3 + k]
        cos = abs(np.vdot(f, state.h_hat)) / (
            np.linalg.norm(f) * np.linalg.norm(state.h_hat)
        )
        assert cos > 1 - 1e-8


def test_rzf_high_snr_zero_forces(rng):
    states = make_states(rng, 4, 3, tau_p=1e12)  # essentially perfect CSIT
    stack = rzf_precoders(states, snr_inv=1e-12)
    for k in range(3):
        f_k = stack.blocks[1 + k]
        for j in range(3):
            if j == k:
                continue
            h_j = states[j].h_hat
            cross = abs(np.vdot(h_j, f_k))
            assert cross <= 1e-6 * np.linalg.norm(h_j) * np.linalg.norm(f_k)


def test_rzf_matches_normal_equations(rng):
    states = make_states(rng, 5, 3)
    snr_inv = 0.3
    stack = rzf_precoders(states, snr_inv)
    h_mat = np.stack([s.h_hat for s in states], axis=1)
    gram = h_mat @ h_mat.conj().T + snr_inv * np.eye(5)
    inv = np.linalg.inv(gram)
    for k in range(3):
        expected = inv @ states[k].h_hat
        expected /= np.linalg.norm(expected) * np.sqrt(3)
        got = stack.blocks[1 + k]
        assert np.linalg.norm(got - expected) <= 1e-10


def test_sdma_single_user_matched_filter(rng):
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    states = perfect_states([h])
    problem = PrecodingProblem(states, MessageSet(1), 0.1)
    report = sdma_gpi_solve(problem)
    expected = np.log2(1 + np.linalg.norm(h) ** 2 / 0.1)
    assert report.objective_bits == pytest.approx(expected, abs=1e-6)
    assert report.fbar_star.layout.num_messages == 1


def test_sdma_stack_has_k_blocks(rng):
    problem = make_problem(rng, 4, 3)
    report = sdma_gpi_solve(problem)
    assert report.fbar_star.layout.num_messages == 3
    assert abs(np.linalg.norm(report.fbar_star.fbar) - 1.0) <= 1e-9
    assert report.rate_breakdown.common_rate == 0.0
    assert report.rate_breakdown.partial_rates == ()


def test_sdma_stationarity(rng):
    problem = make_problem(rng, 3, 2, snr_db=10.0)
    report = sdma_gpi_solve(problem, use_error_cov=True)
    k = problem.num_users

    def objective(v):
        return sum(
            private_only_rates(
                v.reshape(k, -1), problem.states, problem.snr_inv, True
            )
        )

    star = report.fbar_star.fbar
    g_star = project_tangent(fd_gradient(objective, star), star)
    h_hats = np.stack([s.h_hat for s in problem.states])
    init = (h_hats / np.linalg.norm(h_hats, axis=1, keepdims=True)).reshape(-1)
    init = init / np.linalg.norm(init)
    g_init = project_tangent(fd_gradient(objective, init), init)
    assert np.linalg.norm(g_star) <= 1e-4 * np.linalg.norm(g_init)


def test_sdma_error_cov_flag_changes_design(rng):
    problem = make_problem(rng, 4, 2, snr_db=20.0, tau_p=0.5)
    with_phi = sdma_gpi_solve(problem, use_error_cov=True)
    without_phi = sdma_gpi_solve(problem, use_error_cov=False)
    assert not np.allclose(
        with_phi.fbar_star.fbar, without_phi.fbar_star.fbar, atol=1e-6
    )


def test_embed_private_stack_round_trip(rng):
    problem = make_problem(rng, 3, 2)
    kvec = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    kvec /= np.linalg.norm(kvec)
    full = embed_private_stack(kvec, problem.msgset, 3)
    assert abs(np.linalg.norm(full.fbar) - 1.0) <= 1e-12
    assert np.all(full.blocks[0] == 0)
    assert np.allclose(full.blocks[1:], kvec.reshape(2, 3), atol=0)


def test_method_ordering_small_monte_carlo():
    # light version of the figure-level ordering property
    from rsbeam.harness import ExperimentSpec, run_trial

    spec = ExperimentSpec(
        num_antennas=6,
        num_users=4,
        snr_db_grid=(20.0,),
        tau_p=4.0,
        trials=100,
        base_seed=77,
    )
    sums = {m: [] for m in spec.methods}
    for t in range(spec.trials):
        for m in spec.methods:
            sums[m].append(run_trial(spec, t, 20.0, m).sum_se)
    means = {m: float(np.mean(v)) for m, v in sums.items()}
    assert means["gpi_rs"] >= means["sdma_gpi"] >= means["rzf"] >= means["mrt"]
