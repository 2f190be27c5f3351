import numpy as np
import pytest

from rsbeam import objective_J, solve
from rsbeam.oracles import (
    batched_objective,
    dense_fixed_point_check,
    dense_gpi_update,
    dense_lambda_log2,
    fd_gradient,
    project_tangent,
    random_search,
)
from rsbeam.solver import SolverConfig, gpi_step, lambda_log2

from conftest import make_problem, random_unit_stack


def test_fd_gradient_on_quadratic():
    # J(f) = sum of squared real coordinates with fixed weights, evaluated
    # without renormalization sensitivity by using a scale-invariant form
    w = np.array([1.0, 2.0, 3.0, 4.0])  # one weight per real coordinate

    def objective(v):
        x = np.concatenate([v.real, v.imag])
        return float(x @ (w * x))

    v0 = np.array([0.6, 0.8j], dtype=complex)
    grad = fd_gradient(objective, v0, step=1e-6)
    # analytic gradient of the renormalized composite at a unit point:
    # project the unconstrained gradient onto the sphere tangent
    x0 = np.concatenate([v0.real, v0.imag])
    raw = 2 * w * x0
    expected = raw - (raw @ x0) * x0
    got = project_tangent(grad, v0)
    assert np.linalg.norm(got - project_tangent(expected, v0)) <= 1e-6


def test_fd_gradient_second_order_convergence(rng):
    problem = make_problem(rng, 3, 2)
    fbar = random_unit_stack(rng, problem.layout.dim)

    def objective(v):
        return objective_J(v, problem, 0.4)

    tiny = fd_gradient(objective, fbar, step=1e-7)
    err_big = np.linalg.norm(fd_gradient(objective, fbar, step=4e-4) - tiny)
    err_small = np.linalg.norm(fd_gradient(objective, fbar, step=2e-4) - tiny)
    assert err_big / err_small == pytest.approx(4.0, rel=0.35)


def test_random_search_single_sample_is_that_sample(rng):
    problem = make_problem(rng, 2, 1)
    vec, val = random_search(
        problem, samples=1, polish_steps=0, alpha=0.3,
        rng=np.random.default_rng(4),
    )
    raw = np.random.default_rng(4)
    draw = raw.standard_normal((1, 4)) + 1j * raw.standard_normal((1, 4))
    draw /= np.linalg.norm(draw)
    assert np.allclose(vec, draw[0], atol=1e-12)
    assert val == pytest.approx(
        float(batched_objective(problem, draw, 0.3)[0]), abs=1e-12
    )


def test_random_search_monotone_in_samples(rng):
    problem = make_problem(rng, 2, 2)
    vals = []
    for samples in (10, 100, 1000):
        _, val = random_search(
            problem, samples=samples, polish_steps=0, alpha=0.3,
            rng=np.random.default_rng(11),
        )
        vals.append(val)
    assert vals[0] <= vals[1] <= vals[2]


def test_random_search_agrees_with_solver(rng):
    problem = make_problem(rng, 2, 1, tau_p=1e12)  # essentially perfect CSIT
    report = solve(problem)
    _, best = random_search(
        problem, samples=200_000, polish_steps=10,
        alpha=report.alpha_final, rng=np.random.default_rng(2),
    )
    assert report.objective_bits >= best - 1e-3


def test_batched_objective_matches_scalar(rng):
    problem = make_problem(rng, 3, 2, groups=((0, 1),))
    stacks = np.stack(
        [random_unit_stack(rng, problem.layout.dim) for _ in range(16)]
    )
    batch = batched_objective(problem, stacks, alpha=0.35)
    for i in range(16):
        assert batch[i] == pytest.approx(
            objective_J(stacks[i], problem, 0.35), abs=1e-12
        )


@pytest.mark.parametrize("groups", [(), ((0,),), ((0, 1),)])
def test_dense_and_block_paths_agree_everywhere(rng, groups):
    problem = make_problem(rng, 3, 2, groups=groups)
    for _ in range(10):
        fbar = random_unit_stack(rng, problem.layout.dim)
        alpha = float(rng.random() + 0.1)
        assert dense_lambda_log2(fbar, problem, alpha) == pytest.approx(
            lambda_log2(fbar, problem, alpha), abs=1e-10
        )
        dense_next = dense_gpi_update(fbar, problem, alpha)
        block_next = gpi_step(fbar, problem, alpha)
        assert np.linalg.norm(dense_next - block_next) <= 1e-10


def test_dense_fixed_point_at_convergence(rng):
    config = SolverConfig()
    problem = make_problem(rng, 3, 2, snr_db=10.0)
    report = solve(problem, config)
    assert report.converged
    residual = dense_fixed_point_check(
        report.fbar_star.fbar, problem, report.alpha_final
    )
    assert residual <= 10 * config.epsilon


def test_dense_fixed_point_negative_control(rng):
    # a random point is typically far from stationary (sanity check)
    problem = make_problem(rng, 3, 2)
    fbar = random_unit_stack(rng, problem.layout.dim)
    assert dense_fixed_point_check(fbar, problem, 0.5) > SolverConfig().epsilon
