"""Independent verification machinery.

Everything here re-derives a quantity through a second route so the main
code paths can be checked against it: finite-difference gradients on the
sphere for stationarity, brute-force random search for the achievable
objective, and a dense full-matrix evaluation of the optimality condition
built directly from the per-case matrix definitions (never through the
block-stack builder)."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .messages import PrecodingProblem, as_stack_vector
from .rates import softmin
from .solver import _PackedTerms  # batched objective evaluation only
from .quotients import rsma_terms


# ---------------------------------------------------------------------------
# finite differences on the unit sphere

def fd_gradient(
    objective: Callable[[np.ndarray], float],
    fbar: np.ndarray,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scale-invariant objective over the
    2MN real coordinates (real parts then imaginary parts) of the stack.
    Every evaluation renormalizes its argument, so the objective only needs
    to be defined on the sphere."""
    fbar = as_stack_vector(fbar)
    dim = fbar.shape[0]
    x0 = np.concatenate([fbar.real, fbar.imag])

    def _eval(x: np.ndarray) -> float:
        v = x[:dim] + 1j * x[dim:]
        return objective(v / np.linalg.norm(v))

    grad = np.zeros(2 * dim)
    for i in range(2 * dim):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (_eval(xp) - _eval(xm)) / (2.0 * step)
    return grad


def project_tangent(grad: np.ndarray, fbar: np.ndarray) -> np.ndarray:
    """Remove the radial component: the sphere's tangent-space projection of
    a real-coordinate gradient at the unit-norm point ``fbar``."""
    fbar = as_stack_vector(fbar)
    radial = np.concatenate([fbar.real, fbar.imag])
    radial = radial / np.linalg.norm(radial)
    return grad - np.dot(grad, radial) * radial


# ---------------------------------------------------------------------------
# brute-force search

def batched_objective(
    problem: PrecodingProblem, stacks: np.ndarray, alpha: float
) -> np.ndarray:
    """Smoothed objective of many unit-norm stacks at once (rows of
    ``stacks``)."""
    packed = _PackedTerms(rsma_terms(problem))
    vb = stacks.reshape(stacks.shape[0], packed.num_blocks, packed.block_size)
    qa = np.einsum("bmi,pmij,bmj->bp", vb.conj(), packed.a, vb).real
    qb = np.einsum("bmi,pmij,bmj->bp", vb.conj(), packed.b, vb).real
    rates = np.log2(qa / qb)
    total = np.zeros(stacks.shape[0])
    for combine, sl in packed.groups:
        sub = rates[:, sl]
        if combine == "min":
            vmin = sub.min(axis=1, keepdims=True)
            total += vmin[:, 0] - alpha * np.log(
                np.mean(np.exp((vmin - sub) / alpha), axis=1)
            )
        else:
            total += sub.sum(axis=1)
    return total


def random_search(
    problem: PrecodingProblem,
    samples: int,
    polish_steps: int,
    alpha: float,
    rng: np.random.Generator,
    chunk: int = 50_000,
) -> tuple[np.ndarray, float]:
    """Best smoothed objective over uniformly random unit stacks, followed
    by a greedy projected coordinate-wise polish with shrinking step.

    An intentionally dumb optimizer: its only virtue is that it shares no
    machinery with the power iteration.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    dim = problem.layout.dim
    best_vec: np.ndarray | None = None
    best_val = -np.inf
    remaining = samples
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        raw = rng.standard_normal((m, dim)) + 1j * rng.standard_normal((m, dim))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        vals = batched_objective(problem, raw, alpha)
        idx = int(np.argmax(vals))
        if vals[idx] > best_val:
            best_val = float(vals[idx])
            best_vec = raw[idx].copy()
    assert best_vec is not None

    x = np.concatenate([best_vec.real, best_vec.imag])
    step = 0.1
    for _ in range(polish_steps):
        for i in range(2 * dim):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[i] += sign * step
                v = cand[:dim] + 1j * cand[dim:]
                v /= np.linalg.norm(v)
                val = float(batched_objective(problem, v[None, :], alpha)[0])
                if val > best_val:
                    best_val = val
                    x = np.concatenate([v.real, v.imag])
                    break
        step *= 0.5
    out = x[:dim] + 1j * x[dim:]
    return out / np.linalg.norm(out), best_val


# ---------------------------------------------------------------------------
# dense path: per-case transcription of the quotient matrix definitions

def _dense_embed(mat: np.ndarray, block: int, num_blocks: int) -> np.ndarray:
    n = mat.shape[0]
    out = np.zeros((num_blocks * n, num_blocks * n), dtype=complex)
    out[block * n : (block + 1) * n, block * n : (block + 1) * n] = mat
    return out


def dense_rate_pair(
    message: int, user: int, problem: PrecodingProblem
) -> tuple[np.ndarray, np.ndarray]:
    """Dense (A, B) for one rate term, written case by case from the printed
    matrix definitions (common / partial common / private, single- and
    multiple-layer)."""
    msgset = problem.msgset
    state = problem.states[user]
    n = problem.num_antennas
    m_total = msgset.num_messages
    dim = n * m_total
    rank_one = np.outer(state.h_hat, state.h_hat.conj())
    s_mat = rank_one + state.error_cov

    a = problem.snr_inv * np.eye(dim, dtype=complex)
    if message == 0:
        # common: every block carries the signal matrix
        for m in range(m_total):
            a += _dense_embed(s_mat, m, m_total)
    elif message <= msgset.num_groups:
        if user not in msgset.groups[message - 1]:
            raise ValueError("user outside the partial common group")
        # partial common: the common block is cancelled, all else carries S
        for m in range(1, m_total):
            a += _dense_embed(s_mat, m, m_total)
    else:
        if message != msgset.private_message(user):
            raise ValueError("user does not own this private message")
        own = msgset.group_of(user)
        for m in range(1, m_total):
            if own is not None and m == msgset.partial_message(own):
                continue  # the user's own partial common is cancelled too
            a += _dense_embed(s_mat, m, m_total)
    b = a - _dense_embed(rank_one, message, m_total)
    return a, b


def _dense_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def dense_kkt_operators(
    fbar: np.ndarray, problem: PrecodingProblem, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Dense direction matrices of the optimality condition (prefactors
    dropped, as in the solver), assembled from dense_rate_pair."""
    msgset = problem.msgset
    v = as_stack_vector(fbar)

    def _quad(mat: np.ndarray) -> float:
        return float((v.conj() @ mat @ v).real)

    dim = v.shape[0]
    a_kkt = np.zeros((dim, dim), dtype=complex)
    b_kkt = np.zeros((dim, dim), dtype=complex)

    def _accumulate(pairs: list[tuple[np.ndarray, np.ndarray]], weighted: bool):
        nonlocal a_kkt, b_kkt
        quads = [(_quad(a), _quad(b)) for a, b in pairs]
        if weighted:
            rates = np.array([np.log2(qa / qb) for qa, qb in quads])
            w = _dense_softmax(-rates / alpha)
        else:
            w = np.ones(len(pairs))
        for wi, (a, b), (qa, qb) in zip(w, pairs, quads):
            a_kkt += wi * a / qa
            b_kkt += wi * b / qb

    _accumulate(
        [dense_rate_pair(0, k, problem) for k in range(msgset.num_users)],
        weighted=True,
    )
    for i, members in enumerate(msgset.groups):
        msg = msgset.partial_message(i)
        _accumulate(
            [dense_rate_pair(msg, k, problem) for k in sorted(members)],
            weighted=True,
        )
    _accumulate(
        [
            dense_rate_pair(msgset.private_message(k), k, problem)
            for k in range(msgset.num_users)
        ],
        weighted=False,
    )
    return a_kkt, b_kkt


def dense_lambda_log2(
    fbar: np.ndarray, problem: PrecodingProblem, alpha: float
) -> float:
    """Dense-path evaluation of log2 of the condition's eigenvalue."""
    msgset = problem.msgset
    v = as_stack_vector(fbar)

    def _rate(message: int, user: int) -> float:
        a, b = dense_rate_pair(message, user, problem)
        return float(
            np.log2((v.conj() @ a @ v).real / (v.conj() @ b @ v).real)
        )

    total = softmin(
        [_rate(0, k) for k in range(msgset.num_users)], alpha
    )
    for i, members in enumerate(msgset.groups):
        total += softmin(
            [_rate(msgset.partial_message(i), k) for k in sorted(members)],
            alpha,
        )
    total += sum(
        _rate(msgset.private_message(k), k) for k in range(msgset.num_users)
    )
    return float(total)


def dense_gpi_update(
    fbar: np.ndarray, problem: PrecodingProblem, alpha: float
) -> np.ndarray:
    """One power-iteration update through the dense path, with the same
    phase canonicalization as the solver (largest entry real nonnegative)."""
    a_kkt, b_kkt = dense_kkt_operators(fbar, problem, alpha)
    v = as_stack_vector(fbar)
    y = np.linalg.solve(b_kkt, a_kkt @ v)
    y /= np.linalg.norm(y)
    pivot = y[int(np.argmax(np.abs(y)))]
    if abs(pivot) > 0.0:
        y = y * (pivot.conj() / abs(pivot))
    return y


def dense_fixed_point_check(
    fbar: np.ndarray, problem: PrecodingProblem, alpha: float
) -> float:
    """Residual of the eigenvector condition at ``fbar`` through the dense
    path, after aligning the update's free global phase to ``fbar``."""
    a_kkt, b_kkt = dense_kkt_operators(fbar, problem, alpha)
    v = as_stack_vector(fbar)
    y = np.linalg.solve(b_kkt, a_kkt @ v)
    y /= np.linalg.norm(y)
    inner = np.vdot(v, y)
    if abs(inner) > 0.0:
        y = y * (inner.conj() / abs(inner))
    return float(np.linalg.norm(y - v))
