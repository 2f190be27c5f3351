"""Reference precoders: matched filtering, regularized zero forcing, and a
sum-rate-maximizing private-only design run through the same power
iteration engine."""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .channel import UserChannelState
from .messages import MessageSet, PrecodingProblem, StackedPrecoder
from .quotients import private_only_terms
from .rates import RateBreakdown, private_only_rates
from .solver import GpiReport, SolverConfig, solve_terms


class BaselineKind(enum.Enum):
    MRT = "mrt"
    RZF = "rzf"
    SDMA_GPI = "sdma_gpi"


def _stack_private_directions(
    directions: Sequence[np.ndarray], msgset: MessageSet, num_antennas: int
) -> StackedPrecoder:
    """Unit stack with the given per-user private directions at equal power
    and zero common / partial-common blocks."""
    k = msgset.num_users
    blocks = np.zeros((msgset.num_messages, num_antennas), dtype=complex)
    for u, d in enumerate(directions):
        nrm = np.linalg.norm(d)
        if nrm > 0.0:
            blocks[msgset.private_message(u)] = d / (nrm * np.sqrt(k))
    fbar = blocks.reshape(-1)
    nrm = np.linalg.norm(fbar)
    if nrm > 0.0:
        fbar = fbar / nrm
    from .messages import StackLayout

    return StackedPrecoder(fbar, StackLayout(num_antennas, msgset.num_messages))


def mrt_precoders(
    states: Sequence[UserChannelState],
    snr_inv: float,
    msgset: MessageSet | None = None,
) -> StackedPrecoder:
    """Matched filtering: each private precoder points at its user's channel
    estimate with an equal power split; no common message is sent."""
    del snr_inv  # kept for a uniform baseline signature
    msgset = msgset or MessageSet(len(states))
    return _stack_private_directions(
        [s.h_hat for s in states], msgset, states[0].num_antennas
    )


def rzf_precoders(
    states: Sequence[UserChannelState],
    snr_inv: float,
    msgset: MessageSet | None = None,
) -> StackedPrecoder:
    """Regularized zero forcing: private directions
    (H_hat H_hat^H + (sigma2/P) I)^{-1} h_hat_k, equal power split, no
    common message. Approaches matched filtering at low SNR and zero
    forcing at high SNR."""
    msgset = msgset or MessageSet(len(states))
    n = states[0].num_antennas
    h_mat = np.stack([s.h_hat for s in states], axis=1)  # (N, K)
    gram = h_mat @ h_mat.conj().T + snr_inv * np.eye(n)
    directions = np.linalg.solve(gram, h_mat)  # (N, K)
    return _stack_private_directions(
        [directions[:, k] for k in range(len(states))], msgset, n
    )


def sdma_gpi_solve(
    problem: PrecodingProblem,
    config: SolverConfig | None = None,
    use_error_cov: bool = False,
) -> GpiReport:
    """Sum-rate maximization without rate splitting: the identical power
    iteration on a K-block private-only stack. With ``use_error_cov`` false
    (the default) the error covariances are zeroed inside the design
    objective, i.e. the estimated channels are treated as the truth; the
    reported breakdown uses the same convention."""
    config = config or SolverConfig()
    states = problem.states
    snr_inv = problem.snr_inv
    terms = private_only_terms(states, snr_inv, include_error_cov=use_error_cov)

    k = len(states)
    h_hats = np.stack([s.h_hat for s in states])
    norms = np.linalg.norm(h_hats, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    init_vec = (h_hats / norms).reshape(-1).astype(complex)
    init_vec /= np.linalg.norm(init_vec)

    def _objective(vec: np.ndarray, alpha: float) -> float:
        del alpha  # the sum-only objective has no smoothing term
        return float(
            sum(
                private_only_rates(
                    vec.reshape(k, -1), states, snr_inv, use_error_cov
                )
            )
        )

    def _breakdown(vec: np.ndarray) -> RateBreakdown:
        privates = private_only_rates(
            vec.reshape(k, -1), states, snr_inv, use_error_cov
        )
        return RateBreakdown.from_parts(0.0, [], privates)

    alpha0 = config.initial_alpha(problem.snr_db)
    return solve_terms(terms, config, init_vec, alpha0, _objective, _breakdown)


def embed_private_stack(
    kblock_fbar: np.ndarray, msgset: MessageSet, num_antennas: int
) -> StackedPrecoder:
    """Lift a K-block private-only stack into the full message layout with
    zero common and partial-common blocks (norm preserved)."""
    from .messages import StackLayout

    blocks = np.zeros((msgset.num_messages, num_antennas), dtype=complex)
    kb = np.asarray(kblock_fbar).reshape(msgset.num_users, num_antennas)
    for u in range(msgset.num_users):
        blocks[msgset.private_message(u)] = kb[u]
    return StackedPrecoder(
        blocks.reshape(-1), StackLayout(num_antennas, msgset.num_messages)
    )
