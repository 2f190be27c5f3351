"""Closed-form lower bounds on instantaneous spectral efficiencies and the
smoothed design objective.

Every bound has the shape log2(1 + gain / (residual interference + error
quadratics + sigma2/P)): the desired message's estimated-channel gain over
everything the decoding user has not cancelled, with each surviving
message contributing both its estimated-channel power and its quadratic in
the CSIT error covariance. The non-smooth minimum over a message's
decoders is replaced, for optimization only, by a LogSumExp soft minimum
with sharpness alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import UserChannelState
from .messages import (
    MessageSet,
    PrecodingProblem,
    as_stack_vector,
    check_unit_norm,
)


@dataclass(frozen=True)
class RateBreakdown:
    """Per-message achieved rates (bits/s/Hz) under the true minimum."""

    common_rate: float
    partial_rates: tuple[float, ...]
    private_rates: tuple[float, ...]
    sum_rate: float

    @classmethod
    def from_parts(cls, common, partials, privates) -> "RateBreakdown":
        partials = tuple(float(x) for x in partials)
        privates = tuple(float(x) for x in privates)
        total = float(common) + sum(partials) + sum(privates)
        return cls(float(common), partials, privates, total)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    return alpha


def softmin(values: Sequence[float], alpha: float) -> float:
    """Smooth lower approximation of min(values):
    -alpha * ln(mean(exp(values / -alpha))).

    Shifted by the true minimum before exponentiation so small alpha cannot
    underflow. The mean inside the log places the result in
    [min, min + alpha*ln(len)], with equality to min on constant lists.
    """
    alpha = _check_alpha(alpha)
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("softmin of an empty list")
    vmin = float(v.min())
    return vmin - alpha * float(np.log(np.mean(np.exp((vmin - v) / alpha))))


def _message_blocks(precoders: np.ndarray, msgset: MessageSet) -> np.ndarray:
    """Coerce per-message precoders to an (M, N) array."""
    blocks = np.asarray(precoders, dtype=complex)
    if blocks.ndim == 1:
        blocks = blocks.reshape(msgset.num_messages, -1)
    if blocks.shape[0] != msgset.num_messages:
        raise ValueError(
            f"expected {msgset.num_messages} message precoders, "
            f"got {blocks.shape[0]}"
        )
    return blocks


def sinr_rate_bound(
    message: int,
    user: int,
    precoders: np.ndarray,
    state: UserChannelState,
    msgset: MessageSet,
    snr_inv: float,
) -> float:
    """Rate lower bound (bits) for ``user`` decoding ``message``.

    The denominator keeps, for every message not yet cancelled by SIC, its
    estimated-channel power |h_hat^H f|^2 (excluding the desired message)
    and its error-covariance quadratic f^H Phi f (including the desired
    message), plus sigma2/P.
    """
    blocks = _message_blocks(precoders, msgset)
    if blocks.shape[1] != state.num_antennas:
        raise ValueError("precoder length does not match the antenna count")
    cancelled = msgset.cancelled_messages(message, user)
    gains = np.abs(blocks @ state.h_hat.conj()) ** 2
    quads = np.einsum(
        "mi,ij,mj->m", blocks.conj(), state.error_cov, blocks
    ).real
    denom = float(snr_inv)
    for m in range(msgset.num_messages):
        if m in cancelled:
            continue
        denom += quads[m]
        if m != message:
            denom += gains[m]
    return float(np.log2(1.0 + gains[message] / denom))


def common_rate_bound(
    user: int,
    precoders: np.ndarray,
    state: UserChannelState,
    msgset: MessageSet,
    snr_inv: float,
) -> float:
    """Bound on the common message's rate at ``user`` (nothing cancelled)."""
    return sinr_rate_bound(0, user, precoders, state, msgset, snr_inv)


def partial_common_rate_bound(
    group: int,
    user: int,
    precoders: np.ndarray,
    state: UserChannelState,
    msgset: MessageSet,
    snr_inv: float,
) -> float:
    """Bound on group ``group``'s partial common message at ``user``; the
    common message is already cancelled. Raises if the user is outside the
    group."""
    return sinr_rate_bound(
        msgset.partial_message(group), user, precoders, state, msgset, snr_inv
    )


def private_rate_bound(
    user: int,
    precoders: np.ndarray,
    state: UserChannelState,
    msgset: MessageSet,
    snr_inv: float,
) -> float:
    """Bound on ``user``'s private rate; the common message and the user's
    own partial common (if any) are cancelled."""
    return sinr_rate_bound(
        msgset.private_message(user), user, precoders, state, msgset, snr_inv
    )


def _all_bounds(fbar: np.ndarray, problem: PrecodingProblem):
    msgset = problem.msgset
    blocks = problem.layout.split(fbar)
    common = [
        common_rate_bound(k, blocks, problem.states[k], msgset, problem.snr_inv)
        for k in range(msgset.num_users)
    ]
    partials = [
        [
            partial_common_rate_bound(
                i, k, blocks, problem.states[k], msgset, problem.snr_inv
            )
            for k in sorted(group)
        ]
        for i, group in enumerate(msgset.groups)
    ]
    privates = [
        private_rate_bound(
            k, blocks, problem.states[k], msgset, problem.snr_inv
        )
        for k in range(msgset.num_users)
    ]
    return common, partials, privates


def objective_J(fbar, problem: PrecodingProblem, alpha: float) -> float:
    """Smoothed design objective in bits: soft minimum of the common bounds
    over users, plus each group's soft minimum of its partial bounds over
    members, plus the sum of private bounds. Requires a unit-norm stack."""
    alpha = _check_alpha(alpha)
    fbar = as_stack_vector(fbar)
    check_unit_norm(fbar)
    common, partials, privates = _all_bounds(fbar, problem)
    total = softmin(common, alpha)
    for group_rates in partials:
        total += softmin(group_rates, alpha)
    return float(total + sum(privates))


def exact_breakdown(fbar, problem: PrecodingProblem) -> RateBreakdown:
    """Achieved rates under the true (non-smoothed) minimum: the reported
    performance metric."""
    fbar = as_stack_vector(fbar)
    check_unit_norm(fbar)
    common, partials, privates = _all_bounds(fbar, problem)
    return RateBreakdown.from_parts(
        min(common), [min(g) for g in partials], privates
    )


def private_only_rates(
    precoders: np.ndarray,
    states: Sequence[UserChannelState],
    snr_inv: float,
    include_error_cov: bool = True,
) -> list[float]:
    """Private-rate bounds for a private-messages-only (K-block) stack.

    Used by the no-rate-splitting design path; with ``include_error_cov``
    false the error covariances are treated as zero, mirroring a design
    that takes the estimated channel as the truth.
    """
    blocks = np.asarray(precoders, dtype=complex)
    num_users = len(states)
    if blocks.ndim == 1:
        blocks = blocks.reshape(num_users, -1)
    rates = []
    for k, state in enumerate(states):
        gains = np.abs(blocks @ state.h_hat.conj()) ** 2
        denom = float(snr_inv) + float(gains.sum() - gains[k])
        if include_error_cov:
            denom += float(
                np.einsum(
                    "mi,ij,mj->", blocks.conj(), state.error_cov, blocks
                ).real
            )
        rates.append(float(np.log2(1.0 + gains[k] / denom)))
    return rates
