"""Rayleigh-quotient representation of the rate bounds.

On the unit sphere every bound equals log2 of a generalized Rayleigh
quotient f^H A f / f^H B f of the stacked precoder, where A and B are
Hermitian positive definite and block-diagonal with one block per message.
A places h_hat h_hat^H + Phi of the decoding user on every block that
user has not cancelled, plus (sigma2/P) I everywhere; B removes the
desired block's rank-one h_hat h_hat^H. Matrices are kept as (M, N, N)
block stacks throughout; nothing in the hot path materializes the dense
MN x MN form.
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
class QuotientPair:
    """One rate term's (A, B) matrices as (M, N, N) diagonal-block stacks."""

    a_blocks: np.ndarray
    b_blocks: np.ndarray
    desired_block: int
    owner_user: int

    @property
    def num_blocks(self) -> int:
        return self.a_blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.a_blocks.shape[1]

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense MN x MN copies, for diagnostics only."""
        return _dense_from_blocks(self.a_blocks), _dense_from_blocks(
            self.b_blocks
        )


def _dense_from_blocks(blocks: np.ndarray) -> np.ndarray:
    m, n, _ = blocks.shape
    out = np.zeros((m * n, m * n), dtype=complex)
    for i in range(m):
        out[i * n : (i + 1) * n, i * n : (i + 1) * n] = blocks[i]
    return out


def pair_from_mask(
    signal: np.ndarray,
    rank_one: np.ndarray,
    active: np.ndarray,
    desired_block: int,
    snr_inv: float,
    owner_user: int,
) -> QuotientPair:
    """Assemble a quotient pair from the decoder's viewpoint.

    ``signal`` (= h_hat h_hat^H + Phi of the decoding user) is placed on
    every block flagged in ``active``; (sigma2/P) I is added on all blocks;
    B subtracts ``rank_one`` (= h_hat h_hat^H) from the desired block.
    """
    num_blocks = active.shape[0]
    n = signal.shape[0]
    a = np.zeros((num_blocks, n, n), dtype=complex)
    a[:] = snr_inv * np.eye(n)
    a[active] += signal
    b = a.copy()
    b[desired_block] = b[desired_block] - rank_one
    return QuotientPair(a, b, desired_block, owner_user)


def build_pair(
    message: int,
    user: int,
    states: Sequence[UserChannelState],
    msgset: MessageSet,
    snr_inv: float,
) -> QuotientPair:
    """Quotient pair for ``user`` decoding ``message``.

    Raises if the user is not a decoder of the message. The active blocks
    are exactly the messages the user has not cancelled by SIC, which
    reproduces the printed single-layer and multiple-layer matrix
    definitions in one rule.
    """
    cancelled = msgset.cancelled_messages(message, user)
    state = states[user]
    rank_one = np.outer(state.h_hat, state.h_hat.conj())
    signal = rank_one + state.error_cov
    active = np.array(
        [m not in cancelled for m in range(msgset.num_messages)], dtype=bool
    )
    return pair_from_mask(signal, rank_one, active, message, snr_inv, user)


def quadratic_form(blocks: np.ndarray, fbar_blocks: np.ndarray) -> float:
    """Real value of f^H M f for a block-diagonal M given f's (M, N) blocks."""
    val = np.einsum(
        "mi,mij,mj->", fbar_blocks.conj(), blocks, fbar_blocks
    )
    return float(val.real)


def evaluate_quotient(
    pair: QuotientPair, fbar, enforce_unit_norm: bool = True
) -> float:
    """Rayleigh-quotient ratio f^H A f / f^H B f (>= 1 on the unit sphere).

    The ratio equals 1 + SINR only for unit-norm stacks; pass
    ``enforce_unit_norm=False`` to evaluate off the sphere anyway.
    """
    v = as_stack_vector(fbar)
    if enforce_unit_norm:
        check_unit_norm(v)
    vb = v.reshape(pair.num_blocks, pair.block_size)
    num = np.einsum("mi,mij,mj->", vb.conj(), pair.a_blocks, vb)
    den = np.einsum("mi,mij,mj->", vb.conj(), pair.b_blocks, vb)
    if abs(num.imag) > 1e-12 * max(abs(num.real), 1.0) or abs(
        den.imag
    ) > 1e-12 * max(abs(den.real), 1.0):
        raise ValueError("quadratic form has a non-Hermitian residue")
    return float(num.real / den.real)


@dataclass(frozen=True)
class TermGroup:
    """A set of quotient pairs combined either as a soft minimum over
    decoders ("min": a common or partial common message) or as a plain sum
    ("sum": the private messages)."""

    combine: str
    pairs: tuple[QuotientPair, ...]

    def __post_init__(self):
        if self.combine not in ("min", "sum"):
            raise ValueError("combine must be 'min' or 'sum'")
        object.__setattr__(self, "pairs", tuple(self.pairs))


def rsma_terms(problem: PrecodingProblem) -> tuple[TermGroup, ...]:
    """The full rate-splitting objective as term groups: one min-group for
    the common message, one per partial common, one sum-group of privates."""
    msgset = problem.msgset
    states = problem.states
    snr_inv = problem.snr_inv
    groups = [
        TermGroup(
            "min",
            [
                build_pair(0, k, states, msgset, snr_inv)
                for k in range(msgset.num_users)
            ],
        )
    ]
    for i, members in enumerate(msgset.groups):
        msg = msgset.partial_message(i)
        groups.append(
            TermGroup(
                "min",
                [
                    build_pair(msg, k, states, msgset, snr_inv)
                    for k in sorted(members)
                ],
            )
        )
    groups.append(
        TermGroup(
            "sum",
            [
                build_pair(
                    msgset.private_message(k), k, states, msgset, snr_inv
                )
                for k in range(msgset.num_users)
            ],
        )
    )
    return tuple(groups)


def private_only_terms(
    states: Sequence[UserChannelState],
    snr_inv: float,
    include_error_cov: bool = True,
) -> tuple[TermGroup, ...]:
    """Sum-only objective on a K-block stack (no common messages). With
    ``include_error_cov`` false the error covariances are dropped from the
    design matrices."""
    num_users = len(states)
    terms = []
    for k, state in enumerate(states):
        rank_one = np.outer(state.h_hat, state.h_hat.conj())
        signal = rank_one + (state.error_cov if include_error_cov else 0.0)
        active = np.ones(num_users, dtype=bool)
        terms.append(
            pair_from_mask(signal, rank_one, active, k, snr_inv, k)
        )
    return (TermGroup("sum", terms),)
