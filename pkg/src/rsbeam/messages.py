"""Message structure shared by the rate bounds and the quotient forms.

A transmission carries one common message decoded by everyone, optionally G
partial common messages each decoded by a disjoint user group, and one
private message per user. Message indices follow the stacking convention

    0            common
    1 .. G       partial commons (group order)
    G+1 .. G+K   privates (user order)

and each user decodes with successive interference cancellation in that
order, subtracting every message it has already decoded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import UserChannelState


@dataclass(frozen=True)
class MessageSet:
    """User count plus the partial-common group structure.

    ``groups`` holds 0-based user indices; groups must be nonempty and
    pairwise disjoint, and may cover only part of the user set.
    """

    num_users: int
    groups: tuple[frozenset[int], ...] = ()

    def __post_init__(self):
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        object.__setattr__(
            self, "groups", tuple(frozenset(g) for g in self.groups)
        )
        seen: set[int] = set()
        for g in self.groups:
            if not g:
                raise ValueError("groups must be nonempty")
            if any(u < 0 or u >= self.num_users for u in g):
                raise ValueError("group member outside the user set")
            if seen & g:
                raise ValueError("groups must be pairwise disjoint")
            seen |= g

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def num_messages(self) -> int:
        return 1 + self.num_groups + self.num_users

    def group_of(self, user: int) -> int | None:
        """Index of the group containing ``user``, or None."""
        for i, g in enumerate(self.groups):
            if user in g:
                return i
        return None

    def partial_message(self, group: int) -> int:
        return 1 + group

    def private_message(self, user: int) -> int:
        return 1 + self.num_groups + user

    def message_label(self, message: int) -> str:
        if message == 0:
            return "common"
        if 1 <= message <= self.num_groups:
            return f"partial[{message - 1}]"
        return f"private[{message - 1 - self.num_groups}]"

    def decodes(self, message: int, user: int) -> bool:
        """Whether ``user`` is a decoder of ``message``."""
        if not 0 <= message < self.num_messages:
            raise ValueError("message index out of range")
        if not 0 <= user < self.num_users:
            raise ValueError("user index out of range")
        if message == 0:
            return True
        if message <= self.num_groups:
            return user in self.groups[message - 1]
        return message == self.private_message(user)

    def cancelled_messages(self, message: int, user: int) -> frozenset[int]:
        """Messages ``user`` has already removed by SIC when decoding
        ``message``: nothing for the common, the common for a partial
        common, and the common plus the user's own partial common (if it has
        one) for the private."""
        if not self.decodes(message, user):
            raise ValueError(
                f"user {user} does not decode message "
                f"{self.message_label(message)}"
            )
        if message == 0:
            return frozenset()
        if message <= self.num_groups:
            return frozenset({0})
        own = self.group_of(user)
        if own is None:
            return frozenset({0})
        return frozenset({0, self.partial_message(own)})


@dataclass(frozen=True)
class StackLayout:
    """Block layout of the stacked precoder: ``num_messages`` contiguous
    blocks of ``num_antennas`` entries each."""

    num_antennas: int
    num_messages: int

    @property
    def dim(self) -> int:
        return self.num_antennas * self.num_messages

    def block(self, message: int) -> slice:
        if not 0 <= message < self.num_messages:
            raise ValueError("message index out of range")
        n = self.num_antennas
        return slice(message * n, (message + 1) * n)

    def split(self, fbar: np.ndarray) -> np.ndarray:
        """View of ``fbar`` as a (num_messages, num_antennas) block matrix."""
        fbar = np.asarray(fbar)
        if fbar.shape != (self.dim,):
            raise ValueError(
                f"stack has shape {fbar.shape}, expected ({self.dim},)"
            )
        return fbar.reshape(self.num_messages, self.num_antennas)

    def join(self, blocks: np.ndarray) -> np.ndarray:
        blocks = np.asarray(blocks)
        if blocks.shape != (self.num_messages, self.num_antennas):
            raise ValueError("block matrix has the wrong shape")
        return blocks.reshape(self.dim)


@dataclass(frozen=True)
class StackedPrecoder:
    """Unit-norm stacked precoder together with its block layout."""

    fbar: np.ndarray
    layout: StackLayout

    @property
    def blocks(self) -> np.ndarray:
        return self.layout.split(self.fbar)


def as_stack_vector(fbar) -> np.ndarray:
    """Accept either a StackedPrecoder or a bare vector."""
    if isinstance(fbar, StackedPrecoder):
        return np.asarray(fbar.fbar)
    return np.asarray(fbar)


def check_unit_norm(fbar: np.ndarray, tol: float = 1e-9) -> None:
    nrm = float(np.linalg.norm(fbar))
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"stacked precoder norm {nrm} is not 1 within {tol}")


@dataclass(frozen=True)
class PrecodingProblem:
    """One fading block's design data: per-user channel states (estimates
    and error covariances), the message structure, and the inverse SNR
    sigma2/P."""

    states: tuple[UserChannelState, ...]
    msgset: MessageSet
    snr_inv: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(self.states) != self.msgset.num_users:
            raise ValueError("one channel state per user is required")
        if self.snr_inv <= 0.0:
            raise ValueError("snr_inv must be positive")

    @property
    def num_users(self) -> int:
        return self.msgset.num_users

    @property
    def num_antennas(self) -> int:
        return self.states[0].num_antennas

    @property
    def layout(self) -> StackLayout:
        return StackLayout(self.num_antennas, self.msgset.num_messages)

    @property
    def snr_db(self) -> float:
        return -10.0 * float(np.log10(self.snr_inv))
