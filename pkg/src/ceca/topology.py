"""Per-round communication topologies for the two message-passing models.

Two-port rounds are cyclic shifts: every agent sends to one neighbor
and receives from a different one.  One-port rounds pair agents up so
each pair exchanges bidirectionally; this requires an even agent count.
Matrices are stored densely (entry (i, j) = 1 means agent j sends to
agent i) alongside an O(n) receive-permutation view that the simulator
uses so a round costs O(n), not O(n^2).

Public agent indices are 1-based; the arrays inside are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import BinarySchedule

ONE_PORT = "one-port"
TWO_PORT = "two-port"

_MODE_ALIASES = {
    "one-port": ONE_PORT,
    "1-port": ONE_PORT,
    "1p": ONE_PORT,
    "two-port": TWO_PORT,
    "2-port": TWO_PORT,
    "2p": TWO_PORT,
}

__all__ = [
    "ONE_PORT",
    "TWO_PORT",
    "OnePortParityError",
    "CommMatrix",
    "normalize_mode",
    "recv_sources",
    "comm_matrix",
    "comm_matrix_1p",
    "comm_matrix_2p",
    "receive_from",
    "matrix_csv",
]


class OnePortParityError(ValueError):
    """The one-port model pairs agents and therefore needs an even count."""


def normalize_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[str(mode).strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown communication mode {mode!r}; expected one of "
            f"{sorted(set(_MODE_ALIASES))}"
        ) from None


@dataclass(frozen=True, eq=False)
class CommMatrix:
    """One round's message flow.

    entries is the dense 0/1 permutation matrix; sources is the
    equivalent permutation vector with sources[i] = 0-based index of
    the agent that sends to agent i+1.  Both arrays are read-only.
    """

    n: int
    entries: np.ndarray
    mode: str
    round: int
    sources: np.ndarray


def _check_round(schedule: BinarySchedule, r: int) -> None:
    if not 0 <= r < schedule.tau:
        raise ValueError(
            f"round {r} out of range [0, {schedule.tau}) for n={schedule.n}"
        )


def recv_sources(schedule: BinarySchedule, r: int, mode: str) -> np.ndarray:
    """Receive permutation for round r: who sends to each agent.

    Returns a read-only 0-based array src with src[i] the sender for
    agent i+1.  This is the sparse neighbor view; the dense matrix in
    CommMatrix is derived from it.
    """
    mode = normalize_mode(mode)
    _check_round(schedule, r)
    n = schedule.n
    idx = np.arange(n)
    if mode == TWO_PORT:
        shift = schedule.nr[r] + schedule.delta[r]
        src = (idx - shift) % n
    else:
        if n % 2:
            raise OnePortParityError(
                f"one-port rounds pair agents and need an even n, got n={n}"
            )
        shift = 2 * schedule.nr[r] + 1
        # 0-based index i is the 1-based agent i+1, so even i <=> odd agent.
        src = np.where(idx % 2 == 0, (idx + shift) % n, (idx - shift) % n)
        bad = np.nonzero((src[src] != idx) | (src == idx))[0]
        if bad.size:
            raise RuntimeError(
                f"one-port pairing is not a perfect matching for n={n}, r={r}: "
                f"agents {[int(b) + 1 for b in bad[:8]]} are mispaired"
            )
    src.setflags(write=False)
    return src


def _build(schedule: BinarySchedule, r: int, mode: str) -> CommMatrix:
    src = recv_sources(schedule, r, mode)
    n = schedule.n
    entries = np.zeros((n, n), dtype=np.int8)
    entries[np.arange(n), src] = 1
    entries.setflags(write=False)
    return CommMatrix(n=n, entries=entries, mode=mode, round=r, sources=src)


def comm_matrix_2p(schedule: BinarySchedule, r: int) -> CommMatrix:
    """Two-port matrix for round r: the cyclic shift by nr[r] + delta[r]."""
    return _build(schedule, r, TWO_PORT)


def comm_matrix_1p(schedule: BinarySchedule, r: int) -> CommMatrix:
    """One-port matrix for round r: a symmetric pairing of the agents.

    Odd agent i pairs with agent i + 2*nr[r] + 1 (mod n), even agents
    with the mirror partner, which makes the matrix a zero-diagonal
    symmetric involution.  Raises OnePortParityError for odd n.
    """
    return _build(schedule, r, ONE_PORT)


def comm_matrix(schedule: BinarySchedule, r: int, mode: str) -> CommMatrix:
    """Build the round-r matrix for either communication model."""
    mode = normalize_mode(mode)
    return _build(schedule, r, mode)


def receive_from(matrix: CommMatrix, i: int) -> int:
    """The 1-based agent that sends to agent i in this round."""
    if not 1 <= i <= matrix.n:
        raise ValueError(f"agent index {i} out of range [1, {matrix.n}]")
    return int(matrix.sources[i - 1]) + 1


def matrix_csv(matrix: CommMatrix) -> str:
    """Dense 0/1 grid as CSV text, one row per receiving agent."""
    lines = [",".join(str(int(v)) for v in row) for row in matrix.entries]
    return "\n".join(lines) + "\n"
