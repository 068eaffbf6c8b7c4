"""Exact average consensus in ceil(log2 n) synchronous rounds.

Each agent carries two running window averages: one including its own
initial value (``incl``) and one excluding it (``excl``).  A round
combines each agent's pair with the pair received from one neighbor,
using weights set by the round's schedule bit, so that after the final
round ``incl`` holds the exact global mean and ``excl`` the exact
leave-one-out mean.

Rounds are synchronous: all updates in a round read a frozen snapshot
of the pre-round state.  Payloads may be scalars (shape (n,)) or
vectors (shape (n, d)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .schedule import BinarySchedule, build_schedule
from .topology import ONE_PORT, TWO_PORT, normalize_mode, recv_sources

__all__ = [
    "ConsensusState",
    "init_state",
    "step_1p",
    "step_2p",
    "run_consensus",
    "iter_states",
    "rounds_csv",
]


@dataclass(frozen=True, eq=False)
class ConsensusState:
    """Per-agent state after some number of completed rounds.

    incl[i] is agent i+1's window average including its own initial
    value; excl[i] is the same window without it (zero before the
    first round).
    """

    incl: np.ndarray
    excl: np.ndarray
    round: int


def init_state(u) -> ConsensusState:
    """Start a run: every agent holds its own value, nothing excluded."""
    values = np.array(u, dtype=float)
    if values.ndim not in (1, 2):
        raise ValueError(f"inputs must be (n,) or (n, d), got shape {values.shape}")
    if values.shape[0] < 2:
        raise ValueError(f"consensus needs at least 2 agents, got {values.shape[0]}")
    values.setflags(write=False)
    zeros = np.zeros_like(values)
    zeros.setflags(write=False)
    return ConsensusState(incl=values, excl=zeros, round=0)


def _advance(state: ConsensusState, schedule: BinarySchedule, src: np.ndarray) -> ConsensusState:
    r = state.round
    m = schedule.nr[r]
    # All reads below hit the pre-round arrays; the new arrays are the
    # double buffer.
    if schedule.delta[r] == 1:
        incl = 0.5 * state.incl + 0.5 * state.incl[src]
        keep = m / (2 * m + 1)
        excl = keep * state.excl + (1.0 - keep) * state.incl[src]
    else:
        keep = (m + 1) / (2 * m + 1)
        incl = keep * state.incl + (1.0 - keep) * state.excl[src]
        excl = 0.5 * state.excl + 0.5 * state.excl[src]
    incl.setflags(write=False)
    excl.setflags(write=False)
    return ConsensusState(incl=incl, excl=excl, round=r + 1)


def _check_not_done(state: ConsensusState, schedule: BinarySchedule) -> None:
    if state.round >= schedule.tau:
        raise ValueError(
            f"consensus completes after {schedule.tau} rounds; "
            f"cannot step past round {state.round}"
        )


def step_2p(state: ConsensusState, schedule: BinarySchedule) -> ConsensusState:
    """Advance one two-port round; returns a new state."""
    _check_not_done(state, schedule)
    return _advance(state, schedule, recv_sources(schedule, state.round, TWO_PORT))


def step_1p(state: ConsensusState, schedule: BinarySchedule) -> ConsensusState:
    """Advance one one-port round; returns a new state.  Needs even n."""
    _check_not_done(state, schedule)
    return _advance(state, schedule, recv_sources(schedule, state.round, ONE_PORT))


def iter_states(u, mode: str) -> Iterator[ConsensusState]:
    """Yield the state before round 0 and after each of the tau rounds."""
    mode = normalize_mode(mode)
    state = init_state(u)
    schedule = build_schedule(state.incl.shape[0])
    step = step_1p if mode == ONE_PORT else step_2p
    yield state
    for _ in range(schedule.tau):
        state = step(state, schedule)
        yield state


def run_consensus(u, mode: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Run a full consensus pass.

    Returns (averages, leave_one_out, rounds_used): after
    tau = ceil(log2 n) rounds every agent's ``averages`` entry is the
    exact global mean and ``leave_one_out`` is the mean of all other
    agents' inputs.
    """
    final = None
    for final in iter_states(u, mode):
        pass
    assert final is not None
    return final.incl, final.excl, final.round


def rounds_csv(u, mode: str) -> str:
    """Per-round state dump as CSV: round, agent, then incl/excl columns.

    Scalar payloads get columns ``incl, excl``; d-vector payloads get
    ``incl_0..incl_{d-1}, excl_0..``.  Values carry 17 significant
    digits so the dump round-trips binary64 exactly.
    """
    first = init_state(u)
    if first.incl.ndim == 1:
        value_cols = ["incl", "excl"]
    else:
        d = first.incl.shape[1]
        value_cols = [f"incl_{c}" for c in range(d)] + [f"excl_{c}" for c in range(d)]
    lines = ["round,agent," + ",".join(value_cols)]
    for state in iter_states(u, mode):
        incl = np.atleast_2d(state.incl.T).T
        excl = np.atleast_2d(state.excl.T).T
        for agent0 in range(incl.shape[0]):
            values = list(incl[agent0]) + list(excl[agent0])
            cells = ",".join(format(float(v), ".17g") for v in values)
            lines.append(f"{state.round},{agent0 + 1},{cells}")
    return "\n".join(lines) + "\n"
