import numpy as np
import pytest

from ceca.schedule import build_schedule
from ceca.topology import (
    ONE_PORT,
    TWO_PORT,
    OnePortParityError,
    comm_matrix,
    comm_matrix_1p,
    comm_matrix_2p,
    matrix_csv,
    normalize_mode,
    receive_from,
    recv_sources,
)


def test_mode_aliases():
    assert normalize_mode("1p") == ONE_PORT
    assert normalize_mode("one-port") == ONE_PORT
    assert normalize_mode("2-Port") == TWO_PORT
    with pytest.raises(ValueError):
        normalize_mode("3p")


def test_two_port_round0_shift_by_one():
    q = comm_matrix_2p(build_schedule(6), 0)
    # every agent receives from its predecessor
    assert [receive_from(q, i) for i in range(1, 7)] == [6, 1, 2, 3, 4, 5]
    assert q.entries[0, 5] == 1


def test_two_port_round2_shift_by_three():
    q = comm_matrix_2p(build_schedule(6), 2)
    assert receive_from(q, 4) == 1
    assert [receive_from(q, i) for i in range(1, 7)] == [4, 5, 6, 1, 2, 3]


def test_two_port_n2_is_swap():
    q = comm_matrix_2p(build_schedule(2), 0)
    assert np.array_equal(q.entries, [[0, 1], [1, 0]])


def test_one_port_n6_pairings_golden():
    schedule = build_schedule(6)
    expected = {
        0: {1: 2, 2: 1, 3: 4, 4: 3, 5: 6, 6: 5},
        1: {1: 4, 4: 1, 2: 5, 5: 2, 3: 6, 6: 3},
        2: {1: 6, 6: 1, 2: 3, 3: 2, 4: 5, 5: 4},
    }
    for r, pairs in expected.items():
        q = comm_matrix_1p(schedule, r)
        for agent, partner in pairs.items():
            assert receive_from(q, agent) == partner


@pytest.mark.parametrize("n", range(2, 129))
def test_two_port_rows_and_columns_sum_to_one(n):
    schedule = build_schedule(n)
    for r in range(schedule.tau):
        q = comm_matrix_2p(schedule, r)
        assert q.entries.sum(axis=0).tolist() == [1] * n
        assert q.entries.sum(axis=1).tolist() == [1] * n


@pytest.mark.parametrize("n", range(2, 129, 2))
def test_one_port_symmetric_involution(n):
    schedule = build_schedule(n)
    for r in range(schedule.tau):
        q = comm_matrix_1p(schedule, r)
        assert np.array_equal(q.entries, q.entries.T)
        assert np.array_equal(q.entries @ q.entries, np.eye(n, dtype=q.entries.dtype))
        assert not q.entries.diagonal().any()
        # the pairing partitions the agents
        partners = q.sources
        assert sorted(partners.tolist()) == list(range(n))


@pytest.mark.parametrize("n", [2, 3, 7, 16, 33, 128])
def test_receive_from_is_a_bijection(n):
    schedule = build_schedule(n)
    for r in range(schedule.tau):
        modes = [TWO_PORT] if n % 2 else [TWO_PORT, ONE_PORT]
        for mode in modes:
            q = comm_matrix(schedule, r, mode)
            senders = {receive_from(q, i) for i in range(1, n + 1)}
            assert senders == set(range(1, n + 1))


def test_one_port_rejects_odd_n():
    schedule = build_schedule(7)
    with pytest.raises(OnePortParityError):
        comm_matrix_1p(schedule, 0)
    with pytest.raises(OnePortParityError):
        recv_sources(schedule, 1, ONE_PORT)


def test_round_out_of_range_rejected():
    schedule = build_schedule(6)
    for bad in (-1, 3, 10):
        with pytest.raises(ValueError):
            comm_matrix_2p(schedule, bad)


def test_receive_from_validates_agent_index():
    q = comm_matrix_2p(build_schedule(4), 0)
    with pytest.raises(ValueError):
        receive_from(q, 0)
    with pytest.raises(ValueError):
        receive_from(q, 5)


def test_matrix_csv_round0_n6():
    q = comm_matrix_2p(build_schedule(6), 0)
    lines = matrix_csv(q).splitlines()
    assert len(lines) == 6
    assert lines[0] == "0,0,0,0,0,1"
    assert lines[1] == "1,0,0,0,0,0"


def test_matrices_are_read_only():
    q = comm_matrix_2p(build_schedule(6), 0)
    with pytest.raises(ValueError):
        q.entries[0, 0] = 1
    with pytest.raises(ValueError):
        q.sources[0] = 3
