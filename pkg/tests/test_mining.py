"""Happens-before construction, topological sort, and block assembly."""

import itertools

import pytest

from specmine.canon import state_digest
from specmine.contracts import init_ballot, run_serial_shim
from specmine.engine.pure import PureEngine
from specmine.mining import build_happens_before, execute_serial, mine_block, topo_sort
from specmine.model import (
    Address,
    HBGraph,
    MalformedProfilesError,
    MsgContext,
    StorageKey,
    TxRequest,
    TxStatus,
)

ENGINE = PureEngine()


def A(n: int) -> Address:
    return Address.from_int(n)


def vote_tx(tx_id, sender, proposal):
    return TxRequest(tx_id, "ballot", "vote", (proposal,), MsgContext(A(sender)))


def ballot_fixture(nvoters):
    state = {}
    init_ballot(state, A(999), [b"p%d" % i for i in range(nvoters + 1)])
    for v in range(1, nvoters + 1):
        reg = TxRequest(0, "ballot", "give_right", (A(v),), MsgContext(A(999)))
        assert run_serial_shim(state, [reg]) == [TxStatus.COMMITTED]
    return state


def double_vote_txs(npairs):
    """2*npairs txs: each pair shares one voter, votes its own proposal."""
    txs = []
    for p in range(npairs):
        txs.append(vote_tx(len(txs), p + 1, p))
        txs.append(vote_tx(len(txs), p + 1, p))
    return txs


# ---------------------------------------------------------------------------
# happens-before over three named transactions sharing one key


def test_single_shared_key_worked_example():
    lock = StorageKey("c", "x", 1)
    profiles = [{lock: 1}, {}, {lock: 2}]  # A, B, C
    graph = build_happens_before(profiles)
    assert graph.nodes == [0, 1, 2]
    assert graph.edges == {(0, 2)}
    assert topo_sort(graph) == [0, 1, 2]


def test_counter_chain_builds_path():
    lock = StorageKey("c", "x", 1)
    graph = build_happens_before([{lock: 3}, {lock: 1}, {lock: 2}])
    assert graph.edges == {(1, 2), (2, 0)}
    assert topo_sort(graph) == [1, 2, 0]


def test_disjoint_profiles_have_no_edges():
    profiles = [{StorageKey("c", "x", i): 1} for i in range(5)]
    graph = build_happens_before(profiles)
    assert graph.edges == set()
    assert topo_sort(graph) == [0, 1, 2, 3, 4]


@pytest.mark.parametrize(
    "counters",
    [
        [1, 1],  # duplicate
        [1, 3],  # gap
        [0, 1],  # below one
        [2, 3],  # missing one
    ],
)
def test_bad_counters_are_malformed(counters):
    lock = StorageKey("c", "x", 1)
    profiles = [{lock: c} for c in counters]
    with pytest.raises(MalformedProfilesError):
        build_happens_before(profiles)


def test_topo_sort_min_id_tie_break():
    graph = HBGraph([0, 1, 2], {(0, 2), (1, 2)})
    assert topo_sort(graph) == [0, 1, 2]
    chain = HBGraph([0, 1, 2], {(2, 1), (1, 0)})
    assert topo_sort(chain) == [2, 1, 0]


def test_topo_sort_rejects_cycle():
    with pytest.raises(MalformedProfilesError):
        topo_sort(HBGraph([0, 1], {(0, 1), (1, 0)}))


# ---------------------------------------------------------------------------
# whole blocks


@pytest.mark.parametrize("workers", [1, 2, 3])
def test_double_vote_block_halves(workers):
    state = ballot_fixture(4)
    txs = double_vote_txs(4)
    outcome = mine_block(ENGINE, state, txs, workers=workers)
    statuses = outcome.block.statuses
    assert statuses.count(TxStatus.COMMITTED) == 4
    assert statuses.count(TxStatus.REVERTED) == 4
    # each pair has exactly one committed vote
    for p in range(4):
        pair = statuses[2 * p : 2 * p + 2]
        assert sorted(s.value for s in pair) == ["Committed", "Reverted"]


@pytest.mark.parametrize("workers", [1, 2, 3])
def test_mined_schedule_matches_serial_execution(workers):
    state = ballot_fixture(5)
    txs = double_vote_txs(5)
    outcome = mine_block(ENGINE, state, txs, workers=workers)
    order = outcome.block.schedule.order
    serial = execute_serial(ENGINE, state, [txs[i] for i in order])
    assert serial.post_state_digest == outcome.block.post_state_digest
    by_id = {txs[i].tx_id: serial.statuses[pos] for pos, i in enumerate(order)}
    assert [by_id[i] for i in range(len(txs))] == outcome.block.statuses


def test_workers_one_mining_is_deterministic():
    state = ballot_fixture(3)
    txs = double_vote_txs(3)

    def run():
        outcome = mine_block(ENGINE, state, txs, workers=1)
        return (
            outcome.block.post_state_digest,
            outcome.block.statuses,
            outcome.block.schedule.order,
            sorted(outcome.block.schedule.graph.edges),
            outcome.block.profiles,
        )

    assert run() == run()


def test_sequential_mining_order_equals_tx_order():
    # workers=1: the serial order must be 0..n-1 and match plain execution
    state = ballot_fixture(3)
    txs = double_vote_txs(3)
    outcome = mine_block(ENGINE, state, txs, workers=1)
    assert outcome.block.schedule.order == list(range(len(txs)))
    shim_state = dict(state)
    shim_statuses = run_serial_shim(shim_state, txs)
    assert shim_statuses == outcome.block.statuses
    assert state_digest(shim_state) == outcome.block.post_state_digest


def test_small_block_serializability_exhaustive():
    # every mined schedule must be reproducible by running S serially;
    # check against the full permutation space for a 4-tx block
    state = ballot_fixture(2)
    txs = double_vote_txs(2)
    outcome = mine_block(ENGINE, state, txs, workers=3)
    want = (outcome.block.post_state_digest, tuple(outcome.block.statuses))
    found = None
    for perm in itertools.permutations(range(4)):
        shim_state = dict(state)
        statuses = run_serial_shim(shim_state, [txs[i] for i in perm])
        by_id = {txs[i].tx_id: statuses[pos] for pos, i in enumerate(perm)}
        got = (state_digest(shim_state), tuple(by_id[i] for i in range(4)))
        if got == want:
            found = perm
            break
    assert found is not None, "no serial order reproduces the mined block"


def test_mine_block_empty():
    state = ballot_fixture(1)
    outcome = mine_block(ENGINE, state, [], workers=2)
    assert outcome.block.pre_state_digest == outcome.block.post_state_digest
    assert outcome.block.schedule.order == []
    assert outcome.block.parent_digest == outcome.block.pre_state_digest


def test_mine_block_rejects_sparse_ids():
    state = ballot_fixture(1)
    with pytest.raises(ValueError):
        mine_block(ENGINE, state, [vote_tx(1, 1, 0)], workers=1)


def test_gas_limit_respected_in_block():
    state = ballot_fixture(1)
    txs = [TxRequest(0, "ballot", "vote", (0,), MsgContext(A(1), 0, 3))]
    outcome = mine_block(ENGINE, state, txs, workers=1)
    assert outcome.block.statuses == [TxStatus.OUT_OF_GAS]
    assert outcome.block.pre_state_digest == outcome.block.post_state_digest
