"""Deterministic replay validation and tamper rejection."""

import copy

import pytest

from specmine.contracts import init_ballot, init_etherdoc, run_serial_shim
from specmine.engine.pure import PureEngine
from specmine.mining import mine_block
from specmine.model import (
    Address,
    Block,
    HBGraph,
    MsgContext,
    Reason,
    Schedule,
    StorageKey,
    TxRequest,
    TxStatus,
    Verdict,
)
from specmine.validating import join_sets, replay_block, transitive_closure

ENGINE = PureEngine()


def A(n: int) -> Address:
    return Address.from_int(n)


def flip_hex(digest: str) -> str:
    last = digest[-1]
    repl = "0" if last != "0" else "1"
    return digest[:-1] + repl


def ballot_fixture(nvoters):
    state = {}
    init_ballot(state, A(999), [b"p%d" % i for i in range(nvoters + 1)])
    regs = [
        TxRequest(0, "ballot", "give_right", (A(v),), MsgContext(A(999)))
        for v in range(1, nvoters + 1)
    ]
    for reg in regs:
        assert run_serial_shim(state, [reg]) == [TxStatus.COMMITTED]
    return state


def double_vote_block(npairs=3, workers=2):
    state = ballot_fixture(npairs)
    txs = []
    for p in range(npairs):
        txs.append(TxRequest(len(txs), "ballot", "vote", (p,), MsgContext(A(p + 1))))
        txs.append(TxRequest(len(txs), "ballot", "vote", (p,), MsgContext(A(p + 1))))
    outcome = mine_block(ENGINE, state, txs, workers=workers)
    return state, outcome.block


def bidding_block(nbidders=6, workers=3):
    state = {}
    txs = [
        TxRequest(i, "auction", "bid_plus_one", (), MsgContext(A(i + 1)))
        for i in range(nbidders)
    ]
    outcome = mine_block(ENGINE, state, txs, workers=workers)
    return state, outcome.block


def docs_block(ndocs=5, workers=2):
    state = {}
    init_etherdoc(state, A(777))
    txs = [
        TxRequest(i, "etherdoc", "create", (b"doc%d" % i,), MsgContext(A(i + 1)))
        for i in range(ndocs)
    ]
    outcome = mine_block(ENGINE, state, txs, workers=workers)
    return state, outcome.block


# ---------------------------------------------------------------------------
# helpers


def test_join_sets_single_shared_key():
    lock = StorageKey("c", "x", 1)
    state, _ = double_vote_block(1, workers=1)  # unused, just to import-check
    graph = HBGraph([0, 1, 2], {(0, 2)})
    block = Block(
        version=1,
        parent_digest="0" * 64,
        pre_state_digest="0" * 64,
        post_state_digest="0" * 64,
        txs=[],
        statuses=[],
        schedule=Schedule([0, 1, 2], graph),
        profiles=[{lock: 1}, {}, {lock: 2}],
    )
    assert join_sets(block) == {0: [], 1: [], 2: [0]}


def test_transitive_closure_chain():
    order = [0, 1, 2]
    closure = transitive_closure(order, {(0, 1), (1, 2)})
    assert closure[0] & (1 << 1)
    assert closure[0] & (1 << 2)
    assert closure[1] & (1 << 2)
    assert not closure[2]


# ---------------------------------------------------------------------------
# honest blocks are accepted


@pytest.mark.parametrize("mine_workers", [1, 2, 3])
@pytest.mark.parametrize("replay_workers", [1, 3])
def test_honest_ballot_block_accepted(mine_workers, replay_workers):
    state, block = double_vote_block(3, workers=mine_workers)
    result = replay_block(ENGINE, state, block, workers=replay_workers)
    assert result.verdict is Verdict.ACCEPT, (result.reason, result.detail)


@pytest.mark.parametrize("replay_workers", [1, 3])
def test_honest_bidding_block_accepted(replay_workers):
    state, block = bidding_block()
    assert all(s is TxStatus.COMMITTED for s in block.statuses)
    result = replay_block(ENGINE, state, block, workers=replay_workers)
    assert result.verdict is Verdict.ACCEPT, (result.reason, result.detail)


def test_honest_docs_block_accepted():
    state, block = docs_block()
    result = replay_block(ENGINE, state, block, workers=2)
    assert result.verdict is Verdict.ACCEPT


def test_empty_block_accepted():
    state = ballot_fixture(1)
    outcome = mine_block(ENGINE, state, [], workers=1)
    result = replay_block(ENGINE, state, outcome.block, workers=1)
    assert result.verdict is Verdict.ACCEPT


def test_acceptance_is_repeatable():
    state, block = double_vote_block(3, workers=3)
    for _ in range(20):
        result = replay_block(ENGINE, state, block, workers=3)
        assert result.verdict is Verdict.ACCEPT


def test_extra_consistent_edge_still_accepted():
    # an over-constrained schedule remains replayable: add an edge between
    # two transactions that are adjacent in the serial order anyway
    state, block = double_vote_block(3, workers=2)
    tampered = copy.deepcopy(block)
    order = tampered.schedule.order
    u, v = order[0], order[-1]
    tampered.schedule.graph.edges.add((u, v))
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.ACCEPT, (result.reason, result.detail)


# ---------------------------------------------------------------------------
# tampering: each mutation class maps to a pinned rejection reason


def test_post_digest_flip_rejected():
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    tampered.post_state_digest = flip_hex(tampered.post_state_digest)
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.DIGEST_MISMATCH


def test_pre_digest_flip_rejected():
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    tampered.pre_state_digest = flip_hex(tampered.pre_state_digest)
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.DIGEST_MISMATCH


def test_wrong_pre_state_rejected():
    state, block = double_vote_block()
    other = dict(state)
    other[StorageKey("ballot", "scalars", b"intruder")] = 1
    result = replay_block(ENGINE, other, block, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.DIGEST_MISMATCH


def test_status_flip_rejected():
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    idx = tampered.statuses.index(TxStatus.REVERTED)
    tampered.statuses[idx] = TxStatus.COMMITTED
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.STATUS_MISMATCH


def shared_key_holders(block):
    """Pick a key held by two transactions and return (key, tx_lo, tx_hi)."""
    holders = {}
    for tx_id, profile in enumerate(block.profiles):
        for key, counter in profile.items():
            holders.setdefault(key, []).append((counter, tx_id))
    for key, entries in holders.items():
        if len(entries) >= 2:
            entries.sort()
            return key, entries[0][1], entries[1][1]
    raise AssertionError("fixture produced no contended key")


def test_counter_swap_rejected():
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    key, lo, hi = shared_key_holders(tampered)
    tampered.profiles[lo][key], tampered.profiles[hi][key] = (
        tampered.profiles[hi][key],
        tampered.profiles[lo][key],
    )
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.PROFILE_MISMATCH


def test_edge_deletion_rejected_as_race():
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    key, lo, hi = shared_key_holders(tampered)
    assert (lo, hi) in tampered.schedule.graph.edges
    tampered.schedule.graph.edges.remove((lo, hi))
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.RACE_DETECTED


def test_arg_change_rejected():
    # make a committed vote target a different (valid) proposal: the replay
    # trace touches a different tally key than the mined profile declares
    state, block = double_vote_block(3)
    tampered = copy.deepcopy(block)
    idx = tampered.statuses.index(TxStatus.COMMITTED)
    old = tampered.txs[idx]
    assert old.function == "vote"
    new_proposal = (old.args[0] + 1) % 4
    tampered.txs[idx] = TxRequest(
        old.tx_id, old.contract, old.function, (new_proposal,), old.msg
    )
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.PROFILE_MISMATCH


def test_rejection_reason_is_deterministic():
    state, block = double_vote_block(3)
    tampered = copy.deepcopy(block)
    idx = tampered.statuses.index(TxStatus.COMMITTED)
    old = tampered.txs[idx]
    tampered.txs[idx] = TxRequest(
        old.tx_id, old.contract, old.function, ((old.args[0] + 1) % 4,), old.msg
    )
    results = [replay_block(ENGINE, state, tampered, workers=3) for _ in range(20)]
    assert all(r.verdict is Verdict.REJECT for r in results)
    assert len({r.reason for r in results}) == 1
    assert results[0].reason is Reason.PROFILE_MISMATCH


# ---------------------------------------------------------------------------
# malformed schedules


def malformed(block, mutate):
    tampered = copy.deepcopy(block)
    mutate(tampered)
    return tampered


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: setattr(b, "version", 2),
        lambda b: b.schedule.order.__setitem__(0, b.schedule.order[1]),  # not a permutation
        lambda b: b.schedule.order.reverse(),  # violates an edge
        lambda b: b.schedule.graph.edges.add((0, 0)),  # self edge
        lambda b: b.schedule.graph.edges.add((0, 99)),  # unknown node
        lambda b: b.schedule.graph.nodes.pop(),
        lambda b: b.statuses.pop(),
        lambda b: b.profiles.pop(),
        lambda b: b.txs.pop(),
    ],
)
def test_malformed_schedule_rejected(mutate):
    state, block = double_vote_block()
    tampered = malformed(block, mutate)
    result = replay_block(ENGINE, state, tampered, workers=2)
    assert result.verdict is Verdict.REJECT
    assert result.reason is Reason.MALFORMED_SCHEDULE, (result.reason, result.detail)


def test_order_reversal_checked_before_execution():
    # reversing the order violates topology, which is a static check: the
    # rejection must not depend on replay workers
    state, block = double_vote_block()
    tampered = copy.deepcopy(block)
    tampered.schedule.order.reverse()
    for workers in (1, 2, 3):
        result = replay_block(ENGINE, state, tampered, workers=workers)
        assert result.reason is Reason.MALFORMED_SCHEDULE
