"""Differential tests: the compiled engine against the pure one.

With a single worker the two engines must be indistinguishable: same
statuses, same lock profiles, same retry counts, same final state, and
the same event stream entry for entry. With several workers schedules
may legitimately differ, so those tests check mutual acceptance: every
block one engine mines must replay cleanly on both.
"""

import pytest

from specmine.engine import NativeEngine, get_engine
from specmine.mining import execute_serial, mine_block
from specmine.model import Address, MsgContext, StorageKey, TxRequest
from specmine.validating import join_sets, replay_block
from specmine.workloads import BENCHMARKS, generate

pytestmark = pytest.mark.skipif(
    NativeEngine is None, reason="compiled engine not built"
)


def engines():
    return get_engine("pure"), get_engine("native")


def preds_of(block):
    joins = join_sets(block)
    return [joins[i] for i in range(len(block.txs))]


# ---------------------------------------------------------------------------
# single worker: exact equivalence


@pytest.mark.parametrize("bench", BENCHMARKS)
@pytest.mark.parametrize("seed", [1, 2])
def test_mine_parity_single_worker(bench, seed):
    w = generate(bench, 40, 60, seed=seed)
    pure, native = engines()
    hp = pure.load(w.state, workers=1, record_events=True)
    hn = native.load(w.state, workers=1, record_events=True)
    rp = hp.run_mine(w.txs)
    rn = hn.run_mine(w.txs)
    assert rp.statuses == rn.statuses
    assert rp.profiles == rn.profiles
    assert rp.retries == rn.retries
    assert hp.snapshot() == hn.snapshot()
    assert hp.events() == hn.events()


@pytest.mark.parametrize("bench", BENCHMARKS)
def test_serial_parity(bench):
    w = generate(bench, 50, 40, seed=5)
    pure, native = engines()
    sp = execute_serial(pure, w.state, w.txs)
    sn = execute_serial(native, w.state, w.txs)
    assert sp.statuses == sn.statuses
    assert sp.post_state == sn.post_state
    assert sp.post_state_digest == sn.post_state_digest


@pytest.mark.parametrize("bench", BENCHMARKS)
def test_replay_parity(bench):
    w = generate(bench, 50, 40, seed=6)
    pure, native = engines()
    out = mine_block(pure, w.state, w.txs, workers=1)
    preds = preds_of(out.block)
    hp = pure.load(w.state, workers=1)
    hn = native.load(w.state, workers=1)
    rp = hp.run_replay(out.block.txs, preds)
    rn = hn.run_replay(out.block.txs, preds)
    assert rp.statuses == rn.statuses
    assert rp.traces == rn.traces
    assert hp.snapshot() == hn.snapshot()


def _tx(i, contract, function, args, sender, value=0, gas_limit=10_000):
    return TxRequest(
        tx_id=i,
        contract=contract,
        function=function,
        args=args,
        msg=MsgContext(sender=sender, value=value, gas_limit=gas_limit),
    )


def test_edge_case_parity():
    """Gas exhaustion (top level and inside a nested call), unknown
    functions, bad arity, and bad argument types behave identically."""
    chair = Address.from_int(0xC0A1)
    voters = [Address.from_int(0xF000 + i) for i in range(8)]
    state = {
        StorageKey("ballot", "@meta", b"proposal_count"): 4,
        StorageKey("auction", "pending", voters[4]): 55,
    }
    for v in voters:
        state[StorageKey("ballot", "voters.weight", v)] = 1
    txs = [
        _tx(0, "ballot", "vote", (1,), voters[0], gas_limit=3),   # dies mid-body
        _tx(1, "ballot", "vote", (2,), voters[1], gas_limit=1),   # dies on first op
        _tx(2, "combo", "vote_then_bid", (0, 10), voters[2], gas_limit=2),  # dies inside the child
        _tx(3, "combo", "vote_then_bid", (0, 20), voters[3], gas_limit=5),  # child commits, vote dies
        _tx(4, "combo", "vote_then_withdraw", (1,), voters[4]),
        _tx(5, "ballot", "no_such_function", (), voters[5]),
        _tx(6, "ballot", "vote", (1, 2), voters[6]),              # wrong arity
        _tx(7, "ballot", "vote", (True,), voters[7]),             # bool is not an index
        _tx(8, "combo", "vote_then_bid", (0, -5), voters[0]),     # negative stake
        _tx(9, "nowhere", "vote", (1,), voters[1]),               # unknown contract
    ]
    pure, native = engines()
    hp = pure.load(state, workers=1, record_events=True)
    hn = native.load(state, workers=1, record_events=True)
    rp = hp.run_mine(txs)
    rn = hn.run_mine(txs)
    assert rp.statuses == rn.statuses
    assert rp.profiles == rn.profiles
    assert hp.snapshot() == hn.snapshot()
    assert hp.events() == hn.events()
    # the crafted limits must actually hit the paths they aim at
    names = [s.name for s in rp.statuses]
    assert names[:5] == ["OUT_OF_GAS", "OUT_OF_GAS", "OUT_OF_GAS", "OUT_OF_GAS", "COMMITTED"]
    assert set(names[5:]) == {"REVERTED"}


def test_mine_twice_on_one_handle():
    """Block counters reset between blocks; action ids keep counting."""
    w = generate("ballot", 20, 50, seed=3)
    pure, native = engines()
    hp = pure.load(w.state, workers=1)
    hn = native.load(w.state, workers=1)
    first_p, first_n = hp.run_mine(w.txs), hn.run_mine(w.txs)
    assert first_p.profiles == first_n.profiles
    second_p, second_n = hp.run_mine(w.txs), hn.run_mine(w.txs)
    assert second_p.profiles == second_n.profiles
    assert second_p.statuses == second_n.statuses
    assert hp.snapshot() == hn.snapshot()


def test_unrepresentable_arguments_revert_identically():
    """Arguments outside the storable value domain (long byte strings,
    integers past 64 bits, plain wrong types) revert on both engines
    before charging any gas or touching any key."""
    sender = Address.from_int(1)
    txs = [
        _tx(0, "etherdoc", "create", (b"d" * 33,), sender),
        _tx(1, "ballot", "vote", (2**70,), sender),
        _tx(2, "ballot", "vote", (-(2**70),), sender),
        _tx(3, "etherdoc", "create", ("not-bytes",), sender),
        _tx(4, "etherdoc", "create", (b"d" * 32,), sender),  # at the cap: fine
    ]
    pure, native = engines()
    hp = pure.load({}, workers=1, record_events=True)
    hn = native.load({}, workers=1, record_events=True)
    rp = hp.run_mine(txs)
    rn = hn.run_mine(txs)
    assert [s.name for s in rp.statuses] == ["REVERTED"] * 4 + ["COMMITTED"]
    assert rp.statuses == rn.statuses
    assert rp.profiles == rn.profiles
    assert rp.profiles[:4] == [{}] * 4  # rejected before the first operation
    assert hp.snapshot() == hn.snapshot()
    assert hp.events() == hn.events()


# ---------------------------------------------------------------------------
# several workers: mutual acceptance


@pytest.mark.parametrize("bench", BENCHMARKS)
def test_multiworker_cross_validation(bench):
    pure, native = engines()
    for seed in range(3):
        w = generate(bench, 50, 80, seed=seed)
        for miner in (pure, native):
            out = mine_block(miner, w.state, w.txs, workers=3)
            for checker in (pure, native):
                for wk in (1, 3):
                    r = replay_block(checker, w.state, out.block, workers=wk)
                    assert r.accepted, (
                        bench, seed, miner.name, checker.name, wk, r.reason, r.detail
                    )


# ---------------------------------------------------------------------------
# forced contention: long delegation chains acquired in opposite orders


def _drill_block(npairs, hops1, hops2):
    """Pairs of delegate calls built so the two transactions of a pair
    take their first contested lock immediately and reach the other's
    lock only after a long chain walk. Any overlap blocks; adverse
    overlap deadlocks and must be broken by killing the younger tx."""
    dkey = lambda a: StorageKey("ballot", "voters.delegate", a)
    state = {}
    rows = []
    for p in range(npairs):
        a = Address.from_int(0xE000000000 + 0x10000000 + p * 0x100000)
        chain1 = [
            Address.from_int(0xE000000000 + 0x20000000 + p * 0x100000 + j)
            for j in range(hops1)
        ]
        chain2 = [
            Address.from_int(0xE000000000 + 0x30000000 + p * 0x100000 + j)
            for j in range(hops2)
        ]
        for u, v in zip(chain1, chain1[1:]):
            state[dkey(u)] = v
        for u, v in zip(chain2, chain2[1:]):
            state[dkey(u)] = v
        state[dkey(chain2[-1])] = a
        q = chain1[-1]
        rows.append((a, chain1[0]))
        rows.append((q, chain2[0]))
    txs = [
        _tx(i, "ballot", "delegate", (target,), sender)
        for i, (sender, target) in enumerate(rows)
    ]
    return state, txs


@pytest.mark.parametrize("engine_name", ["pure", "native"])
def test_deadlock_drill(engine_name):
    eng = get_engine(engine_name)
    pure, native = engines()
    victims = aborts = retries = 0
    for rep in range(4):
        state, txs = _drill_block(5, 2000, 4000)
        out = mine_block(eng, state, txs, workers=2, record_events=True)
        kinds = [e.kind for e in out.events]
        victims += kinds.count("victim")
        aborts += kinds.count("abort")
        retries += sum(out.retries)
        for checker in (pure, native):
            r = replay_block(checker, state, out.block, workers=1)
            assert r.accepted, (engine_name, rep, checker.name, r.reason, r.detail)
    # every kill is announced and costs exactly one abort-and-retry
    assert victims == aborts == retries
