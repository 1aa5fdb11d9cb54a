"""Workload generators: determinism, feasibility, and contention truth."""

import pytest

from specmine.engine.pure import PureEngine
from specmine.mining import mine_block
from specmine.model import TxStatus, WorkloadError
from specmine.workloads import BENCHMARKS, generate

ENGINE = PureEngine()


def contending_txs(block):
    """Tx ids that share at least one profile key with another tx."""
    holders = {}
    for tx_id, profile in enumerate(block.profiles):
        for key in profile:
            holders.setdefault(key, []).append(tx_id)
    out = set()
    for txs in holders.values():
        if len(txs) > 1:
            out.update(txs)
    return out


@pytest.mark.parametrize("benchmark", BENCHMARKS)
def test_deterministic_by_seed(benchmark):
    a = generate(benchmark, 24, 25, seed=7)
    b = generate(benchmark, 24, 25, seed=7)
    assert a.state == b.state
    assert a.txs == b.txs
    assert a.conflicting == b.conflicting
    c = generate(benchmark, 24, 25, seed=8)
    assert c.txs != a.txs  # order or contents must move with the seed


@pytest.mark.parametrize("benchmark", BENCHMARKS)
@pytest.mark.parametrize("conflict", [0, 15, 50, 100])
def test_sizes_and_ids(benchmark, conflict):
    w = generate(benchmark, 30, conflict, seed=3)
    assert len(w.txs) == 30
    assert [tx.tx_id for tx in w.txs] == list(range(30))
    assert 0 <= w.conflicting <= 30


@pytest.mark.parametrize("benchmark", BENCHMARKS)
def test_mined_contention_matches_recorded_count(benchmark):
    for conflict in (0, 20, 50, 100):
        w = generate(benchmark, 20, conflict, seed=11)
        outcome = mine_block(ENGINE, w.state, w.txs, workers=1)
        assert len(contending_txs(outcome.block)) == w.conflicting, (
            benchmark,
            conflict,
        )


@pytest.mark.parametrize("benchmark", BENCHMARKS)
def test_conflict_zero_has_no_edges(benchmark):
    w = generate(benchmark, 18, 0, seed=5)
    assert w.conflicting == 0
    outcome = mine_block(ENGINE, w.state, w.txs, workers=1)
    assert outcome.block.schedule.graph.edges == set()


def test_ballot_double_votes_revert():
    w = generate("ballot", 20, 100, seed=1)
    outcome = mine_block(ENGINE, w.state, w.txs, workers=1)
    statuses = outcome.block.statuses
    assert statuses.count(TxStatus.COMMITTED) == 10
    assert statuses.count(TxStatus.REVERTED) == 10


def test_ballot_low_conflict_statuses():
    w = generate("ballot", 20, 20, seed=2)
    assert w.conflicting == 4  # two double-vote pairs
    outcome = mine_block(ENGINE, w.state, w.txs, workers=2)
    statuses = outcome.block.statuses
    assert statuses.count(TxStatus.REVERTED) == 2
    assert statuses.count(TxStatus.COMMITTED) == 18


@pytest.mark.parametrize("benchmark", ["auction", "etherdoc", "nested"])
def test_non_ballot_workloads_commit_everything(benchmark):
    w = generate(benchmark, 16, 50, seed=9)
    outcome = mine_block(ENGINE, w.state, w.txs, workers=2)
    assert all(s is TxStatus.COMMITTED for s in outcome.block.statuses)


@pytest.mark.parametrize("benchmark", ["auction", "etherdoc", "nested"])
def test_single_conflicting_tx_demoted(benchmark):
    # 10 txs at 10% would nominate exactly one tx, which cannot contend alone
    w = generate(benchmark, 10, 10, seed=4)
    assert w.conflicting == 0


def test_ballot_rounds_down_to_pairs():
    w = generate("ballot", 10, 30, seed=4)  # 3 nominated -> one pair
    assert w.conflicting == 2


def test_mixed_covers_three_contracts():
    w = generate("mixed", 30, 50, seed=6)
    contracts = {tx.contract for tx in w.txs}
    assert contracts == {"ballot", "auction", "etherdoc"}


def test_nested_uses_combo_contract():
    w = generate("nested", 12, 50, seed=6)
    functions = {tx.function for tx in w.txs}
    assert functions == {"vote_then_bid", "vote_then_withdraw"}


def test_meta_round_trips_the_parameters():
    w = generate("auction", 40, 35, seed=12)
    assert w.meta["benchmark"] == "auction"
    assert w.meta["block_size"] == "40"
    assert w.meta["conflict_pct"] == "35"
    assert w.meta["seed"] == "12"
    assert w.meta["conflicting"] == str(w.conflicting)


def test_bad_parameters_rejected():
    with pytest.raises(WorkloadError):
        generate("nope", 10, 0, seed=0)
    with pytest.raises(WorkloadError):
        generate("ballot", -1, 0, seed=0)
    with pytest.raises(WorkloadError):
        generate("ballot", 10, 101, seed=0)


def test_empty_block_allowed():
    w = generate("ballot", 0, 50, seed=0)
    assert w.txs == [] and w.conflicting == 0
