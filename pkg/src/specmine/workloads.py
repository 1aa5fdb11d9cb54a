"""Seeded benchmark workload generators.

Each generator builds a pre-state plus a block of transactions whose
contention is controlled by a conflict percentage: conflict_pct percent
of the transactions (rounded down, then repaired to a feasible count)
are constructed to contend on shared storage keys, and the rest touch
disjoint keys only. All randomness flows from the seed, so a workload is
reproducible bit-for-bit.

Recipes:

* ballot   -- voters cast votes for per-transaction proposals; conflicts
              are double-vote pairs sharing one voter record (the second
              vote of a pair reverts).
* auction  -- withdrawals over per-sender pending entries; conflicts are
              bid_plus_one calls that all contend on the highest bid.
* etherdoc -- registrations of distinct documents; conflicts transfer
              pre-owned documents to one recipient, contending on that
              recipient's ownership counter.
* mixed    -- thirds of ballot/auction/etherdoc, shuffled together.
* nested   -- combo transactions that vote and then call into the
              auction as a nested action; conflicts use the bidding
              variant, the rest withdraw disjoint pending entries.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

from .contracts import AUCTION, BALLOT, COMBO, ETHERDOC, init_ballot, init_etherdoc, run_serial_shim
from .model import Address, MsgContext, State, StorageKey, TxRequest, TxStatus, WorkloadError

BENCHMARKS = ("ballot", "auction", "etherdoc", "mixed", "nested")

CHAIR = Address.from_int(0xC0A1)
CREATOR = Address.from_int(0xD0C5)


@dataclass
class Workload:
    benchmark: str
    block_size: int
    conflict_pct: int
    seed: int
    state: State
    txs: List[TxRequest]
    conflicting: int  # how many txs were built to contend

    @property
    def meta(self) -> Dict[str, str]:
        return {
            "benchmark": self.benchmark,
            "block_size": str(self.block_size),
            "conflict_pct": str(self.conflict_pct),
            "seed": str(self.seed),
            "conflicting": str(self.conflicting),
        }


def _check_params(size: int, conflict_pct: int) -> None:
    if size < 0:
        raise WorkloadError("block size must be non-negative")
    if not 0 <= conflict_pct <= 100:
        raise WorkloadError("conflict percentage must be in 0..100")


def _target(size: int, conflict_pct: int) -> int:
    return size * conflict_pct // 100


def _register_voters(state: State, voters: List[Address]) -> None:
    regs = [
        TxRequest(i, BALLOT, "give_right", (v,), MsgContext(CHAIR))
        for i, v in enumerate(voters)
    ]
    statuses = run_serial_shim(state, regs)
    if any(s is not TxStatus.COMMITTED for s in statuses):
        raise WorkloadError("voter registration failed while building the fixture")


def _finish(parts: List[Tuple], rng: random.Random) -> List[TxRequest]:
    """Shuffle (contract, function, args, msg) rows and assign dense ids."""
    rng.shuffle(parts)
    return [
        TxRequest(i, contract, function, args, msg)
        for i, (contract, function, args, msg) in enumerate(parts)
    ]


# ---------------------------------------------------------------------------
# individual recipes


def _gen_ballot(size: int, conflict_pct: int, rng: random.Random, base: int = 0):
    pairs = _target(size, conflict_pct) // 2
    plain = size - 2 * pairs
    nvoters = pairs + plain
    voters = [Address.from_int(base + 1 + i) for i in range(nvoters)]
    state: State = {}
    init_ballot(state, CHAIR, [b"prop%06d" % i for i in range(max(nvoters, 1))])
    _register_voters(state, voters)
    parts = []
    for p in range(pairs):  # both members share voters[p], so one must revert
        parts.append((BALLOT, "vote", (p,), MsgContext(voters[p])))
        parts.append((BALLOT, "vote", (p,), MsgContext(voters[p])))
    for j in range(plain):
        parts.append((BALLOT, "vote", (pairs + j,), MsgContext(voters[pairs + j])))
    return state, _finish(parts, rng), 2 * pairs


def _gen_auction(size: int, conflict_pct: int, rng: random.Random, base: int = 0):
    k = _target(size, conflict_pct)
    if k == 1:
        k = 0  # a single bidder has nobody to contend with
    bidders = [Address.from_int(base + 1 + i) for i in range(k)]
    withdrawers = [Address.from_int(base + 1001 + i) for i in range(size - k)]
    state: State = {}
    for i, w in enumerate(withdrawers):
        state[StorageKey(AUCTION, "pending", w)] = 100 + i
    parts = []
    for b in bidders:
        parts.append((AUCTION, "bid_plus_one", (), MsgContext(b)))
    for w in withdrawers:
        parts.append((AUCTION, "withdraw", (), MsgContext(w)))
    return state, _finish(parts, rng), k


def _gen_etherdoc(size: int, conflict_pct: int, rng: random.Random, base: int = 0):
    k = _target(size, conflict_pct)
    if k == 1:
        k = 0  # a single transfer shares its target counter with nobody
    state: State = {}
    init_etherdoc(state, CREATOR)
    owners = [Address.from_int(base + 1 + i) for i in range(k)]
    for i, owner in enumerate(owners):
        doc = b"owned%06d" % i
        state[StorageKey(ETHERDOC, "docs.exists", doc)] = True
        state[StorageKey(ETHERDOC, "docs.owner", doc)] = owner
    parts = []
    for i, owner in enumerate(owners):  # all bump CREATOR's ownership counter
        parts.append((ETHERDOC, "transfer", (b"owned%06d" % i, CREATOR), MsgContext(owner)))
    for i in range(size - k):
        sender = Address.from_int(base + 1001 + i)
        parts.append((ETHERDOC, "create", (b"fresh%06d" % i,), MsgContext(sender)))
    return state, _finish(parts, rng), k


def _gen_mixed(size: int, conflict_pct: int, rng: random.Random, base: int = 0):
    third = size // 3
    sizes = [third, third, size - 2 * third]
    gens: List[Callable] = [_gen_ballot, _gen_auction, _gen_etherdoc]
    state: State = {}
    parts = []
    conflicting = 0
    for offset, (gen, part_size) in enumerate(zip(gens, sizes)):
        sub_state, sub_txs, sub_k = gen(part_size, conflict_pct, rng, base=base + 10000 * (offset + 1))
        overlap = set(state) & set(sub_state)
        if overlap:
            raise WorkloadError("mixed sub-workloads overlap on %r" % sorted(overlap)[0])
        state.update(sub_state)
        parts.extend((tx.contract, tx.function, tx.args, tx.msg) for tx in sub_txs)
        conflicting += sub_k
    return state, _finish(parts, rng), conflicting


def _gen_nested(size: int, conflict_pct: int, rng: random.Random, base: int = 0):
    k = _target(size, conflict_pct)
    if k == 1:
        k = 0
    voters = [Address.from_int(base + 1 + i) for i in range(size)]
    state: State = {}
    init_ballot(state, CHAIR, [b"prop%06d" % i for i in range(max(size, 1))])
    _register_voters(state, voters)
    parts = []
    for i in range(k):  # nested bid: contends on the auction's highest bid
        amount = 1 + rng.randrange(1000)
        parts.append((COMBO, "vote_then_bid", (i, amount), MsgContext(voters[i])))
    for j in range(k, size):
        state[StorageKey(AUCTION, "pending", voters[j])] = 10 + j
        parts.append((COMBO, "vote_then_withdraw", (j,), MsgContext(voters[j])))
    return state, _finish(parts, rng), k


_GENERATORS = {
    "ballot": _gen_ballot,
    "auction": _gen_auction,
    "etherdoc": _gen_etherdoc,
    "mixed": _gen_mixed,
    "nested": _gen_nested,
}


def generate(benchmark: str, size: int, conflict_pct: int, seed: int) -> Workload:
    """Build the named workload deterministically from the seed."""
    if benchmark not in _GENERATORS:
        raise WorkloadError(
            "unknown benchmark %r (choose from %s)" % (benchmark, ", ".join(BENCHMARKS))
        )
    _check_params(size, conflict_pct)
    rng = random.Random("%d/%s/%d/%d" % (seed, benchmark, size, conflict_pct))
    state, txs, conflicting = _GENERATORS[benchmark](size, conflict_pct, rng)
    return Workload(benchmark, size, conflict_pct, seed, state, txs, conflicting)
