"""Mining: speculative block execution and schedule publication.

The miner runs a block's transactions concurrently over the speculative
store, then turns the published lock profiles into a happens-before
graph H: for every storage key, the transactions that held it are
chained in ascending use-counter order.  Any topological order of H is
a serial order the concurrent execution is equivalent to; the one we
publish breaks ties by smallest tx id.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .canon import state_digest
from .model import (
    Block,
    HBGraph,
    MalformedProfilesError,
    Schedule,
    StorageKey,
    TxStatus,
)


def check_dense_ids(txs) -> None:
    for i, tx in enumerate(txs):
        if tx.tx_id != i:
            raise ValueError(f"tx ids must be dense from zero: position {i} holds id {tx.tx_id}")


def build_happens_before(profiles: List[Dict[StorageKey, int]]) -> HBGraph:
    """Chain each key's holders by ascending use counter.

    Counters for one key must be exactly 1..k with no duplicates or
    gaps; anything else cannot come from a correct miner.
    """
    nodes = list(range(len(profiles)))
    per_key: Dict[StorageKey, List] = {}
    for tx_id, profile in enumerate(profiles):
        for key, counter in profile.items():
            if not isinstance(counter, int) or isinstance(counter, bool) or counter < 1:
                raise MalformedProfilesError(f"tx {tx_id} holds {key} with bad counter {counter!r}")
            per_key.setdefault(key, []).append((counter, tx_id))
    edges = set()
    for key, entries in per_key.items():
        entries.sort()
        counters = [c for c, _ in entries]
        if counters != list(range(1, len(entries) + 1)):
            raise MalformedProfilesError(f"use counters for {key} are not contiguous: {counters}")
        for (_, u), (_, v) in zip(entries, entries[1:]):
            edges.add((u, v))
    return HBGraph(nodes, edges)


def topo_sort(graph: HBGraph) -> List[int]:
    """Kahn's algorithm; among ready nodes the smallest tx id goes first."""
    indeg = {u: 0 for u in graph.nodes}
    succs: Dict[int, List[int]] = {u: [] for u in graph.nodes}
    for u, v in graph.edges:
        succs[u].append(v)
        indeg[v] += 1
    ready = [u for u in graph.nodes if indeg[u] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in sorted(succs[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != len(graph.nodes):
        raise MalformedProfilesError("happens-before graph contains a cycle")
    return order


@dataclass
class MineOutcome:
    block: Block
    post_state: Dict
    retries: List[int] = field(default_factory=list)
    events: List = field(default_factory=list)


def mine_block(
    engine,
    state: Dict,
    txs,
    workers: int = 1,
    parent_digest: Optional[str] = None,
    record_events: bool = False,
) -> MineOutcome:
    """Execute txs speculatively and assemble the publishable block."""
    check_dense_ids(txs)
    pre = state_digest(state)
    handle = engine.load(state, workers=workers, record_events=record_events)
    result = handle.run_mine(txs)
    graph = build_happens_before(result.profiles)
    order = topo_sort(graph)
    post_state = handle.snapshot()
    block = Block(
        version=1,
        parent_digest=parent_digest if parent_digest is not None else pre,
        pre_state_digest=pre,
        post_state_digest=state_digest(post_state),
        txs=list(txs),
        statuses=list(result.statuses),
        schedule=Schedule(order, graph),
        profiles=list(result.profiles),
    )
    return MineOutcome(
        block=block,
        post_state=post_state,
        retries=list(result.retries),
        events=handle.events() if record_events else [],
    )


@dataclass
class SerialOutcome:
    statuses: List[TxStatus]
    post_state: Dict
    post_state_digest: str


def execute_serial(engine, state: Dict, txs) -> SerialOutcome:
    """Reference execution: one transaction at a time, in the sequence
    given (which may be any permutation of a block, ids untouched)."""
    handle = engine.load(state, workers=1)
    result = handle.run_serial(txs)
    post_state = handle.snapshot()
    return SerialOutcome(result.statuses, post_state, state_digest(post_state))
