"""Validation: deterministic fork-join replay of a published block.

The validator never takes a lock.  It derives each transaction's join
set from the block's happens-before graph (a task starts only after all
its in-edge predecessors finished), replays the transactions over
overlay buffers, and then checks everything the block claims:

  1. structure: ids, permutation, topology          -> MalformedSchedule
  2. pre-state digest                               -> DigestMismatch
  3. race freedom: txs sharing a key are H-ordered  -> RaceDetected
  4. per-key counters contiguous and H-consistent   -> ProfileMismatch
  5. replayed touch sets equal the lock profiles    -> ProfileMismatch
  6. replayed statuses equal the recorded ones      -> StatusMismatch
  7. post-state digest                              -> DigestMismatch

Checks 3 and 4 use only block data, so they run before execution; that
keeps rejection reasons deterministic even for blocks whose doctored
schedules would otherwise let replays race.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from .canon import state_digest
from .model import (
    Block,
    Reason,
    StorageKey,
    Verdict,
    VerificationResult,
)

BLOCK_VERSION = 1


def join_sets(block: Block) -> Dict[int, List[int]]:
    """Predecessor tx ids per transaction: the fork-join dependency lists."""
    preds: Dict[int, List[int]] = {n: [] for n in block.schedule.graph.nodes}
    for u, v in block.schedule.graph.edges:
        preds[v].append(u)
    for p in preds.values():
        p.sort()
    return preds


def transitive_closure(order: List[int], edges) -> List[int]:
    """Reachability bitmasks: bit v of closure[u] says u reaches v (u != v).

    ``order`` must be a topological order of the edges.
    """
    n = len(order)
    succs: List[List[int]] = [[] for _ in range(n)]
    for u, v in edges:
        succs[u].append(v)
    closure = [0] * n
    for u in reversed(order):
        mask = 0
        for v in succs[u]:
            mask |= (1 << v) | closure[v]
        closure[u] = mask
    return closure


def _structure_error(block: Block) -> Optional[str]:
    if block.version != BLOCK_VERSION:
        return f"unknown block version {block.version}"
    n = len(block.txs)
    for i, tx in enumerate(block.txs):
        if tx.tx_id != i:
            return f"tx ids not dense: position {i} holds {tx.tx_id}"
    if len(block.statuses) != n or len(block.profiles) != n:
        return "statuses/profiles not aligned with txs"
    graph = block.schedule.graph
    if sorted(graph.nodes) != list(range(n)):
        return "graph nodes are not the tx ids"
    for u, v in graph.edges:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            return f"edge ({u}, {v}) is not between distinct tx ids"
    order = block.schedule.order
    if sorted(order) != list(range(n)):
        return "serial order is not a permutation of the tx ids"
    pos = {u: i for i, u in enumerate(order)}
    for u, v in graph.edges:
        if pos[u] >= pos[v]:
            return f"serial order violates edge ({u}, {v})"
    return None


def _per_key_holders(block: Block) -> Dict[StorageKey, List[Tuple[int, int]]]:
    per_key: Dict[StorageKey, List[Tuple[int, int]]] = {}
    for tx_id, profile in enumerate(block.profiles):
        for key, counter in profile.items():
            per_key.setdefault(key, []).append((counter, tx_id))
    return per_key


def replay_block(engine, pre_state: Dict, block: Block, workers: int = 1) -> VerificationResult:
    """Replay and verify one block against the given pre-state."""

    problem = _structure_error(block)
    if problem is not None:
        return VerificationResult(Verdict.REJECT, Reason.MALFORMED_SCHEDULE, problem)

    if state_digest(pre_state) != block.pre_state_digest:
        return VerificationResult(Verdict.REJECT, Reason.DIGEST_MISMATCH, "pre-state digest differs")

    per_key = _per_key_holders(block)
    closure = transitive_closure(block.schedule.order, block.schedule.graph.edges)

    def reaches(u: int, v: int) -> bool:
        return bool(closure[u] >> v & 1)

    for key, holders in sorted(per_key.items()):
        txs = [t for _, t in holders]
        for i, u in enumerate(txs):
            for v in txs[i + 1:]:
                if not (reaches(u, v) or reaches(v, u)):
                    return VerificationResult(
                        Verdict.REJECT,
                        Reason.RACE_DETECTED,
                        f"txs {u} and {v} share {key} but are unordered",
                    )

    for key, holders in sorted(per_key.items()):
        holders.sort()
        counters = [c for c, _ in holders]
        if counters != list(range(1, len(holders) + 1)):
            return VerificationResult(
                Verdict.REJECT,
                Reason.PROFILE_MISMATCH,
                f"use counters for {key} are not contiguous: {counters}",
            )
        for (_, u), (_, v) in zip(holders, holders[1:]):
            if not reaches(u, v):
                return VerificationResult(
                    Verdict.REJECT,
                    Reason.PROFILE_MISMATCH,
                    f"counter order on {key} contradicts the graph: {u} before {v}",
                )

    handle = engine.load(pre_state, workers=workers)
    joins = join_sets(block)
    result = handle.run_replay(block.txs, [joins[i] for i in range(len(block.txs))])

    for tx_id, (trace, profile) in enumerate(zip(result.traces, block.profiles)):
        if set(trace) != set(profile):
            return VerificationResult(
                Verdict.REJECT,
                Reason.PROFILE_MISMATCH,
                f"tx {tx_id} touched keys differ from its profile",
            )

    for tx_id, (got, want) in enumerate(zip(result.statuses, block.statuses)):
        if got is not want:
            return VerificationResult(
                Verdict.REJECT,
                Reason.STATUS_MISMATCH,
                f"tx {tx_id} replayed {got.value}, block says {want.value}",
            )

    post = state_digest(handle.snapshot())
    if post != block.post_state_digest:
        return VerificationResult(Verdict.REJECT, Reason.DIGEST_MISMATCH, "post-state digest differs")

    return VerificationResult(Verdict.ACCEPT)
