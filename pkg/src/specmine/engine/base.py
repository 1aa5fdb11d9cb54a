"""Types shared by both execution engines, plus the deadlock victim rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from ..canon import key_canon
from ..model import StorageKey, TxStatus


@dataclass(frozen=True)
class Event:
    """One entry of the speculative store's event log."""

    seq: int
    worker: int
    tx_id: int
    action_id: int
    kind: str  # begin|acquire|block|victim|op_read|op_write|op_delete|undo|commit|revert|oog|abort|absorb|release
    key: Optional[StorageKey] = None
    info: str = ""


def format_events(events: Iterable[Event]) -> str:
    """Render the event log as one structured text line per event."""
    lines = []
    for e in events:
        key = key_canon(e.key) if e.key is not None else "-"
        info = f" {e.info}" if e.info else ""
        lines.append(f"{e.seq:06d} w{e.worker} tx{e.tx_id} a{e.action_id} {e.kind} {key}{info}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class SerialResult:
    statuses: List[TxStatus]


@dataclass
class MineResult:
    statuses: List[TxStatus]
    profiles: List[Dict[StorageKey, int]]
    retries: List[int] = field(default_factory=list)


@dataclass
class ReplayResult:
    statuses: List[TxStatus]
    traces: List[List[StorageKey]]  # first-touch order, deduplicated


def resolve_deadlock(waits_for: Dict[int, Iterable[int]]) -> Optional[int]:
    """Pick the victim for a waits-for graph over tx ids.

    Returns the largest tx id on a cycle, or None when the graph is
    acyclic.  Transactions absent from the mapping are treated as
    running (no outgoing edges).
    """
    graph = {u: sorted(set(vs)) for u, vs in waits_for.items()}
    state: Dict[int, int] = {}  # 1 = on current path, 2 = finished
    path: List[int] = []

    def visit(u: int) -> Optional[int]:
        state[u] = 1
        path.append(u)
        for v in graph.get(u, ()):
            mark = state.get(v)
            if mark == 1:
                cycle = path[path.index(v):]
                return max(cycle)
            if mark is None:
                found = visit(v)
                if found is not None:
                    return found
        path.pop()
        state[u] = 2
        return None

    for node in sorted(graph):
        if node not in state:
            found = visit(node)
            if found is not None:
                return found
    return None
