"""Engine backed by the compiled extension core.

This module is a thin adapter: all execution lives in ``_core``. It
exists so the selection layer can treat both engines uniformly and so
importing the package never requires the extension to be present.
"""

from __future__ import annotations

from typing import Dict, List

from ..model import TxStatus
from .base import Event, MineResult, ReplayResult, SerialResult

from . import _core  # ImportError here means the extension is not built

_STATUS = (TxStatus.COMMITTED, TxStatus.REVERTED, TxStatus.OUT_OF_GAS)


class NativeStoreHandle:
    """Drop-in twin of the pure handle over loaded state."""

    def __init__(self, state: Dict, workers: int = 1, record_events: bool = False) -> None:
        self.workers = max(1, workers)
        self._core = _core.CoreStore(
            dict(state), workers=self.workers, record_events=record_events
        )

    def run_serial(self, txs) -> SerialResult:
        codes = self._core.run_serial(list(txs))
        return SerialResult([_STATUS[s] for s in codes])

    def run_mine(self, txs) -> MineResult:
        codes, profiles, retries = self._core.run_mine(list(txs))
        return MineResult([_STATUS[s] for s in codes], profiles, retries)

    def run_replay(self, txs, preds) -> ReplayResult:
        codes, traces = self._core.run_replay(list(txs), [list(p) for p in preds])
        return ReplayResult([_STATUS[s] for s in codes], traces)

    def snapshot(self) -> Dict:
        return self._core.snapshot()

    def events(self) -> List[Event]:
        rows = []
        for seq, worker, tx_id, action_id, kind, key, aux in self._core.events():
            info = f"tx{aux}" if aux is not None else ""
            rows.append(Event(seq, worker, tx_id, action_id, kind, key, info))
        return rows


class NativeEngine:
    name = "native"
    parallel = True  # block execution happens outside the interpreter lock

    @staticmethod
    def load(state, workers: int = 1, record_events: bool = False) -> NativeStoreHandle:
        return NativeStoreHandle(state, workers=workers, record_events=record_events)
