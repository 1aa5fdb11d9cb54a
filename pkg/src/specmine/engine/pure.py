"""Pure-Python execution engine: the reference for all three run modes.

The speculative store implements transactional boosting: one abstract
lock per StorageKey with a per-block use counter, per-action inverse
logs replayed newest-first on abort, nested actions that merge into
their parent on commit, deadlock detection on the waits-for graph with
a largest-tx-id victim rule, and unbounded retry for victims.

Replay (validation) and serial modes use no locks at all: transactions
run against overlay buffers that flush on commit, exactly like the
serial shim in the contracts module.
"""

from __future__ import annotations

import threading
from heapq import heapify, heappop, heappush
from typing import Dict, List, Optional, Tuple

from ..contracts import OutOfGas, Revert, _ShimHandle, apply_tx, dispatch
from ..model import (
    META_VARIABLE,
    MsgContext,
    StorageKey,
    TxStatus,
    UsageError,
    check_value,
)
from .base import Event, MineResult, ReplayResult, SerialResult, resolve_deadlock


class AbortRetry(Exception):
    """Internal: this action tree was chosen as a deadlock victim."""


class _Lock:
    __slots__ = ("owner", "queue", "counter")

    def __init__(self) -> None:
        self.owner: Optional[_Action] = None
        self.queue: List[_Action] = []
        self.counter = 0


class _Action:
    __slots__ = (
        "action_id",
        "tx_id",
        "worker",
        "parent",
        "root",
        "held",
        "log",
        "live_children",
        "alive",
        "killed",
        "granted",
        "waiting_on",
        "cv",
    )

    def __init__(self, action_id: int, tx_id: int, worker: int, parent: Optional["_Action"], mu) -> None:
        self.action_id = action_id
        self.tx_id = tx_id
        self.worker = worker
        self.parent = parent
        self.root = parent.root if parent is not None else self
        self.held: List[StorageKey] = []
        self.log: List[Tuple[StorageKey, bool, object]] = []
        self.live_children = 0
        self.alive = True
        self.killed = False  # meaningful on roots only
        self.granted = False
        self.waiting_on: Optional[StorageKey] = None
        self.cv = threading.Condition(mu)


class PureStore:
    """Speculative store over a plain dict. All mutation happens under
    one mutex; per-action condition variables share it for blocking."""

    def __init__(self, state: Dict, record_events: bool = False) -> None:
        self._mu = threading.Lock()
        self._state = dict(state)
        self._meta = {k: v for k, v in state.items() if k.variable == META_VARIABLE}
        self._locks: Dict[StorageKey, _Lock] = {}
        self._blocked: Dict[_Action, _Action] = {}  # root -> its blocked action
        self._record = record_events
        self.events: List[Event] = []
        self._next_action = 0

    # -- event log ------------------------------------------------------

    def _log(self, action: _Action, kind: str, key: Optional[StorageKey] = None, info: str = "") -> None:
        if self._record:
            self.events.append(
                Event(len(self.events), action.worker, action.tx_id, action.action_id, kind, key, info)
            )

    # -- lifecycle ------------------------------------------------------

    def begin_action(self, tx_id: int, parent: Optional[_Action] = None, worker: int = 0) -> _Action:
        with self._mu:
            if parent is not None:
                if not parent.alive:
                    raise UsageError("parent action is not live")
                parent.live_children += 1
                worker = parent.worker
            action = _Action(self._next_action, tx_id, worker, parent, self._mu)
            self._next_action += 1
            self._log(action, "begin")
            return action

    def _check_op(self, action: _Action) -> None:
        if not action.alive:
            raise UsageError("operation on a finished action")
        if action.live_children:
            raise UsageError("operation on an action with a live child")

    # -- locking --------------------------------------------------------

    def _in_tree(self, owner: _Action, action: _Action) -> bool:
        node: Optional[_Action] = action
        while node is not None:
            if node is owner:
                return True
            node = node.parent
        return False

    def _acquire(self, action: _Action, key: StorageKey) -> _Lock:
        # caller holds self._mu
        root = action.root
        if root.killed:
            raise AbortRetry()
        lock = self._locks.get(key)
        if lock is None:
            lock = self._locks[key] = _Lock()
        owner = lock.owner
        if owner is not None and self._in_tree(owner, action):
            return lock
        if owner is None and not lock.queue:
            lock.owner = action
            action.held.append(key)
            self._log(action, "acquire", key)
            return lock

        # contended: queue up, then look for a deadlock we just created
        lock.queue.append(action)
        action.waiting_on = key
        self._blocked[root] = action
        self._log(action, "block", key)
        victim_tx = resolve_deadlock(self._waits_for())
        if victim_tx is not None:
            self._log(action, "victim", key, info=f"tx{victim_tx}")
            for vroot in list(self._blocked):
                if vroot.tx_id == victim_tx:
                    vroot.killed = True
                    if vroot is not root:
                        self._blocked[vroot].cv.notify()
                    break
        while not action.granted and not root.killed:
            action.cv.wait()
        action.waiting_on = None
        if self._blocked.get(root) is action:
            del self._blocked[root]
        if action.granted:
            # the releaser already popped us from the queue and set owner
            action.granted = False
            action.held.append(key)
            self._log(action, "acquire", key)
            if root.killed:
                raise AbortRetry()  # abort() will release everything held
            return lock
        if action in lock.queue:
            lock.queue.remove(action)
        raise AbortRetry()

    def _waits_for(self) -> Dict[int, set]:
        graph: Dict[int, set] = {}
        for root, action in self._blocked.items():
            if root.killed:
                continue
            lock = self._locks[action.waiting_on]
            deps = set()
            if lock.owner is not None and not lock.owner.root.killed:
                deps.add(lock.owner.root.tx_id)
            for waiter in lock.queue:
                if waiter is action:
                    break
                if not waiter.root.killed:
                    deps.add(waiter.root.tx_id)
            graph[root.tx_id] = deps
        return graph

    def _release_all(self, action: _Action) -> None:
        for key in reversed(action.held):
            lock = self._locks[key]
            lock.owner = None
            self._log(action, "release", key)
            while lock.queue:
                head = lock.queue.pop(0)
                if head.root.killed:
                    head.cv.notify()
                    continue
                lock.owner = head
                head.granted = True
                # clear the waiter's blocked bookkeeping here, not on its
                # wake: a granted-but-unscheduled waiter must not appear in
                # the waits-for graph as waiting on a lock it now owns
                head.waiting_on = None
                if self._blocked.get(head.root) is head:
                    del self._blocked[head.root]
                head.cv.notify()
                break
        action.held = []

    # -- storage operations ----------------------------------------------

    def sread(self, action: _Action, key: StorageKey):
        with self._mu:
            self._check_op(action)
            self._acquire(action, key)
            value = self._state.get(key)
            self._log(action, "op_read", key)
            return value

    def swrite(self, action: _Action, key: StorageKey, value) -> None:
        if key.variable == META_VARIABLE:
            raise UsageError("layout constants are immutable")
        check_value(value)
        with self._mu:
            self._check_op(action)
            self._acquire(action, key)
            had = key in self._state
            action.log.append((key, had, self._state.get(key)))
            self._state[key] = value
            self._log(action, "op_write", key)

    def sdelete(self, action: _Action, key: StorageKey) -> None:
        if key.variable == META_VARIABLE:
            raise UsageError("layout constants are immutable")
        with self._mu:
            self._check_op(action)
            self._acquire(action, key)
            had = key in self._state
            action.log.append((key, had, self._state.get(key)))
            self._state.pop(key, None)
            self._log(action, "op_delete", key)

    def read_meta(self, contract: str, name: bytes):
        return self._meta.get(StorageKey(contract, META_VARIABLE, name))

    # -- resolution -------------------------------------------------------

    def _undo(self, action: _Action) -> None:
        for key, had, old in reversed(action.log):
            if had:
                self._state[key] = old
            else:
                self._state.pop(key, None)
            self._log(action, "undo", key)
        action.log = []

    def _finish(self, action: _Action) -> None:
        if not action.alive:
            raise UsageError("action already finished")
        if action.live_children:
            raise UsageError("resolving an action with live children")
        action.alive = False
        if action.parent is not None:
            action.parent.live_children -= 1

    def _merge_locks_into_parent(self, action: _Action) -> None:
        parent = action.parent
        for key in action.held:
            self._locks[key].owner = parent
        parent.held.extend(action.held)
        action.held = []

    def _counters_and_profile(self, action: _Action) -> Dict[StorageKey, int]:
        profile = {}
        for key in action.held:
            lock = self._locks[key]
            lock.counter += 1
            profile[key] = lock.counter
        return profile

    def commit(self, action: _Action) -> Optional[Dict[StorageKey, int]]:
        """Nested: fold locks and log into the parent. Top-level: assign
        counters, publish the profile, then release everything."""
        with self._mu:
            self._finish(action)
            if action.parent is not None:
                self._merge_locks_into_parent(action)
                action.parent.log.extend(action.log)
                action.log = []
                self._log(action, "commit")
                return None
            profile = self._counters_and_profile(action)
            self._log(action, "commit")
            self._release_all(action)
            return profile

    def abort(self, action: _Action) -> None:
        """System abort: undo this action's own effects, release its own
        locks, leave the parent untouched."""
        with self._mu:
            self._finish(action)
            self._undo(action)
            self._log(action, "abort")
            self._release_all(action)

    def absorb_aborted_child(self, child: _Action) -> None:
        """A caught child failure: undo the child's effects but keep its
        locks in the family, so the transaction's final profile covers
        every key on its executed path."""
        if child.parent is None:
            raise UsageError("top-level actions cannot be absorbed")
        with self._mu:
            self._finish(child)
            self._undo(child)
            self._merge_locks_into_parent(child)
            self._log(child, "absorb")

    def finish_reverted(self, action: _Action) -> Dict[StorageKey, int]:
        """Application throw at top level: undo everything, but commit the
        lock set (counters advance, profile is published)."""
        if action.parent is not None:
            raise UsageError("only top-level actions publish profiles")
        with self._mu:
            self._finish(action)
            self._undo(action)
            profile = self._counters_and_profile(action)
            self._log(action, "revert")
            self._release_all(action)
            return profile

    def finish_out_of_gas(self, action: _Action) -> Dict[StorageKey, int]:
        if action.parent is not None:
            raise UsageError("only top-level actions publish profiles")
        with self._mu:
            self._finish(action)
            self._undo(action)
            profile = self._counters_and_profile(action)
            self._log(action, "oog")
            self._release_all(action)
            return profile

    def reset_block_counters(self) -> None:
        with self._mu:
            for lock in self._locks.values():
                lock.counter = 0


# ---------------------------------------------------------------------------
# handles


class _SpecHandle:
    """Contract-facing handle for speculative (mining) execution."""

    __slots__ = ("_store", "_action", "msg", "_steps")

    def __init__(self, store: PureStore, action: _Action, msg: MsgContext) -> None:
        self._store = store
        self._action = action
        self.msg = msg
        self._steps = 0

    def _charge(self) -> None:
        if self._steps + 1 > self.msg.gas_limit:
            raise OutOfGas()
        self._steps += 1

    def read(self, contract: str, variable: str, map_key=None):
        self._charge()
        return self._store.sread(self._action, StorageKey(contract, variable, map_key))

    def write(self, contract: str, variable: str, map_key, value) -> None:
        self._charge()
        self._store.swrite(self._action, StorageKey(contract, variable, map_key), value)

    def delete(self, contract: str, variable: str, map_key=None) -> None:
        self._charge()
        self._store.sdelete(self._action, StorageKey(contract, variable, map_key))

    def meta(self, contract: str, name: bytes):
        return self._store.read_meta(contract, name)

    def call(self, contract: str, function: str, args, value: int = 0) -> bool:
        store = self._store
        child = store.begin_action(self._action.tx_id, parent=self._action)
        saved_action, saved_msg = self._action, self.msg
        self._action = child
        self.msg = MsgContext(saved_msg.sender, value, saved_msg.gas_limit)
        try:
            dispatch(self, contract, function, args)
        except Revert:
            self._action, self.msg = saved_action, saved_msg
            store.absorb_aborted_child(child)
            return False
        except OutOfGas:
            self._action, self.msg = saved_action, saved_msg
            store.absorb_aborted_child(child)
            raise
        except AbortRetry:
            self._action, self.msg = saved_action, saved_msg
            store.abort(child)
            raise
        self._action, self.msg = saved_action, saved_msg
        store.commit(child)
        return True


class _ReplayHandle(_ShimHandle):
    """Overlay handle that also records which keys the code touched."""

    __slots__ = ("touched",)

    def __init__(self, state, msg) -> None:
        super().__init__(state, msg)
        self.touched: Dict[StorageKey, None] = {}

    # touches are recorded only after the operation succeeds: an op that
    # dies on gas never acquired its lock in the miner either, so it must
    # not appear in the replay trace

    def read(self, contract: str, variable: str, map_key=None):
        value = super().read(contract, variable, map_key)
        self.touched.setdefault(StorageKey(contract, variable, map_key))
        return value

    def write(self, contract: str, variable: str, map_key, value) -> None:
        super().write(contract, variable, map_key, value)
        self.touched.setdefault(StorageKey(contract, variable, map_key))

    def delete(self, contract: str, variable: str, map_key=None) -> None:
        super().delete(contract, variable, map_key)
        self.touched.setdefault(StorageKey(contract, variable, map_key))


# ---------------------------------------------------------------------------
# the engine-facing store handle


class PureStoreHandle:
    def __init__(self, state: Dict, workers: int = 1, record_events: bool = False) -> None:
        self.workers = max(1, workers)
        self.store = PureStore(state, record_events=record_events)

    # -- serial -----------------------------------------------------------

    def run_serial(self, txs) -> SerialResult:
        return SerialResult([apply_tx(self.store._state, tx) for tx in txs])

    # -- speculative mining -------------------------------------------------

    def _run_tx_spec(self, tx, worker: int):
        store = self.store
        attempts = 0
        while True:
            root = store.begin_action(tx.tx_id, None, worker=worker)
            handle = _SpecHandle(store, root, tx.msg)
            try:
                dispatch(handle, tx.contract, tx.function, tx.args)
            except Revert:
                return TxStatus.REVERTED, store.finish_reverted(root), attempts
            except OutOfGas:
                return TxStatus.OUT_OF_GAS, store.finish_out_of_gas(root), attempts
            except AbortRetry:
                store.abort(root)
                attempts += 1
                continue
            return TxStatus.COMMITTED, store.commit(root), attempts

    def run_mine(self, txs) -> MineResult:
        n = len(txs)
        self.store.reset_block_counters()
        statuses: List = [None] * n
        profiles: List = [None] * n
        retries = [0] * n
        if self.workers == 1 or n <= 1:
            for i, tx in enumerate(txs):
                statuses[i], profiles[i], retries[i] = self._run_tx_spec(tx, 0)
            return MineResult(statuses, profiles, retries)

        take = threading.Lock()
        cursor = [0]

        def worker_main(wid: int) -> None:
            while True:
                with take:
                    i = cursor[0]
                    cursor[0] += 1
                if i >= n:
                    return
                statuses[i], profiles[i], retries[i] = self._run_tx_spec(txs[i], wid)

        threads = [threading.Thread(target=worker_main, args=(w,)) for w in range(self.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return MineResult(statuses, profiles, retries)

    # -- replay -------------------------------------------------------------

    def _run_tx_replay(self, tx):
        handle = _ReplayHandle(self.store._state, tx.msg)
        status = apply_tx(self.store._state, tx, handle)
        return status, list(handle.touched)

    def run_replay(self, txs, preds) -> ReplayResult:
        n = len(txs)
        statuses: List = [None] * n
        traces: List = [None] * n
        indeg = [len(p) for p in preds]
        succs: List[List[int]] = [[] for _ in range(n)]
        for v, ps in enumerate(preds):
            for u in ps:
                succs[u].append(v)
        ready: List[int] = [i for i in range(n) if indeg[i] == 0]
        heapify(ready)
        if self.workers == 1 or n <= 1:
            while ready:
                i = heappop(ready)
                statuses[i], traces[i] = self._run_tx_replay(txs[i])
                for s in succs[i]:
                    indeg[s] -= 1
                    if indeg[s] == 0:
                        heappush(ready, s)
            return ReplayResult(statuses, traces)

        cv = threading.Condition()
        done = [0]

        def worker_main() -> None:
            while True:
                with cv:
                    while not ready and done[0] < n:
                        cv.wait()
                    if not ready and done[0] >= n:
                        return
                    i = heappop(ready)
                statuses[i], traces[i] = self._run_tx_replay(txs[i])
                with cv:
                    done[0] += 1
                    for s in succs[i]:
                        indeg[s] -= 1
                        if indeg[s] == 0:
                            heappush(ready, s)
                    cv.notify_all()

        threads = [threading.Thread(target=worker_main) for _ in range(self.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return ReplayResult(statuses, traces)

    # -- shared ---------------------------------------------------------------

    def snapshot(self) -> Dict:
        return dict(self.store._state)

    def events(self) -> List[Event]:
        return list(self.store.events)


class PureEngine:
    name = "pure"
    parallel = False  # CPython threads share the interpreter lock

    @staticmethod
    def load(state, workers: int = 1, record_events: bool = False) -> PureStoreHandle:
        return PureStoreHandle(state, workers=workers, record_events=record_events)
