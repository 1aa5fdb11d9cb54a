"""Benchmark contracts as host-language procedures over a storage handle.

Each function body performs storage operations through a handle `h`
supplied by whichever executor is running it (serial shim, speculative
miner worker, or replay task).  The handle owns all concurrency, gas
accounting, and undo machinery; bodies are plain single-threaded code.

Storage layout (all values are scalars):
    ballot/scalars/b"chairperson"          Address
    ballot/proposals.name/<int i>          bytes
    ballot/proposals.count/<int i>         int
    ballot/voters.weight|voted|delegate|vote/<Address>
    ballot/@meta/b"proposal_count"         int   (layout constant)
    auction/scalars/b"highest_bid"         int
    auction/scalars/b"highest_bidder"      Address
    auction/pending/<Address>              int
    auction/balances/<Address>             int   (withdrawn-funds ledger)
    etherdoc/docs.exists|docs.owner/<bytes hashcode>
    etherdoc/owned_count/<Address>         int
    etherdoc/@meta/b"creator"              Address (layout constant)

Compound assignments pin their operation order: for ``target += addend``
the addend cells are read first, then the target is read, then written.
Both engines replicate these orders instruction for instruction.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from .model import (
    Address,
    INT64_MAX,
    INT64_MIN,
    MapKey,
    MAX_BYTES_LEN,
    StorageKey,
    TxRequest,
    TxStatus,
    META_VARIABLE,
    QueryError,
    UsageError,
    Value,
    check_value,
)

BALLOT = "ballot"
AUCTION = "auction"
ETHERDOC = "etherdoc"
COMBO = "combo"

SCALARS = "scalars"


class Revert(Exception):
    """Application-level throw: the executor undoes the action's effects."""


class OutOfGas(Exception):
    """Raised by handles when the step budget is exhausted."""


# ---------------------------------------------------------------------------
# argument checking (a malformed call reverts, like a failed ABI decode)


def _need_int(a) -> int:
    # bounds match the storable value domain, so a decoded argument can
    # always be written back to storage
    if isinstance(a, bool) or not isinstance(a, int):
        raise Revert("integer argument required")
    if not (INT64_MIN <= a <= INT64_MAX):
        raise Revert("integer argument out of range")
    return a


def _need_addr(a) -> Address:
    if not isinstance(a, Address):
        raise Revert("address argument required")
    return a


def _need_bytes(a) -> bytes:
    if isinstance(a, Address) or not isinstance(a, bytes):
        raise Revert("byte-string argument required")
    if len(a) > MAX_BYTES_LEN:
        raise Revert("byte-string argument too long")
    return a


def _arity(args, n: int):
    if len(args) != n:
        raise Revert(f"expected {n} argument(s), got {len(args)}")


def _as_bool(v: Optional[Value]) -> bool:
    return bool(v) if v is not None else False


def _as_int(v: Optional[Value]) -> int:
    return v if isinstance(v, int) and not isinstance(v, bool) else 0


# ---------------------------------------------------------------------------
# Ballot


def ballot_give_right(h, args):
    (voter,) = (_need_addr(a) for a in _check1(args))
    chair = h.read(BALLOT, SCALARS, b"chairperson")
    if chair != h.msg.sender:
        raise Revert("only the chairperson grants voting rights")
    # short-circuit: the voted cell is read only when the sender check passed
    if _as_bool(h.read(BALLOT, "voters.voted", voter)):
        raise Revert("voter already voted")
    h.write(BALLOT, "voters.weight", voter, 1)


def _check1(args):
    _arity(args, 1)
    return args


def _ballot_vote(h, proposal: int):
    sender = h.msg.sender
    if _as_bool(h.read(BALLOT, "voters.voted", sender)):
        raise Revert("already voted")
    h.write(BALLOT, "voters.voted", sender, True)
    h.write(BALLOT, "voters.vote", sender, proposal)
    # the bounds check models the array access itself: free, but the two
    # writes above are already on the undo log if it fails
    nprop = _as_int(h.meta(BALLOT, b"proposal_count"))
    if not 0 <= proposal < nprop:
        raise Revert("proposal index out of range")
    w = _as_int(h.read(BALLOT, "voters.weight", sender))
    cnt = _as_int(h.read(BALLOT, "proposals.count", proposal))
    h.write(BALLOT, "proposals.count", proposal, cnt + w)


def ballot_vote(h, args):
    _arity(args, 1)
    _ballot_vote(h, _need_int(args[0]))


def ballot_delegate(h, args):
    _arity(args, 1)
    to = _need_addr(args[0])
    sender = h.msg.sender
    if _as_bool(h.read(BALLOT, "voters.voted", sender)):
        raise Revert("already voted")
    if to == sender:
        raise Revert("self-delegation is not allowed")
    # walk the delegation chain; every hop is one charged read, so a cycle
    # that avoids the sender runs until the gas budget kills it
    while True:
        nxt = h.read(BALLOT, "voters.delegate", to)
        if nxt is None:
            break
        to = nxt
        if to == sender:
            raise Revert("delegation loop reaches sender")
    h.write(BALLOT, "voters.voted", sender, True)
    h.write(BALLOT, "voters.delegate", sender, to)
    if _as_bool(h.read(BALLOT, "voters.voted", to)):
        # target already voted: credit their proposal directly.  A target
        # that delegated has no vote index; it reads as 0 here, exactly as
        # an unset struct field would.
        dvote = _as_int(h.read(BALLOT, "voters.vote", to))
        nprop = _as_int(h.meta(BALLOT, b"proposal_count"))
        if not 0 <= dvote < nprop:
            raise Revert("delegate vote index out of range")
        w = _as_int(h.read(BALLOT, "voters.weight", sender))
        cnt = _as_int(h.read(BALLOT, "proposals.count", dvote))
        h.write(BALLOT, "proposals.count", dvote, cnt + w)
    else:
        w = _as_int(h.read(BALLOT, "voters.weight", sender))
        tw = _as_int(h.read(BALLOT, "voters.weight", to))
        h.write(BALLOT, "voters.weight", to, tw + w)


# ---------------------------------------------------------------------------
# SimpleAuction


def _auction_bid(h, amount: int):
    hb = _as_int(h.read(AUCTION, SCALARS, b"highest_bid"))
    if amount <= hb:
        raise Revert("bid does not beat the current highest")
    prev = h.read(AUCTION, SCALARS, b"highest_bidder")
    if prev is not None:
        pend = _as_int(h.read(AUCTION, "pending", prev))
        h.write(AUCTION, "pending", prev, pend + hb)
    h.write(AUCTION, SCALARS, b"highest_bidder", h.msg.sender)
    h.write(AUCTION, SCALARS, b"highest_bid", amount)


def auction_bid(h, args):
    _arity(args, 0)
    _auction_bid(h, h.msg.value)


def auction_bid_plus_one(h, args):
    _arity(args, 0)
    hb = _as_int(h.read(AUCTION, SCALARS, b"highest_bid"))
    amount = hb + 1
    prev = h.read(AUCTION, SCALARS, b"highest_bidder")
    if prev is not None:
        pend = _as_int(h.read(AUCTION, "pending", prev))
        h.write(AUCTION, "pending", prev, pend + hb)
    h.write(AUCTION, SCALARS, b"highest_bidder", h.msg.sender)
    h.write(AUCTION, SCALARS, b"highest_bid", amount)


def auction_withdraw(h, args):
    _arity(args, 0)
    sender = h.msg.sender
    amount = _as_int(h.read(AUCTION, "pending", sender))
    if amount == 0:
        return  # nothing owed: commits without further effect
    h.write(AUCTION, "pending", sender, 0)
    bal = _as_int(h.read(AUCTION, "balances", sender))
    h.write(AUCTION, "balances", sender, bal + amount)


# ---------------------------------------------------------------------------
# EtherDoc


def etherdoc_create(h, args):
    _arity(args, 1)
    hashcode = _need_bytes(args[0])
    if _as_bool(h.read(ETHERDOC, "docs.exists", hashcode)):
        raise Revert("document already registered")
    h.write(ETHERDOC, "docs.exists", hashcode, True)
    h.write(ETHERDOC, "docs.owner", hashcode, h.msg.sender)


def etherdoc_exists(h, args):
    _arity(args, 1)
    h.read(ETHERDOC, "docs.exists", _need_bytes(args[0]))


def etherdoc_transfer(h, args):
    _arity(args, 2)
    hashcode = _need_bytes(args[0])
    new_owner = _need_addr(args[1])
    if not _as_bool(h.read(ETHERDOC, "docs.exists", hashcode)):
        raise Revert("no such document")
    owner = h.read(ETHERDOC, "docs.owner", hashcode)
    if owner != h.msg.sender:
        raise Revert("only the owner transfers a document")
    h.write(ETHERDOC, "docs.owner", hashcode, new_owner)
    cnt = _as_int(h.read(ETHERDOC, "owned_count", new_owner))
    h.write(ETHERDOC, "owned_count", new_owner, cnt + 1)


# ---------------------------------------------------------------------------
# Combo: cross-contract calls through a nested speculative action


def combo_vote_then_bid(h, args):
    _arity(args, 2)
    proposal = _need_int(args[0])
    amount = _need_int(args[1])
    if amount < 0:
        raise Revert("negative bid amount")
    # the auction leg runs nested: if the bid loses, its effects are undone
    # and this transaction still commits its vote
    h.call(AUCTION, "bid", (), value=amount)
    _ballot_vote(h, proposal)


def combo_vote_then_withdraw(h, args):
    _arity(args, 1)
    proposal = _need_int(args[0])
    h.call(AUCTION, "withdraw", ())
    _ballot_vote(h, proposal)


FUNCTIONS = {
    (BALLOT, "give_right"): ballot_give_right,
    (BALLOT, "vote"): ballot_vote,
    (BALLOT, "delegate"): ballot_delegate,
    (AUCTION, "bid"): auction_bid,
    (AUCTION, "bid_plus_one"): auction_bid_plus_one,
    (AUCTION, "withdraw"): auction_withdraw,
    (ETHERDOC, "create"): etherdoc_create,
    (ETHERDOC, "exists"): etherdoc_exists,
    (ETHERDOC, "transfer"): etherdoc_transfer,
    (COMBO, "vote_then_bid"): combo_vote_then_bid,
    (COMBO, "vote_then_withdraw"): combo_vote_then_withdraw,
}


def dispatch(h, contract: str, function: str, args) -> None:
    body = FUNCTIONS.get((contract, function))
    if body is None:
        raise Revert(f"unknown function {contract}.{function}")
    body(h, args)


# ---------------------------------------------------------------------------
# constructors (setup is not transactional: they build the initial state)


def init_ballot(state: Dict[StorageKey, Value], chairperson: Address, proposal_names: List[bytes]) -> None:
    meta = StorageKey(BALLOT, META_VARIABLE, b"proposal_count")
    if meta in state:
        raise UsageError("ballot already initialized")
    if not proposal_names:
        raise UsageError("a ballot needs at least one proposal")
    for name in proposal_names:
        if len(name) > 32:
            raise UsageError("proposal names are limited to 32 bytes")
    state[StorageKey(BALLOT, SCALARS, b"chairperson")] = chairperson
    for i, name in enumerate(proposal_names):
        state[StorageKey(BALLOT, "proposals.name", i)] = name
        state[StorageKey(BALLOT, "proposals.count", i)] = 0
    state[meta] = len(proposal_names)


def init_etherdoc(state: Dict[StorageKey, Value], creator: Address) -> None:
    meta = StorageKey(ETHERDOC, META_VARIABLE, b"creator")
    if meta in state:
        raise UsageError("etherdoc already initialized")
    state[meta] = creator


# ---------------------------------------------------------------------------
# read-only queries over a materialized state


def winning_proposal(state: Dict[StorageKey, Value]) -> int:
    nprop = state.get(StorageKey(BALLOT, META_VARIABLE, b"proposal_count"), 0)
    if not nprop:
        raise QueryError("no proposals")
    best, best_count = 0, 0
    for p in range(nprop):
        cnt = _as_int(state.get(StorageKey(BALLOT, "proposals.count", p)))
        if cnt > best_count:
            best, best_count = p, cnt
    return best


def winner_name(state: Dict[StorageKey, Value]) -> bytes:
    name = state.get(StorageKey(BALLOT, "proposals.name", winning_proposal(state)))
    if not isinstance(name, bytes):
        raise QueryError("winning proposal has no name")
    return name


# ---------------------------------------------------------------------------
# serial shim: run transactions against a plain dict, no locks involved.
# This doubles as the independent execution oracle in tests.

_TOMBSTONE = object()


class _ShimHandle:
    """Overlay-buffered handle over a plain state dict."""

    __slots__ = ("_state", "_layers", "msg", "_steps")

    def __init__(self, state, msg):
        self._state = state
        self._layers = [{}]
        self.msg = msg
        self._steps = 0

    # -- gas ----------------------------------------------------------
    def _charge(self):
        if self._steps + 1 > self.msg.gas_limit:
            raise OutOfGas()
        self._steps += 1

    # -- storage ops --------------------------------------------------
    def _key(self, contract, variable, map_key) -> StorageKey:
        return StorageKey(contract, variable, map_key)

    def read(self, contract: str, variable: str, map_key: Optional[MapKey] = None):
        self._charge()
        key = self._key(contract, variable, map_key)
        for layer in reversed(self._layers):
            if key in layer:
                v = layer[key]
                return None if v is _TOMBSTONE else v
        return self._state.get(key)

    def write(self, contract: str, variable: str, map_key, value: Value):
        if variable == META_VARIABLE:
            raise UsageError("layout constants are immutable")
        check_value(value)
        self._charge()
        self._layers[-1][self._key(contract, variable, map_key)] = value

    def delete(self, contract: str, variable: str, map_key: Optional[MapKey] = None):
        if variable == META_VARIABLE:
            raise UsageError("layout constants are immutable")
        self._charge()
        self._layers[-1][self._key(contract, variable, map_key)] = _TOMBSTONE

    def meta(self, contract: str, name: bytes):
        return self._state.get(StorageKey(contract, META_VARIABLE, name))

    # -- nested calls ---------------------------------------------------
    def call(self, contract: str, function: str, args, value: int = 0) -> bool:
        saved_msg = self.msg
        self.msg = type(saved_msg)(saved_msg.sender, value, saved_msg.gas_limit)
        self._layers.append({})
        try:
            dispatch(self, contract, function, args)
        except Revert:
            self._layers.pop()
            return False
        finally:
            self.msg = saved_msg
        merged = self._layers.pop()
        self._layers[-1].update(merged)
        return True


def apply_tx(state: Dict[StorageKey, Value], tx: TxRequest, h: Optional[_ShimHandle] = None) -> TxStatus:
    """Execute one transaction in place; the state dict is the whole world.

    A caller may supply its own (subclassed) handle to observe the run.
    """
    if h is None:
        h = _ShimHandle(state, tx.msg)
    try:
        dispatch(h, tx.contract, tx.function, tx.args)
    except Revert:
        return TxStatus.REVERTED
    except OutOfGas:
        return TxStatus.OUT_OF_GAS
    (layer,) = h._layers
    for key, value in layer.items():
        if value is _TOMBSTONE:
            state.pop(key, None)
        else:
            state[key] = value
    return TxStatus.COMMITTED


def run_serial_shim(state: Dict[StorageKey, Value], txs) -> List[TxStatus]:
    return [apply_tx(state, tx) for tx in txs]
