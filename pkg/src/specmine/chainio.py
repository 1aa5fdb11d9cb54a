"""Canonical text encodings for blocks, work files, and the chain file.

Every artifact is a flat ``key=value`` document: UTF-8, LF line endings,
one binding per line, lines sorted bytewise. Rendering the same object
always yields the same bytes, so digests and golden files are stable
across processes and platforms.

Three documents share the syntax:

* block        -- the miner/validator contract: header digests, the
                  transaction list, statuses, lock profiles, and the
                  published schedule (serial order plus dependency edges).
* work file    -- input to ``mine``: a pre-state plus a transaction list,
                  with optional free-form ``meta.*`` annotations.
* package      -- output of ``mine`` and input to ``validate``: the block
                  together with the pre-state needed to replay it.

A chain file is binary: a sequence of block records, each prefixed with
its length as an 8-byte big-endian integer. The first record's
parent_digest must equal its own pre_state_digest; every later record
must chain parent_digest = previous post_state_digest.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .canon import NAME_RE, key_canon, parse_atom, parse_key, value_atom
from .model import (
    Address,
    Block,
    BlockParseError,
    ChainError,
    HBGraph,
    MsgContext,
    Schedule,
    State,
    StorageKey,
    TxRequest,
    TxStatus,
)

_DIGEST_FIELDS = ("parent_digest", "pre_state_digest", "post_state_digest")
_TX_FIELDS = ("contract", "function", "args", "sender", "value", "gas_limit")
_LEN_STRUCT = struct.Struct(">Q")
_MAX_RECORD = 1 << 32  # sanity bound against corrupt length prefixes


@dataclass
class WorkFile:
    """A pre-state and the transactions to mine over it."""

    state: State
    txs: List[TxRequest]
    meta: Dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# line-level helpers


def _idx(i: int) -> str:
    return "%06d" % i


def _is_digest(text: str) -> bool:
    return len(text) == 64 and all(c in "0123456789abcdef" for c in text)


def _render(pairs: Iterable[Tuple[str, str]]) -> bytes:
    lines = ["%s=%s" % (k, v) for k, v in pairs]
    lines.sort()
    return ("".join(line + "\n" for line in lines)).encode("utf-8")


def _scan(data: bytes) -> Dict[str, str]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BlockParseError("document is not valid UTF-8: %s" % exc) from None
    bindings: Dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n")[:-1] if text.endswith("\n") else _bad_tail(text), 1):
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise BlockParseError("line %d: expected key=value, got %r" % (lineno, line))
        if key in bindings:
            raise BlockParseError("line %d: duplicate key %r" % (lineno, key))
        bindings[key] = value
    return bindings


def _bad_tail(text: str) -> List[str]:
    raise BlockParseError("document truncated: missing trailing newline")


def _pop(bindings: Dict[str, str], key: str) -> str:
    try:
        return bindings.pop(key)
    except KeyError:
        raise BlockParseError("missing field %r" % key) from None


def _pop_int(bindings: Dict[str, str], key: str) -> int:
    raw = _pop(bindings, key)
    try:
        return int(raw, 10)
    except ValueError:
        raise BlockParseError("field %r: not a decimal integer: %r" % (key, raw)) from None


def _parse_args(raw: str, where: str) -> Tuple:
    if raw == "":
        return ()
    out = []
    for part in raw.split(","):
        try:
            out.append(parse_atom(part))
        except ValueError as exc:
            raise BlockParseError("%s: bad argument %r: %s" % (where, part, exc)) from None
    return tuple(out)


def _parse_txs(bindings: Dict[str, str], count: int) -> List[TxRequest]:
    txs: List[TxRequest] = []
    for i in range(count):
        prefix = "tx.%s." % _idx(i)
        raw = {f: _pop(bindings, prefix + f) for f in _TX_FIELDS}
        for name_field in ("contract", "function"):
            if not NAME_RE.match(raw[name_field]):
                raise BlockParseError(
                    "field %r: invalid name %r" % (prefix + name_field, raw[name_field])
                )
        try:
            sender = parse_atom(raw["sender"])
        except ValueError as exc:
            raise BlockParseError("field %r: %s" % (prefix + "sender", exc)) from None
        if not isinstance(sender, Address):
            raise BlockParseError("field %r: sender must be an address atom" % (prefix + "sender"))
        try:
            value = int(raw["value"], 10)
            gas_limit = int(raw["gas_limit"], 10)
        except ValueError:
            raise BlockParseError("field %r: value/gas_limit must be decimal" % prefix) from None
        try:
            msg = MsgContext(sender, value, gas_limit)
            txs.append(
                TxRequest(i, raw["contract"], raw["function"], _parse_args(raw["args"], prefix), msg)
            )
        except ValueError as exc:
            raise BlockParseError("field %r: %s" % (prefix, exc)) from None
    return txs


def _tx_pairs(txs: List[TxRequest]) -> List[Tuple[str, str]]:
    pairs: List[Tuple[str, str]] = []
    for i, tx in enumerate(txs):
        if tx.tx_id != i:
            raise ValueError("tx ids must be dense from 0; position %d holds tx %d" % (i, tx.tx_id))
        prefix = "tx.%s." % _idx(i)
        pairs.append((prefix + "contract", tx.contract))
        pairs.append((prefix + "function", tx.function))
        pairs.append((prefix + "args", ",".join(value_atom(a) for a in tx.args)))
        pairs.append((prefix + "sender", value_atom(tx.msg.sender)))
        pairs.append((prefix + "value", str(tx.msg.value)))
        pairs.append((prefix + "gas_limit", str(tx.msg.gas_limit)))
    return pairs


def _state_pairs(state: State) -> List[Tuple[str, str]]:
    return [("state." + key_canon(k), value_atom(v)) for k, v in state.items()]


def _take_state(bindings: Dict[str, str]) -> State:
    state: State = {}
    for key in [k for k in bindings if k.startswith("state.")]:
        raw = bindings.pop(key)
        try:
            skey = parse_key(key[len("state."):])
            state[skey] = parse_atom(raw)
        except ValueError as exc:
            raise BlockParseError("field %r: %s" % (key, exc)) from None
    return state


def _reject_leftovers(bindings: Dict[str, str]) -> None:
    if bindings:
        raise BlockParseError("unknown field %r" % sorted(bindings)[0])


# ---------------------------------------------------------------------------
# blocks


def _block_pairs(block: Block) -> List[Tuple[str, str]]:
    n = len(block.txs)
    if len(block.statuses) != n or len(block.profiles) != n:
        raise ValueError("statuses/profiles must align with txs")
    pairs: List[Tuple[str, str]] = [
        ("version", str(block.version)),
        ("tx_count", str(n)),
    ]
    for fname in _DIGEST_FIELDS:
        digest = getattr(block, fname)
        if not _is_digest(digest):
            raise ValueError("%s is not a lowercase sha-256 hex digest" % fname)
        pairs.append((fname, digest))
    pairs.extend(_tx_pairs(block.txs))
    for i, status in enumerate(block.statuses):
        pairs.append(("status." + _idx(i), status.value))
    for i, profile in enumerate(block.profiles):
        entries = sorted((key_canon(k), c) for k, c in profile.items())
        pairs.append(("profile." + _idx(i), ";".join("%s:%d" % e for e in entries)))
    pairs.append(("schedule.order", ",".join(str(t) for t in block.schedule.order)))
    for j, (u, v) in enumerate(sorted(block.schedule.graph.edges)):
        pairs.append(("schedule.edge." + _idx(j), "%d>%d" % (u, v)))
    return pairs


def serialize_block(block: Block) -> bytes:
    """Render a block to its canonical byte encoding."""
    return _render(_block_pairs(block))


def _parse_block_bindings(bindings: Dict[str, str]) -> Block:
    version = _pop_int(bindings, "version")
    if version != 1:
        raise BlockParseError("unknown version %d" % version)
    count = _pop_int(bindings, "tx_count")
    if count < 0:
        raise BlockParseError("tx_count must be non-negative")
    digests = {}
    for fname in _DIGEST_FIELDS:
        raw = _pop(bindings, fname)
        if not _is_digest(raw):
            raise BlockParseError("field %r: not a lowercase sha-256 hex digest" % fname)
        digests[fname] = raw
    txs = _parse_txs(bindings, count)

    statuses: List[TxStatus] = []
    for i in range(count):
        raw = _pop(bindings, "status." + _idx(i))
        try:
            statuses.append(TxStatus(raw))
        except ValueError:
            raise BlockParseError("field %r: unknown status %r" % ("status." + _idx(i), raw)) from None

    profiles: List[Dict[StorageKey, int]] = []
    for i in range(count):
        key = "profile." + _idx(i)
        raw = _pop(bindings, key)
        profile: Dict[StorageKey, int] = {}
        if raw:
            for entry in raw.split(";"):
                canon_key, sep, counter = entry.rpartition(":")
                if not sep:
                    raise BlockParseError("field %r: bad entry %r" % (key, entry))
                try:
                    skey = parse_key(canon_key)
                    profile[skey] = int(counter, 10)
                except ValueError as exc:
                    raise BlockParseError("field %r: bad entry %r: %s" % (key, entry, exc)) from None
                if profile[skey] < 1:
                    raise BlockParseError("field %r: counter must be >= 1" % key)
        profiles.append(profile)

    raw_order = _pop(bindings, "schedule.order")
    try:
        order = [int(t, 10) for t in raw_order.split(",")] if raw_order else []
    except ValueError:
        raise BlockParseError("field 'schedule.order': not a comma-separated id list") from None

    edges = set()
    edge_keys = sorted(k for k in bindings if k.startswith("schedule.edge."))
    for j, key in enumerate(edge_keys):
        if key != "schedule.edge." + _idx(j):
            raise BlockParseError("schedule edges must be indexed densely; got %r" % key)
        raw = bindings.pop(key)
        u_s, sep, v_s = raw.partition(">")
        try:
            if not sep:
                raise ValueError
            edges.add((int(u_s, 10), int(v_s, 10)))
        except ValueError:
            raise BlockParseError("field %r: expected u>v, got %r" % (key, raw)) from None

    return Block(
        version=version,
        parent_digest=digests["parent_digest"],
        pre_state_digest=digests["pre_state_digest"],
        post_state_digest=digests["post_state_digest"],
        txs=txs,
        statuses=statuses,
        schedule=Schedule(order, HBGraph(list(range(count)), edges)),
        profiles=profiles,
    )


def parse_block(data: bytes) -> Block:
    """Parse canonical block bytes; raise BlockParseError naming the field."""
    bindings = _scan(data)
    block = _parse_block_bindings(bindings)
    _reject_leftovers(bindings)
    return block


# ---------------------------------------------------------------------------
# work files and validation packages


def serialize_work(work: WorkFile) -> bytes:
    pairs: List[Tuple[str, str]] = [
        ("version", "1"),
        ("tx_count", str(len(work.txs))),
    ]
    pairs.extend(_tx_pairs(work.txs))
    pairs.extend(_state_pairs(work.state))
    for name, text in work.meta.items():
        if not NAME_RE.match(name):
            raise ValueError("meta name %r is not a plain token" % name)
        if "\n" in text:
            raise ValueError("meta value for %r must not contain newlines" % name)
        pairs.append(("meta." + name, text))
    return _render(pairs)


def parse_work(data: bytes) -> WorkFile:
    bindings = _scan(data)
    version = _pop_int(bindings, "version")
    if version != 1:
        raise BlockParseError("unknown version %d" % version)
    count = _pop_int(bindings, "tx_count")
    txs = _parse_txs(bindings, count)
    state = _take_state(bindings)
    meta = {}
    for key in [k for k in bindings if k.startswith("meta.")]:
        meta[key[len("meta."):]] = bindings.pop(key)
    _reject_leftovers(bindings)
    return WorkFile(state, txs, meta)


def serialize_package(state: State, block: Block) -> bytes:
    """Render a block together with its pre-state (the `validate` input)."""
    return _render(_block_pairs(block) + _state_pairs(state))


def parse_package(data: bytes) -> Tuple[State, Block]:
    bindings = _scan(data)
    state = _take_state(bindings)
    block = _parse_block_bindings(bindings)
    _reject_leftovers(bindings)
    return state, block


# ---------------------------------------------------------------------------
# chain file


def _read_records(path: str) -> List[bytes]:
    records: List[bytes] = []
    with open(path, "rb") as fh:
        while True:
            header = fh.read(_LEN_STRUCT.size)
            if not header:
                return records
            if len(header) < _LEN_STRUCT.size:
                raise ChainError("record %d: truncated length prefix" % len(records))
            (length,) = _LEN_STRUCT.unpack(header)
            if length > _MAX_RECORD:
                raise ChainError("record %d: implausible length %d" % (len(records), length))
            body = fh.read(length)
            if len(body) < length:
                raise ChainError("record %d: truncated body" % len(records))
            records.append(body)


def _check_linkage(blocks: List[Block]) -> None:
    for i, block in enumerate(blocks):
        want = blocks[i - 1].post_state_digest if i else block.pre_state_digest
        if block.parent_digest != want:
            raise ChainError(
                "record %d: parent digest %s does not match %s"
                % (i, block.parent_digest, want)
            )


def load_chain(path: str) -> List[Block]:
    """Read every block record and verify the parent-digest linkage."""
    blocks: List[Block] = []
    for i, record in enumerate(_read_records(path)):
        try:
            blocks.append(parse_block(record))
        except BlockParseError as exc:
            raise ChainError("record %d: %s" % (i, exc)) from None
    _check_linkage(blocks)
    return blocks


def append_block(path: str, block: Block) -> None:
    """Append one block, enforcing the digest chain against the current tip."""
    if os.path.exists(path) and os.path.getsize(path) > 0:
        tip = load_chain(path)[-1]
        if block.parent_digest != tip.post_state_digest:
            raise ChainError(
                "parent digest %s does not extend tip %s"
                % (block.parent_digest, tip.post_state_digest)
            )
    elif block.parent_digest != block.pre_state_digest:
        raise ChainError("first block's parent digest must equal its pre-state digest")
    payload = serialize_block(block)
    with open(path, "ab") as fh:
        fh.write(_LEN_STRUCT.pack(len(payload)))
        fh.write(payload)


def chain_tip_digest(path: str) -> Optional[str]:
    """Post-state digest of the last block, or None for a missing/empty file."""
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        return None
    return load_chain(path)[-1].post_state_digest
