"""Canonical text forms for values, keys, and whole states.

Every digest in the system is SHA-256 over this rendering, so the rules
here are deliberately rigid: one spelling per value, bytewise-sorted
lines, no whitespace games.

Atoms:
    int      -> ``i<decimal>``          (``i-12`` for negatives)
    bool     -> ``o1`` / ``o0``
    Address  -> ``a<40 lowercase hex>``
    bytes    -> ``b<lowercase hex>``    (``b`` for empty)

A key renders as ``contract/variable/mapkey`` with ``-`` standing for
"no map key"; a state line is ``key=atom`` terminated by a newline.
"""

from __future__ import annotations

import hashlib
import re
from typing import Dict, Iterable, Optional, Tuple

from .model import Address, MapKey, StorageKey, Value, check_value

NAME_RE = re.compile(r"^[A-Za-z0-9_.@-]+$")


def _check_name(part: str, what: str) -> str:
    if not NAME_RE.match(part):
        raise ValueError(f"{what} contains characters outside [A-Za-z0-9_.@-]: {part!r}")
    return part


def value_atom(v: Value) -> str:
    """Render one storable value; rejects anything unstorable."""
    check_value(v)
    if isinstance(v, bool):
        return "o1" if v else "o0"
    if isinstance(v, Address):
        return "a" + v.hex()
    if isinstance(v, bytes):
        return "b" + v.hex()
    return f"i{v}"


def parse_atom(s: str) -> Value:
    if not s:
        raise ValueError("empty atom")
    tag, body = s[0], s[1:]
    if tag == "i":
        return check_value(int(body, 10))
    if tag == "o":
        if body == "1":
            return True
        if body == "0":
            return False
        raise ValueError(f"bad bool atom: {s!r}")
    if tag == "a":
        if len(body) != 40:
            raise ValueError(f"address atom must hold 40 hex chars: {s!r}")
        return Address(bytes.fromhex(body))
    if tag == "b":
        return check_value(bytes.fromhex(body))
    raise ValueError(f"unknown atom tag: {s!r}")


def key_canon(key: StorageKey) -> str:
    _check_name(key.contract, "contract")
    _check_name(key.variable, "variable")
    mk = key.map_key
    part = "-" if mk is None else value_atom(mk)
    return f"{key.contract}/{key.variable}/{part}"


def parse_key(s: str) -> StorageKey:
    parts = s.split("/")
    if len(parts) != 3:
        raise ValueError(f"key must have three /-separated parts: {s!r}")
    contract, variable, mk_part = parts
    _check_name(contract, "contract")
    _check_name(variable, "variable")
    mk: Optional[MapKey]
    if mk_part == "-":
        mk = None
    else:
        parsed = parse_atom(mk_part)
        if isinstance(parsed, bool):
            raise ValueError(f"bool map keys are not allowed: {s!r}")
        mk = parsed
    return StorageKey(contract, variable, mk)


def state_line(key: StorageKey, value: Value) -> str:
    return f"{key_canon(key)}={value_atom(value)}\n"


def parse_state_line(line: str) -> Tuple[StorageKey, Value]:
    if line.endswith("\n"):
        line = line[:-1]
    if "=" not in line:
        raise ValueError(f"state line lacks '=': {line!r}")
    k, _, v = line.partition("=")
    return parse_key(k), parse_atom(v)


def state_lines(state: Dict[StorageKey, Value]) -> Iterable[str]:
    """The canonical line sequence: bytewise-sorted rendered lines."""
    return sorted(state_line(k, v) for k, v in state.items())


def state_digest(state: Dict[StorageKey, Value]) -> str:
    h = hashlib.sha256()
    for line in state_lines(state):
        h.update(line.encode("ascii"))
    return h.hexdigest()


EMPTY_STATE_DIGEST = state_digest({})
