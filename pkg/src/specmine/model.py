"""Core value, key, transaction, and block types shared by every layer.

Storage values are plain Python scalars: ``int`` (signed 64-bit range),
``bool``, :class:`Address` (a 20-byte ``bytes`` subclass), or ``bytes``.
An absent storage slot is represented by ``None`` where an API needs to
say "nothing there"; the state mapping itself simply omits the key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1
MAX_BYTES_LEN = 32  # longest storable byte string (names, document ids)

DEFAULT_GAS_LIMIT = 10_000

# Pseudo-variable for immutable layout constants (proposal counts and the
# like).  Entries under it are ordinary state for serialization and digest
# purposes but engines never lock, log, or charge gas for them, and they
# may not be written by transactions.
META_VARIABLE = "@meta"


class Address(bytes):
    """A 20-byte account identifier. Compares and hashes as bytes."""

    def __new__(cls, data: bytes) -> "Address":
        if len(data) != 20:
            raise ValueError(f"address must be 20 bytes, got {len(data)}")
        return super().__new__(cls, data)

    @classmethod
    def from_int(cls, n: int) -> "Address":
        """Deterministic test/workload helper: the integer, big-endian."""
        return cls(n.to_bytes(20, "big"))

    def hex20(self) -> str:
        return self.hex()

    def __repr__(self) -> str:  # keep debug output short
        return f"Address({self.hex()})"


Value = Union[int, bool, Address, bytes]
MapKey = Union[int, Address, bytes]


def check_value(v: Value) -> Value:
    """Validate a storable value; returns it unchanged."""
    if isinstance(v, bool) or isinstance(v, Address):
        return v
    if isinstance(v, bytes):
        if len(v) > MAX_BYTES_LEN:
            raise ValueError(f"byte string longer than {MAX_BYTES_LEN} bytes")
        return v
    if isinstance(v, int):
        if not (INT64_MIN <= v <= INT64_MAX):
            raise ValueError(f"integer out of 64-bit range: {v}")
        return v
    raise TypeError(f"not a storable value: {v!r}")


class StorageKey(NamedTuple):
    """Names one storage slot: contract, variable, optional map key."""

    contract: str
    variable: str
    map_key: Optional[MapKey] = None


State = Dict[StorageKey, Value]


class TxStatus(enum.Enum):
    COMMITTED = "Committed"
    REVERTED = "Reverted"
    OUT_OF_GAS = "OutOfGas"


@dataclass(frozen=True)
class MsgContext:
    sender: Address
    value: int = 0
    gas_limit: int = DEFAULT_GAS_LIMIT

    def __post_init__(self) -> None:
        if not 0 < self.gas_limit <= INT64_MAX:
            raise ValueError("gas_limit must be positive and fit in 64 bits")
        if not 0 <= self.value <= INT64_MAX:
            raise ValueError("msg.value must be non-negative and fit in 64 bits")


@dataclass(frozen=True)
class TxRequest:
    """One transaction: a contract function call with its message context.

    ``tx_id`` values within a block are dense indices starting at zero;
    the block serialization relies on position, so loaders re-check this.
    """

    tx_id: int
    contract: str
    function: str
    args: tuple = ()
    msg: MsgContext = field(default_factory=lambda: MsgContext(Address(b"\x00" * 20)))


# A lock profile maps each storage key the transaction held at its end
# to that key's per-block use counter value at commit time.
LockProfile = dict  # dict[StorageKey, int]


@dataclass
class HBGraph:
    """Happens-before graph over tx ids: nodes plus directed edges."""

    nodes: list  # list[int], dense tx ids
    edges: set  # set[tuple[int, int]]

    def successors(self, u: int) -> list:
        return sorted(v for (a, v) in self.edges if a == u)

    def predecessors(self, v: int) -> list:
        return sorted(u for (u, b) in self.edges if b == v)


@dataclass
class Schedule:
    """The published schedule: serial order S plus the graph H it sorts."""

    order: list  # list[int], a permutation of tx ids, topological wrt graph
    graph: HBGraph


@dataclass
class Block:
    version: int
    parent_digest: str
    pre_state_digest: str
    post_state_digest: str
    txs: list  # list[TxRequest]
    statuses: list  # list[TxStatus]
    schedule: Schedule
    profiles: list  # list[LockProfile], aligned with txs


class Verdict(enum.Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


class Reason(enum.Enum):
    DIGEST_MISMATCH = "DigestMismatch"
    STATUS_MISMATCH = "StatusMismatch"
    PROFILE_MISMATCH = "ProfileMismatch"
    RACE_DETECTED = "RaceDetected"
    MALFORMED_SCHEDULE = "MalformedSchedule"


@dataclass
class VerificationResult:
    verdict: Verdict
    reason: Optional[Reason] = None
    detail: str = ""

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


class SpecmineError(Exception):
    """Base for package-specific errors."""


class UsageError(SpecmineError):
    """API misuse: op on a dead action, commit with live children, ..."""


class QueryError(SpecmineError):
    """Read-only query on a state that cannot answer it."""


class MalformedProfilesError(SpecmineError):
    """Lock profiles that no correct miner could have produced."""


class BlockParseError(SpecmineError):
    """Unreadable or internally inconsistent block bytes."""


class ChainError(SpecmineError):
    """Chain file structure or linkage violation."""


class WorkloadError(SpecmineError):
    """Workload recipe cannot be satisfied as requested."""
