"""Canonical rendering and digest tests.

The two digest constants were produced with sha256sum over hand-written
line sequences, independently of the code under test.
"""

import pytest

from specmine.canon import (
    EMPTY_STATE_DIGEST,
    key_canon,
    parse_atom,
    parse_key,
    parse_state_line,
    state_digest,
    state_line,
    value_atom,
)
from specmine.model import Address, StorageKey

# printf '' | sha256sum
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

# printf 'a/x/-=i5\na/x/i7=i-12\na/y/b0102=o0\nb/owner/a…03=a…04\n' | sha256sum
SHA256_FOUR_LINES = "9f9a8d995ed846550a8baab56f90510b8430f88cd9a735129e0760a0a4b0d642"


def test_empty_state_digest_is_sha256_of_nothing():
    assert state_digest({}) == SHA256_EMPTY
    assert EMPTY_STATE_DIGEST == SHA256_EMPTY


def test_four_line_state_digest_matches_sha256sum():
    state = {
        StorageKey("a", "x"): 5,
        StorageKey("a", "y", b"\x01\x02"): False,
        StorageKey("b", "owner", Address.from_int(3)): Address.from_int(4),
        StorageKey("a", "x", 7): -12,
    }
    assert state_digest(state) == SHA256_FOUR_LINES


def test_digest_ignores_insertion_order():
    items = [
        (StorageKey("c", "v", 1), 10),
        (StorageKey("c", "v", 2), 20),
        (StorageKey("c", "w"), True),
        (StorageKey("d", "v", Address.from_int(9)), b"\xff"),
    ]
    d1 = state_digest(dict(items))
    d2 = state_digest(dict(reversed(items)))
    assert d1 == d2


def test_digest_sensitive_to_single_bit():
    base = {StorageKey("c", "v"): 64}
    assert state_digest(base) != state_digest({StorageKey("c", "v"): 65})
    assert state_digest(base) != state_digest({StorageKey("c", "w"): 64})


def test_bool_and_int_render_differently():
    assert value_atom(True) == "o1"
    assert value_atom(1) == "i1"
    assert value_atom(False) == "o0"
    assert value_atom(0) == "i0"


@pytest.mark.parametrize(
    "value",
    [0, 1, -1, 2**63 - 1, -(2**63), True, False, b"", b"\x00\xff", Address.from_int(77)],
)
def test_atom_round_trip(value):
    back = parse_atom(value_atom(value))
    assert back == value
    assert type(back) is type(value)


def test_int_out_of_range_rejected():
    with pytest.raises(ValueError):
        value_atom(2**63)
    with pytest.raises(ValueError):
        value_atom(-(2**63) - 1)


def test_address_length_enforced():
    with pytest.raises(ValueError):
        Address(b"\x01" * 19)
    with pytest.raises(ValueError):
        parse_atom("a" + "00" * 19)


@pytest.mark.parametrize(
    "key",
    [
        StorageKey("ballot", "voters.voted", Address.from_int(1)),
        StorageKey("ballot", "proposals.count", 3),
        StorageKey("auction", "scalars", b"highest_bid"),
        StorageKey("etherdoc", "docs.exists", b"\xaa\xbb"),
        StorageKey("c", "plain"),
    ],
)
def test_key_round_trip(key):
    assert parse_key(key_canon(key)) == key


def test_key_rejects_separator_characters():
    with pytest.raises(ValueError):
        key_canon(StorageKey("a/b", "v"))
    with pytest.raises(ValueError):
        key_canon(StorageKey("a", "v=w"))


def test_state_line_round_trip():
    key = StorageKey("auction", "pending", Address.from_int(5))
    line = state_line(key, 42)
    assert line.endswith("\n")
    k, v = parse_state_line(line)
    assert (k, v) == (key, 42)


def test_bool_map_key_rejected():
    with pytest.raises(ValueError):
        parse_key("c/v/o1")
