"""Fixed-size Bloom filters used as daily, contact and query filters.

Bit ``j`` of a filter lives in byte ``j // 8`` at position ``j % 8``
(LSB first), which is also the layout of the serialized body. The same
bytes read as a little-endian integer give the bitset as a Python int,
used for the fast OR/AND paths.

Wire format ("DIMB")::

    magic "DIMB" | version 0x01 | m (u32 BE) | k (u8) | role (u8) | body
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass

MAGIC = b"DIMB"
VERSION = 1
HEADER = struct.Struct(">4sBIBB")
HEADER_LEN = HEADER.size  # 11

DEFAULT_M = 800_000  # 100 KB body
DEFAULT_K = 3


class BloomError(ValueError):
    pass


class ParamsMismatch(BloomError):
    pass


class BadMagic(BloomError):
    pass


class BadVersion(BloomError):
    pass


class LengthMismatch(BloomError):
    pass


class Role(enum.IntEnum):
    NONE = 0
    DBF = 1
    CBF = 2
    QBF = 3


@dataclass(frozen=True)
class BloomParams:
    m: int = DEFAULT_M
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.m <= 0 or self.m >= 1 << 32:
            raise ValueError(f"m must be in 1..2^32-1, got {self.m}")
        if not 1 <= self.k <= 255:
            raise ValueError(f"k must be in 1..255, got {self.k}")

    @property
    def nbytes(self) -> int:
        return (self.m + 7) // 8


DEFAULT_PARAMS = BloomParams()


def hash_pair(item: bytes) -> tuple[int, int]:
    h1 = int.from_bytes(hashlib.sha256(b"\x00" + item).digest()[:8], "big")
    h2 = int.from_bytes(hashlib.sha256(b"\x01" + item).digest()[:8], "big")
    return h1, h2


def positions(item: bytes, params: BloomParams = DEFAULT_PARAMS) -> list[int]:
    """Double hashing: ``(h1 + i * h2) mod m`` for ``i`` in ``range(k)``."""
    if not item:
        raise ValueError("item must be non-empty")
    h1, h2 = hash_pair(item)
    return [(h1 + i * h2) % params.m for i in range(params.k)]


def fpr_estimate(params: BloomParams, n: int) -> float:
    """Standard approximation ``(1 - exp(-k n / m)) ** k``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return (1.0 - math.exp(-params.k * n / params.m)) ** params.k


def intersection_fpr(t: int, params: BloomParams) -> float:
    """Per-item false-positive probability of an intersection with ``t`` set bits."""
    return (t / params.m) ** params.k


class BloomFilter:
    """Bloom filter over byte-string items.

    Single writer; concurrent readers are fine as long as nobody inserts.
    """

    __slots__ = ("params", "role", "_bits")

    def __init__(self, params: BloomParams = DEFAULT_PARAMS, role: Role = Role.NONE,
                 bits: bytes | bytearray | None = None):
        self.params = params
        self.role = Role(role)
        if bits is None:
            self._bits = bytearray(params.nbytes)
        else:
            if len(bits) != params.nbytes:
                raise LengthMismatch(
                    f"expected {params.nbytes} body bytes, got {len(bits)}")
            self._bits = bytearray(bits)

    # -- element operations

    def insert(self, item: bytes) -> "BloomFilter":
        for j in positions(item, self.params):
            self._bits[j >> 3] |= 1 << (j & 7)
        return self

    add = insert

    def contains(self, item: bytes) -> bool:
        bits = self._bits
        return all(bits[j >> 3] >> (j & 7) & 1 for j in positions(item, self.params))

    __contains__ = contains

    def get_bit(self, j: int) -> bool:
        if not 0 <= j < self.params.m:
            raise IndexError(j)
        return bool(self._bits[j >> 3] >> (j & 7) & 1)

    # -- whole-filter operations

    def as_int(self) -> int:
        return int.from_bytes(self._bits, "little")

    @classmethod
    def from_int(cls, value: int, params: BloomParams, role: Role = Role.NONE) -> "BloomFilter":
        return cls(params, role, value.to_bytes(params.nbytes, "little"))

    def popcount(self) -> int:
        return self.as_int().bit_count()

    def fill_ratio(self) -> float:
        return self.popcount() / self.params.m

    def is_empty(self) -> bool:
        return not any(self._bits)

    def _check(self, other: "BloomFilter"):
        if self.params != other.params:
            raise ParamsMismatch(f"{self.params} != {other.params}")

    def union(self, other: "BloomFilter") -> "BloomFilter":
        self._check(other)
        return BloomFilter.from_int(self.as_int() | other.as_int(), self.params, self.role)

    __or__ = union

    def intersection(self, other: "BloomFilter") -> "BloomFilter":
        self._check(other)
        return BloomFilter.from_int(self.as_int() & other.as_int(), self.params, self.role)

    __and__ = intersection

    def intersect_popcount(self, other: "BloomFilter") -> int:
        self._check(other)
        return (self.as_int() & other.as_int()).bit_count()

    def with_role(self, role: Role) -> "BloomFilter":
        return BloomFilter(self.params, role, self._bits)

    def copy(self) -> "BloomFilter":
        return self.with_role(self.role)

    # -- serialization

    def body(self) -> bytes:
        return bytes(self._bits)

    def serialize(self) -> bytes:
        p = self.params
        return HEADER.pack(MAGIC, VERSION, p.m, p.k, self.role) + self._bits

    to_bytes = serialize

    @classmethod
    def deserialize(cls, data: bytes) -> "BloomFilter":
        if len(data) < HEADER_LEN:
            raise LengthMismatch("truncated header")
        magic, version, m, k, role = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BadMagic(f"bad magic {magic!r}")
        if version != VERSION:
            raise BadVersion(f"unsupported version {version}")
        try:
            params = BloomParams(m, k)
            role = Role(role)
        except ValueError as e:
            raise BloomError(str(e)) from None
        body = data[HEADER_LEN:]
        if len(body) != params.nbytes:
            raise LengthMismatch(f"expected {params.nbytes} body bytes, got {len(body)}")
        if m % 8 and body[-1] >> (m % 8):
            raise BloomError("bits set beyond m")
        return cls(params, role, body)

    from_bytes = deserialize

    # -- comparisons

    def __eq__(self, other):
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return self.params == other.params and self._bits == other._bits

    def __repr__(self):
        return (f"BloomFilter(m={self.params.m}, k={self.params.k}, "
                f"role={self.role.name}, popcount={self.popcount()})")


def union_all(filters, role: Role = Role.NONE) -> BloomFilter:
    filters = list(filters)
    if not filters:
        raise ValueError("no filters to combine")
    params = filters[0].params
    acc = 0
    for f in filters:
        if f.params != params:
            raise ParamsMismatch(f"{f.params} != {params}")
        acc |= f.as_int()
    return BloomFilter.from_int(acc, params, role)
