"""Prime-order groups for ephemeral IDs and Diffie-Hellman encounter IDs.

Two named groups are provided. ``WIRE`` works modulo a 128-bit safe prime so
that an EphID fits the 16-byte advertisement slot; it is simulation grade and
must not be mistaken for a secure parameter choice. ``HARDENED`` uses a
256-bit safe prime with 32-byte elements.

Both use the subgroup of quadratic residues (order q = (p - 1) / 2) generated
by 4. Elements are encoded big-endian, zero-padded to ``element_len`` bytes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field


class InvalidElement(ValueError):
    """Raised when bytes or an integer are not a member of the group."""


@dataclass(frozen=True)
class GroupParams:
    name: str
    p: int
    g: int
    order: int
    element_len: int

    def __post_init__(self):
        if self.element_len not in (16, 32):
            raise ValueError(f"element_len must be 16 or 32, got {self.element_len}")
        if self.p.bit_length() > 8 * self.element_len:
            raise ValueError("modulus does not fit element_len bytes")
        if pow(self.g, self.order, self.p) != 1 or self.g in (0, 1):
            raise ValueError("generator does not have the declared order")


# largest safe primes below 2**128 and 2**256
WIRE = GroupParams(
    name="modp128-wire",
    p=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFC3A7,
    g=4,
    order=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFC3A7 >> 1,
    element_len=16,
)
HARDENED = GroupParams(
    name="modp256-hardened",
    p=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF72EF,
    g=4,
    order=0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF72EF >> 1,
    element_len=32,
)

GROUPS = {WIRE.name: WIRE, HARDENED.name: HARDENED}


@dataclass(frozen=True)
class Scalar:
    value: int
    params: GroupParams = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.value < self.params.order:
            raise ValueError("scalar out of range")

    def __repr__(self):
        # never leak the exponent through logs or reprs
        return f"Scalar(<{self.params.name}>)"


@dataclass(frozen=True)
class GroupElement:
    encoded: bytes
    params: GroupParams = field(repr=False, compare=False)

    @classmethod
    def from_int(cls, value: int, params: GroupParams) -> "GroupElement":
        if not 0 < value < params.p or pow(value, params.order, params.p) != 1:
            raise InvalidElement("value is not in the group")
        return cls(value.to_bytes(params.element_len, "big"), params)

    @classmethod
    def decode(cls, data: bytes, params: GroupParams) -> "GroupElement":
        if len(data) != params.element_len:
            raise InvalidElement(
                f"expected {params.element_len} bytes, got {len(data)}")
        return cls.from_int(int.from_bytes(data, "big"), params)

    @property
    def value(self) -> int:
        return int.from_bytes(self.encoded, "big")


@dataclass(frozen=True)
class EncId:
    digest: bytes

    def __repr__(self):
        return "EncId(<redacted>)"


def random_scalar(params: GroupParams, rng) -> Scalar:
    """Rejection-sample a scalar in [1, order - 1] from ``rng.getrandbits``."""
    bits = params.order.bit_length()
    while True:
        x = rng.getrandbits(bits)
        if 1 <= x < params.order:
            return Scalar(x, params)


def public_element(secret: Scalar) -> GroupElement:
    params = secret.params
    return GroupElement.from_int(pow(params.g, secret.value, params.p), params)


def keygen(params: GroupParams, rng) -> tuple[Scalar, GroupElement]:
    x = random_scalar(params, rng)
    return x, public_element(x)


def dh(secret: Scalar, peer: GroupElement) -> GroupElement:
    params = secret.params
    # re-validate: peer may come from an untrusted reconstruction
    peer = GroupElement.decode(peer.encoded, params)
    return GroupElement.from_int(pow(peer.value, secret.value, params.p), params)


def derive_encid(secret: Scalar, peer_ephid: GroupElement) -> EncId:
    shared = dh(secret, peer_ephid)
    return EncId(hashlib.sha256(shared.encoded).digest())
