"""Simulated BLE advertisement frames carrying one EphID share.

Frame layout::

    mac (6) | eph_hash (3) | share_index (1) | share_payload (element_len)

The protocol payload after the MAC is 20 bytes for 16-byte EphIDs, inside
the 31-byte legacy advertising budget. 32-byte EphIDs give a 36-byte
payload, which only the simulated channel accepts.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)

MAC_LEN = 6
HASH_LEN = 3
LEGACY_ADV_BUDGET = 31


class CodecError(ValueError):
    pass


class FieldLength(CodecError):
    pass


class BadLength(CodecError):
    pass


def truncated_ephid_hash(ephid) -> bytes:
    """First 3 bytes of SHA-256 over the EphID encoding (bytes or GroupElement)."""
    encoded = getattr(ephid, "encoded", ephid)
    return hashlib.sha256(encoded).digest()[:HASH_LEN]


@dataclass(frozen=True)
class Advertisement:
    mac: bytes
    eph_hash: bytes
    share_index: int
    share_payload: bytes

    @property
    def payload_len(self) -> int:
        return HASH_LEN + 1 + len(self.share_payload)


def frame_len(element_len: int = 16) -> int:
    return MAC_LEN + HASH_LEN + 1 + element_len


_warned = set()


def encode(adv: Advertisement) -> bytes:
    if len(adv.mac) != MAC_LEN:
        raise FieldLength(f"mac must be {MAC_LEN} bytes")
    if len(adv.eph_hash) != HASH_LEN:
        raise FieldLength(f"eph_hash must be {HASH_LEN} bytes")
    if not 1 <= adv.share_index <= 255:
        raise FieldLength("share_index must fit one non-zero byte")
    if len(adv.share_payload) not in (16, 32):
        raise FieldLength("share_payload must be 16 or 32 bytes")
    if adv.payload_len > LEGACY_ADV_BUDGET and len(adv.share_payload) not in _warned:
        _warned.add(len(adv.share_payload))
        log.warning("advertisement payload of %d bytes exceeds the %d-byte legacy "
                    "budget; accepted on the simulated channel only",
                    adv.payload_len, LEGACY_ADV_BUDGET)
    return adv.mac + adv.eph_hash + bytes([adv.share_index]) + adv.share_payload


def decode(data: bytes, element_len: int = 16) -> Advertisement:
    if len(data) != frame_len(element_len):
        raise BadLength(f"expected {frame_len(element_len)} bytes, got {len(data)}")
    index = data[9]
    if index == 0:
        raise CodecError("share index 0 is reserved")
    return Advertisement(
        mac=bytes(data[:6]),
        eph_hash=bytes(data[6:9]),
        share_index=index,
        share_payload=bytes(data[10:]),
    )
