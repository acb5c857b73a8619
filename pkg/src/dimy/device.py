"""Per-device protocol state: EphID slots, share reception, daily filters.

A device always advertises two EphIDs whose 30-minute lifetimes are staggered
by 15 minutes, one share of each per minute. Received shares are grouped by
their truncated EphID hash; once 15 distinct shares of one EphID are in,
the EphID is rebuilt, checked against the hash, and combined with both of
the device's own active secrets into encounter IDs. Those go into the day's
Bloom filter and are dropped immediately.

Time is an integer minute count from midnight of ``DeviceConfig.start_date``.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Callable, Optional

from . import sss
from .ble_codec import Advertisement, truncated_ephid_hash
from .bloom import DEFAULT_PARAMS, HEADER_LEN, BloomFilter, BloomParams, Role, union_all
from .crypto import (WIRE, GroupElement, GroupParams, InvalidElement, Scalar,
                     derive_encid, keygen)

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440


class ClockRegression(ValueError):
    pass


class NoData(RuntimeError):
    pass


@dataclass(frozen=True)
class DeviceConfig:
    group: GroupParams = WIRE
    k: int = 15
    n: int = 30
    epoch: int = 30
    stagger: int = 15
    mac_period: int = 15
    retention_days: int = 21
    bloom: BloomParams = DEFAULT_PARAMS
    start_date: date = date(2021, 1, 1)
    # test-only: advertise a single EphID, reproducing the carryover failure
    dual_slot: bool = True

    def day_of(self, minute: int) -> date:
        return self.start_date + timedelta(days=minute // MINUTES_PER_DAY)


@dataclass
class EphSlot:
    secret: Scalar
    ephid: GroupElement
    eph_hash: bytes
    shares: list
    start_minute: int
    next_share: int = 0

    def age(self, now: int) -> int:
        return now - self.start_minute


@dataclass
class PendingEphId:
    eph_hash: bytes
    collected: dict = field(default_factory=dict)
    first_seen: int = 0
    last_seen: int = 0


@dataclass(frozen=True)
class EncounterRegistered:
    minute: int
    day: date
    eph_hash: bytes
    inserted: int


class Device:
    """One phone running the protocol.

    ``encid_sink`` is instrumentation for tests and simulator oracles: it is
    called with every encounter digest just before the device forgets it.
    """

    def __init__(self, rng, config: DeviceConfig = DeviceConfig(), start_minute: int = 0,
                 name: str = "", encid_sink: Optional[Callable[[bytes], None]] = None):
        self.config = config
        self.name = name
        self.rng = rng
        self.encid_sink = encid_sink
        self.clock: Optional[int] = None
        self.pending: dict[bytes, PendingEphId] = {}
        # eph_hash -> minute of successful reconstruction
        self.completed: dict[bytes, int] = {}
        self.dbf_ring: list[tuple[date, BloomFilter]] = []
        # number of digests inserted per retained day
        self.insert_counts: dict[date, int] = {}
        self.retained_qbfs: list[tuple[date, BloomFilter]] = []
        self.mac = self._new_mac()
        self.mac_since = start_minute

        self.slots = [self._new_slot(start_minute)]
        if config.dual_slot:
            # second slot starts half an epoch earlier, already mid-broadcast
            late = self._new_slot(start_minute - config.stagger)
            late.next_share = config.stagger
            self.slots.append(late)
        self._roll_day(start_minute)

    # -- helpers

    def _new_mac(self) -> bytes:
        mac = bytearray(self.rng.getrandbits(48).to_bytes(6, "big"))
        # locally administered random static address: top two bits set
        mac[0] |= 0xC0
        return bytes(mac)

    def _new_slot(self, start: int) -> EphSlot:
        cfg = self.config
        secret, ephid = keygen(cfg.group, self.rng)
        shares = sss.split(ephid.encoded, cfg.k, cfg.n, self.rng)
        return EphSlot(secret, ephid, truncated_ephid_hash(ephid), shares, start)

    def _roll_day(self, now: int):
        today = self.config.day_of(now)
        if not self.dbf_ring or self.dbf_ring[-1][0] != today:
            self.dbf_ring.append((today, BloomFilter(self.config.bloom, Role.DBF)))
        cutoff = today - timedelta(days=self.config.retention_days)
        self.dbf_ring = [(d, f) for d, f in self.dbf_ring if d > cutoff]
        self.insert_counts = {d: self.insert_counts.get(d, 0) for d, _ in self.dbf_ring}

    @property
    def today(self) -> date:
        return self.dbf_ring[-1][0]

    @property
    def own_hashes(self) -> set:
        return {s.eph_hash for s in self.slots}

    # -- protocol operations

    def tick(self, now: int) -> list[Advertisement]:
        """Advance to minute ``now`` and return this minute's advertisements."""
        if self.clock is not None and now <= self.clock:
            raise ClockRegression(f"clock moved from {self.clock} to {now}")
        self.clock = now
        cfg = self.config
        self._roll_day(now)

        for h in [h for h, p in self.pending.items() if now - p.first_seen >= cfg.epoch]:
            del self.pending[h]
        for h in [h for h, t in self.completed.items() if now - t >= cfg.epoch]:
            del self.completed[h]

        if now - self.mac_since >= cfg.mac_period:
            self.mac = self._new_mac()
            self.mac_since = now

        adverts = []
        for i, slot in enumerate(self.slots):
            if slot.age(now) >= cfg.epoch:
                slot = self.slots[i] = self._new_slot(now)
            share = slot.shares[slot.next_share]
            slot.next_share += 1
            adverts.append(Advertisement(self.mac, slot.eph_hash, share.index, share.payload))
        return adverts

    def receive(self, adv: Advertisement, now: int) -> Optional[EncounterRegistered]:
        """File one received share; returns an event when an encounter is registered."""
        cfg = self.config
        h = adv.eph_hash
        if h in self.completed or h in self.own_hashes:
            return None
        if len(adv.share_payload) != cfg.group.element_len or not 1 <= adv.share_index <= 255:
            return None
        entry = self.pending.get(h)
        if entry is None:
            entry = self.pending[h] = PendingEphId(h, first_seen=now, last_seen=now)
        entry.collected.setdefault(adv.share_index, adv.share_payload)
        entry.last_seen = now
        if len(entry.collected) < cfg.k:
            return None

        del self.pending[h]
        shares = [sss.Share(i, p) for i, p in entry.collected.items()]
        candidate = sss.reconstruct(shares, cfg.k)
        if truncated_ephid_hash(candidate) != h:
            log.debug("%s: reconstructed EphID fails hash check, shares dropped", self.name)
            return None
        try:
            peer = GroupElement.decode(candidate, cfg.group)
        except InvalidElement:
            return None

        dbf = self.dbf_ring[-1][1]
        for slot in self.slots:
            digest = derive_encid(slot.secret, peer).digest
            dbf.insert(digest)
            if self.encid_sink is not None:
                self.encid_sink(digest)
        self.insert_counts[self.today] += len(self.slots)
        self.completed[h] = now
        return EncounterRegistered(now, self.today, h, len(self.slots))

    def build_cbf(self) -> BloomFilter:
        if not self.dbf_ring:
            raise NoData("no daily filters retained")
        return union_all((f for _, f in self.dbf_ring), Role.CBF)

    def build_qbf(self) -> tuple[BloomFilter, date]:
        if not self.dbf_ring:
            raise NoData("no daily filters retained")
        return union_all((f for _, f in self.dbf_ring), Role.QBF), self.dbf_ring[0][0]

    def record_query_result(self, qbf: BloomFilter, t_old: date, exposed: bool):
        """Keep a matched QBF for later verification by a health authority."""
        if exposed:
            self.retained_qbfs.append((t_old, qbf))

    # -- introspection

    def filter_bytes(self) -> int:
        return len(self.dbf_ring) * (HEADER_LEN + self.config.bloom.nbytes)

    def snapshot(self) -> bytes:
        """Byte-level dump of everything the device retains."""
        out = bytearray(b"DIMYDEV1")

        def put(tag: bytes, data: bytes):
            out.extend(tag + struct.pack(">I", len(data)) + data)

        cfg = self.config
        size = cfg.group.element_len
        put(b"CLK", struct.pack(">q", self.clock if self.clock is not None else -1))
        put(b"MAC", self.mac + struct.pack(">q", self.mac_since))
        for slot in self.slots:
            put(b"SEC", slot.secret.value.to_bytes(size, "big"))
            put(b"EPH", slot.ephid.encoded)
            put(b"HSH", slot.eph_hash)
            put(b"SLT", struct.pack(">qI", slot.start_minute, slot.next_share))
            for share in slot.shares:
                put(b"SHR", bytes([share.index]) + share.payload)
        for h, entry in sorted(self.pending.items()):
            put(b"PND", h + struct.pack(">qq", entry.first_seen, entry.last_seen))
            for idx, payload in sorted(entry.collected.items()):
                put(b"PSH", bytes([idx]) + payload)
        for h, t in sorted(self.completed.items()):
            put(b"CMP", h + struct.pack(">q", t))
        for d, f in self.dbf_ring:
            put(b"DBF", d.isoformat().encode() + f.serialize())
        for d, f in self.retained_qbfs:
            put(b"QBF", d.isoformat().encode() + f.serialize())
        return bytes(out)
