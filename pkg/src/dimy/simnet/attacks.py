"""Executable attack scenarios against the device protocol.

Each attack returns an ``AttackVerdict``. ``passed`` means the outcome the
protocol analysis predicts was observed, which for ``relay`` is that the
attack *succeeds*: the protocol is known to be open to it.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from ..device import Device, DeviceConfig
from .rng import named_rng
from .runner import Simulation
from .scenario import Contact, Scenario


class UnknownAttack(ValueError):
    pass


@dataclass
class AttackVerdict:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "summary": self.summary,
                "details": self.details}


ALICE, BOB = 0, 1


def _pair_sim(seed: int, trial: int, contacts=(), dual_slot: bool = True) -> Simulation:
    sc = Scenario(seed=seed * 1_000_003 + trial, devices=2, days=1,
                  contacts=tuple(contacts), dual_slot=dual_slot)
    return Simulation(sc)


def _false_exposure(sim: Simulation, minute: int) -> tuple[bool, bool]:
    """Bob uploads, Alice queries. Returns (exposed, symmetric digest exists)."""
    sim.diagnose(BOB, minute)
    exposed = sim.query(ALICE, minute + 1)
    return exposed, bool(sim.encids[ALICE] & sim.encids[BOB])


def replay(seed: int = 0, trials: int = 100, record_minutes: int = 15,
           travel_out: int = 2, stay_b: int = 15, travel_back: int = 3) -> AttackVerdict:
    """Record Alice at A, replay at Bob's B while recording Bob, replay Bob to Alice."""
    round_trip = record_minutes + travel_out + stay_b + travel_back
    false_exposures = symmetric = bob_got = alice_got = 0
    for trial in range(trials):
        sim = _pair_sim(seed, trial)
        offset = named_rng(seed, "replay", trial).randrange(30)
        arrive_b = offset + record_minutes + travel_out
        back_at_a = arrive_b + stay_b + travel_back
        captured_a, captured_b = [], []

        def adversary(sim, minute, adverts, inboxes):
            if offset <= minute < offset + record_minutes:
                captured_a.extend(adverts[ALICE])
            if minute == arrive_b:
                inboxes[BOB].extend(captured_a)
            if arrive_b <= minute < arrive_b + stay_b:
                captured_b.extend(adverts[BOB])
            if minute == back_at_a:
                inboxes[ALICE].extend(captured_b)

        sim.hooks.append(adversary)
        for minute in range(back_at_a + 1):
            sim.step(minute)
        bob_got += sim.registrations[BOB] > 0
        alice_got += sim.registrations[ALICE] > 0
        exposed, sym = _false_exposure(sim, back_at_a + 1)
        false_exposures += exposed
        symmetric += sym
    passed = false_exposures == 0 and symmetric == 0
    return AttackVerdict(
        "replay", passed,
        f"{false_exposures}/{trials} false exposures with a {round_trip}-minute round trip",
        {"trials": trials, "round_trip_minutes": round_trip,
         "false_exposures": false_exposures, "symmetric_encids": symmetric,
         "bob_registered_replayed_ephid": bob_got, "alice_registered_replayed_ephid": alice_got},
    )


def relay(seed: int = 0, trials: int = 100, duration: int = 20) -> AttackVerdict:
    """Forward adverts in real time between two devices that never meet."""
    reproduced = 0
    for trial in range(trials):
        sim = _pair_sim(seed, trial)
        offset = named_rng(seed, "relay", trial).randrange(30)

        def bridge(sim, minute, adverts, inboxes):
            if offset <= minute < offset + duration:
                inboxes[BOB].extend(adverts[ALICE])
                inboxes[ALICE].extend(adverts[BOB])

        sim.hooks.append(bridge)
        end = offset + duration
        for minute in range(end):
            sim.step(minute)
        exposed, sym = _false_exposure(sim, end)
        reproduced += exposed and sym
    return AttackVerdict(
        "relay", reproduced >= math.ceil(0.99 * trials),
        f"relay created a false close contact in {reproduced}/{trials} trials",
        {"trials": trials, "bridged_minutes": duration, "false_positives": reproduced},
    )


def short_contact(seed: int = 0, max_minutes: int = 30, offsets: int = 3,
                  dual_slot: bool = True) -> AttackVerdict:
    """Sweep lossless contact durations; registration must start at exactly 15 minutes."""
    registered_by_duration = {}
    wrong = []
    for duration in range(1, max_minutes + 1):
        results = []
        for j in range(offsets):
            offset = named_rng(seed, "short", duration, j).randrange(30)
            contact = Contact(ALICE, BOB, offset, offset + duration)
            sim = _pair_sim(seed, duration * 100 + j, [contact], dual_slot)
            for minute in range(contact.end):
                sim.step(minute)
            results.append(bool(sim.encids[ALICE] & sim.encids[BOB]))
        registered_by_duration[duration] = results
        expect = duration >= 15
        if any(r != expect for r in results):
            wrong.append(duration)
    return AttackVerdict(
        "short_contact", not wrong,
        "registration iff duration >= 15 minutes" if not wrong
        else f"threshold violated at durations {wrong}",
        {"registered": {str(d): r for d, r in registered_by_duration.items()},
         "violations": wrong},
    )


def carryover_tracking(seed: int = 0, minutes: int = 240) -> AttackVerdict:
    """Passive observer logging (minute, MAC, EphID hash) of one device in range.

    Two adverts are directly linkable when they share a MAC or an EphID hash.
    """
    dev = Device(named_rng(seed, "carryover"), DeviceConfig())
    log = []
    for minute in range(minutes):
        for adv in dev.tick(minute):
            log.append((minute, adv.mac, adv.eph_hash))

    macs_per_hash = defaultdict(set)
    for _, mac, h in log:
        macs_per_hash[h].add(mac)
    across_mac = sum(len(m) > 1 for m in macs_per_hash.values())

    linkable_gaps = set()
    for i, (t1, mac1, h1) in enumerate(log):
        for t2, mac2, h2 in log[i + 1:]:
            if mac1 == mac2 or h1 == h2:
                linkable_gaps.add(t2 - t1)
    max_gap = max(linkable_gaps)
    window_ok = all(g in linkable_gaps for g in range(30)) and max_gap < 30

    # chaining direct links while the observer never loses the device
    parent = list(range(len(log)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    first_seen = {}
    for i, (_, mac, h) in enumerate(log):
        for key in (("mac", mac), ("hash", h)):
            if key in first_seen:
                parent[find(i)] = find(first_seen[key])
            else:
                first_seen[key] = i
    clusters = defaultdict(list)
    for i, (t, _, _) in enumerate(log):
        clusters[find(i)].append(t)
    chained_span = max(max(ts) - min(ts) for ts in clusters.values())

    passed = across_mac > 0 and window_ok
    return AttackVerdict(
        "carryover_tracking", passed,
        f"direct linking spans at most {max_gap} minutes; "
        f"{across_mac} EphIDs seen under more than one MAC",
        {"observed_minutes": minutes, "ephids_linked_across_mac": across_mac,
         "max_direct_link_minutes": max_gap,
         "chained_link_minutes": chained_span},
    )


ATTACKS = {
    "replay": replay,
    "relay": relay,
    "short_contact": short_contact,
    "carryover_tracking": carryover_tracking,
}


def run_attack(name: str, params: dict | None = None) -> AttackVerdict:
    try:
        fn = ATTACKS[name]
    except KeyError:
        raise UnknownAttack(f"unknown attack {name!r}; choose from {sorted(ATTACKS)}") from None
    return fn(**(params or {}))
