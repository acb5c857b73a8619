"""Minute-stepped simulation of devices, a lossy broadcast channel and the ledger."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, time, timedelta, timezone
from typing import Callable, Optional

from ..backend.client import HttpBackend, InProcessBackend
from ..backend.ledger import Ledger
from ..bloom import fpr_estimate
from ..device import Device, DeviceConfig
from .rng import named_rng
from .scenario import MINUTES_PER_DAY, Scenario

CLOSE_CONTACT_MINUTES = 15
RETENTION_DAYS = 21


def merged_contacts(scenario: Scenario) -> dict:
    """Per unordered pair, the union of contact intervals as sorted (start, end)."""
    by_pair: dict = {}
    for c in scenario.contacts:
        by_pair.setdefault((min(c.a, c.b), max(c.a, c.b)), []).append((c.start, c.end))
    merged = {}
    for pair, spans in by_pair.items():
        out = []
        for s, e in sorted(spans):
            if out and s <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], e))
            else:
                out.append((s, e))
        merged[pair] = out
    return merged


def is_true_exposure(scenario: Scenario, device: int, query_minute: int,
                     uploads: list, contacts: Optional[dict] = None) -> bool:
    """Ground truth for one query, from the contact schedule alone.

    Exposed iff some uploader had a contact of >= 15 minutes with ``device``
    that finished accruing those minutes by the upload, falls inside both
    parties' 21-day filter retention, and the upload itself lies within the
    last 21 days of the query.
    """
    contacts = merged_contacts(scenario) if contacts is None else contacts
    q_day = query_minute // MINUTES_PER_DAY
    for up_device, up_minute in uploads:
        if up_minute > query_minute or up_device == device:
            continue
        if query_minute - up_minute > RETENTION_DAYS * MINUTES_PER_DAY:
            continue
        # querier's oldest filter is from day q_day - 20
        if up_minute < (q_day - RETENTION_DAYS + 1) * MINUTES_PER_DAY:
            continue
        pair = (min(device, up_device), max(device, up_device))
        for start, end in contacts.get(pair, ()):
            registered = start + CLOSE_CONTACT_MINUTES - 1
            if min(end, up_minute + 1) - start < CLOSE_CONTACT_MINUTES:
                continue
            reg_day = registered // MINUTES_PER_DAY
            up_day = up_minute // MINUTES_PER_DAY
            if reg_day > up_day - RETENTION_DAYS and reg_day > q_day - RETENTION_DAYS:
                return True
    return False


class Simulation:
    """Holds the devices, channel and backend for one scenario.

    Attack scenarios drive the same object through ``step`` with extra
    ``hooks`` that inject or capture advertisements.
    """

    def __init__(self, scenario: Scenario, parallel: bool = False,
                 config: Optional[DeviceConfig] = None):
        self.scenario = scenario.validate()
        self.parallel = parallel
        seed = scenario.seed
        self.config = config or DeviceConfig(start_date=scenario.start_date,
                                             dual_slot=scenario.dual_slot)
        # oracle view of every digest each device inserted; devices keep none
        self.encids: list[set] = [set() for _ in range(scenario.devices)]
        self.devices = [
            Device(named_rng(seed, "device", i), self.config, name=f"dev{i}",
                   encid_sink=self.encids[i].add)
            for i in range(scenario.devices)
        ]
        self.channel_rng = named_rng(seed, "channel")
        token_rng = named_rng(seed, "tokens")
        self.ledger = Ledger([scenario.ha_credential], scenario.policy,
                             self.config.bloom, token_source=token_rng.randbytes)
        if scenario.backend == "http":
            self.backend = HttpBackend.in_process(self.ledger)
        else:
            self.backend = InProcessBackend(self.ledger)
        self.contacts = merged_contacts(scenario)
        self.hooks: list[Callable] = []
        # called as observer(sim, minute) once a minute's events are done
        self.observers: list[Callable] = []
        self.minute = -1
        self.uploads: list = []
        self.upload_log: list = []
        self.query_log: list = []
        self.registrations = [0] * scenario.devices
        self.max_filter_bytes = [0] * scenario.devices
        self._pool = ThreadPoolExecutor(max_workers=4) if parallel else None

    def when(self, minute: int) -> datetime:
        base = datetime.combine(self.scenario.start_date, time.min, tzinfo=timezone.utc)
        return base + timedelta(minutes=minute)

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def active_pairs(self, minute: int) -> list:
        return [c for c in self.scenario.contacts if c.start <= minute < c.end]

    def step(self, minute: int) -> list:
        """Advance every device one minute; returns each device's advertisements."""
        self.minute = minute
        adverts = self._map(lambda d: d.tick(minute), self.devices)
        inboxes: list[list] = [[] for _ in self.devices]
        loss = self.scenario.loss
        for c in self.active_pairs(minute):
            for src, dst in ((c.a, c.b), (c.b, c.a)):
                for adv in adverts[src]:
                    if loss == 0.0 or self.channel_rng.random() >= loss:
                        inboxes[dst].append(adv)
        for hook in self.hooks:
            hook(self, minute, adverts, inboxes)
        self._deliver(inboxes, minute)
        for i, d in enumerate(self.devices):
            self.max_filter_bytes[i] = max(self.max_filter_bytes[i], d.filter_bytes())
        return adverts

    def _deliver(self, inboxes, minute):
        def run(i):
            dev = self.devices[i]
            return sum(dev.receive(adv, minute) is not None for adv in inboxes[i])

        for i, n in enumerate(self._map(run, range(len(self.devices)))):
            self.registrations[i] += n

    @property
    def diagnosed(self) -> set:
        return {d for d, _ in self.uploads}

    def diagnose(self, device: int, minute: int) -> int:
        now = self.when(minute)
        dev = self.devices[device]
        token = self.backend.issue_token(self.scenario.ha_credential, now)
        cbf = dev.build_cbf()
        tx_id = self.backend.upload_cbf(token, cbf, now)
        self.uploads.append((device, minute))
        items = sum(dev.insert_counts.values())
        fill = cbf.fill_ratio()
        self.upload_log.append({
            "device": device,
            "minute": minute,
            "tx_id": tx_id,
            "cbf_popcount": cbf.popcount(),
            "cbf_fill": fill,
            "items_inserted": items,
            "analytic_fpr": fpr_estimate(cbf.params, items),
            "empirical_fpr": fill ** cbf.params.k,
        })
        return tx_id

    def query(self, device: int, minute: int) -> bool:
        dev = self.devices[device]
        qbf, t_old = dev.build_qbf()
        exposed = self.backend.check_exposure(qbf, t_old, self.when(minute))
        dev.record_query_result(qbf, t_old, exposed)
        truth = is_true_exposure(self.scenario, device, minute, self.uploads, self.contacts)
        outcome = {(True, True): "TP", (True, False): "FP",
                   (False, True): "FN", (False, False): "TN"}[(exposed, truth)]
        self.query_log.append({
            "device": device,
            "minute": minute,
            "t_old": t_old.isoformat(),
            "exposed": exposed,
            "truth": truth,
            "outcome": outcome,
        })
        return exposed

    def run(self) -> dict:
        sc = self.scenario
        diag = {}
        for e in sc.diagnoses:
            diag.setdefault(e.minute, []).append(e.device)
        queries = {}
        for q in sc.query_schedule():
            queries.setdefault(q.minute, []).append(q.device)
        try:
            for minute in range(self.minute + 1, sc.horizon):
                self.step(minute)
                for d in diag.get(minute, ()):
                    self.diagnose(d, minute)
                for d in queries.get(minute, ()):
                    # a diagnosed device would only match its own upload
                    if d not in self.diagnosed:
                        self.query(d, minute)
                for observer in self.observers:
                    observer(self, minute)
        finally:
            if self._pool is not None:
                self._pool.shutdown()
        return self.report()

    def report(self) -> dict:
        counts = {"TP": 0, "FP": 0, "FN": 0, "TN": 0}
        for q in self.query_log:
            counts[q["outcome"]] += 1
        negatives = counts["FP"] + counts["TN"]
        positives = counts["TP"] + counts["FN"]
        return {
            "scenario": self.scenario.to_dict(),
            "devices": [
                {
                    "id": i,
                    "dbf_days": [d.isoformat() for d, _ in dev.dbf_ring],
                    "dbf_popcounts": [f.popcount() for _, f in dev.dbf_ring],
                    "dbf_items": [dev.insert_counts[d] for d, _ in dev.dbf_ring],
                    "encounters_registered": self.registrations[i],
                    "max_filter_bytes": self.max_filter_bytes[i],
                }
                for i, dev in enumerate(self.devices)
            ],
            "uploads": self.upload_log,
            "queries": self.query_log,
            "outcomes": counts,
            "rates": {
                "query_false_positive_rate": counts["FP"] / negatives if negatives else None,
                "query_false_negative_rate": counts["FN"] / positives if positives else None,
            },
            "traffic": self.backend.traffic_report(),
            "attacks": {},
        }


def run(scenario: Scenario, parallel: bool = False) -> dict:
    return Simulation(scenario, parallel=parallel).run()


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()
