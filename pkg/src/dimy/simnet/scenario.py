"""Scenario files (JSON).

Example::

    {
      "seed": 7,
      "devices": 2,
      "days": 2,
      "start_date": "2021-06-01",
      "loss": 0.0,
      "contacts": [{"a": 0, "b": 1, "start": 600, "end": 620}],
      "diagnoses": [{"device": 1, "minute": 720}],
      "queries": null,
      "policy": {"mode": "fixed", "theta": 3},
      "backend": "inprocess"
    }

``start``/``end`` are minutes from midnight of ``start_date``; a contact
covers ``start <= minute < end``. A diagnosis may give ``day`` instead of
``minute`` (upload at noon of that day). With ``queries`` null every device
queries once per 24 hours, at minutes 1440, 2880, ...
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date
from typing import Optional

from ..backend.ledger import MatchPolicy

MINUTES_PER_DAY = 1440


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Contact:
    a: int
    b: int
    start: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Diagnosis:
    device: int
    minute: int


@dataclass(frozen=True)
class Query:
    device: int
    minute: int


@dataclass(frozen=True)
class Scenario:
    seed: int
    devices: int
    days: int = 2
    start_date: date = date(2021, 1, 1)
    loss: float = 0.0
    contacts: tuple = ()
    diagnoses: tuple = ()
    queries: Optional[tuple] = None
    policy: MatchPolicy = field(default_factory=MatchPolicy)
    backend: str = "inprocess"
    ha_credential: str = "ha-sim"
    dual_slot: bool = True

    @property
    def horizon(self) -> int:
        return self.days * MINUTES_PER_DAY

    def query_schedule(self) -> list:
        if self.queries is not None:
            return sorted(self.queries, key=lambda q: (q.minute, q.device))
        return [Query(d, t) for t in range(MINUTES_PER_DAY, self.horizon, MINUTES_PER_DAY)
                for d in range(self.devices)]

    def validate(self) -> "Scenario":
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ScenarioInvalid("seed is mandatory and must be an integer")
        if self.devices < 1:
            raise ScenarioInvalid("need at least one device")
        if self.days < 1:
            raise ScenarioInvalid("days must be >= 1")
        if not 0.0 <= self.loss <= 1.0:
            raise ScenarioInvalid("loss must be a probability")
        if self.backend not in ("inprocess", "http"):
            raise ScenarioInvalid(f"unknown backend {self.backend!r}")
        ids = range(self.devices)
        for c in self.contacts:
            if c.a not in ids or c.b not in ids or c.a == c.b:
                raise ScenarioInvalid(f"bad contact pair {c}")
            if not 0 <= c.start < c.end <= self.horizon:
                raise ScenarioInvalid(f"contact {c} outside the horizon")
        for ev in list(self.diagnoses) + list(self.queries or ()):
            if ev.device not in ids:
                raise ScenarioInvalid(f"unknown device in {ev}")
            if not 0 <= ev.minute < self.horizon:
                raise ScenarioInvalid(f"event {ev} outside the horizon")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            diagnoses = []
            for e in d.get("diagnoses", ()):
                minute = e["minute"] if "minute" in e else e["day"] * MINUTES_PER_DAY + 720
                diagnoses.append(Diagnosis(e["device"], minute))
            queries = d.get("queries")
            if queries is not None:
                queries = tuple(Query(q["device"], q["minute"]) for q in queries)
            scenario = cls(
                seed=d["seed"],
                devices=d["devices"],
                days=d.get("days", 2),
                start_date=date.fromisoformat(d.get("start_date", "2021-01-01")),
                loss=float(d.get("loss", 0.0)),
                contacts=tuple(Contact(c["a"], c["b"], c["start"], c["end"])
                               for c in d.get("contacts", ())),
                diagnoses=tuple(diagnoses),
                queries=queries,
                policy=MatchPolicy.from_dict(d.get("policy")),
                backend=d.get("backend", "inprocess"),
                ha_credential=d.get("ha_credential", "ha-sim"),
                dual_slot=d.get("dual_slot", True),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioInvalid(f"malformed scenario: {e!r}") from None
        return scenario.validate()

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "devices": self.devices,
            "days": self.days,
            "start_date": self.start_date.isoformat(),
            "loss": self.loss,
            "contacts": [asdict(c) for c in self.contacts],
            "diagnoses": [asdict(e) for e in self.diagnoses],
            "queries": None if self.queries is None else [asdict(q) for q in self.queries],
            "policy": self.policy.to_dict(),
            "backend": self.backend,
            "ha_credential": self.ha_credential,
            "dual_slot": self.dual_slot,
        }
