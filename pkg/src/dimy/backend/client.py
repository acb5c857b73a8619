"""Uniform client used by the simulator, in-process or over HTTP.

Both clients account bytes the same way: the JSON/base64 envelopes that go
over the wire, so reports do not depend on the transport.
"""

from __future__ import annotations

import base64
import json
from datetime import date, datetime

from ..bloom import BloomFilter
from .ledger import Ledger, TokenExpired, TokenReused, TokenUnknown, Unauthorized


def _compact(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode()


def token_request(cred: str) -> bytes:
    return _compact({"ha_credential": cred})


def cbf_body(cbf: BloomFilter) -> bytes:
    return base64.b64encode(cbf.serialize())


def query_body(qbf: BloomFilter, t_old: date) -> bytes:
    return _compact({"qbf": base64.b64encode(qbf.serialize()).decode(),
                     "t_old": t_old.isoformat()})


class _Accounting:
    def __init__(self):
        self.traffic = {"token": [0, 0], "upload": [0, 0], "query": [0, 0]}

    def _count(self, flow: str, up: int, down: int):
        self.traffic[flow][0] += up
        self.traffic[flow][1] += down

    def traffic_report(self) -> dict:
        return {k: {"up": v[0], "down": v[1]} for k, v in self.traffic.items()}


class InProcessBackend(_Accounting):
    def __init__(self, ledger: Ledger):
        super().__init__()
        self.ledger = ledger

    def issue_token(self, cred: str, now: datetime) -> str:
        token = self.ledger.issue_token(cred, now).hex
        self._count("token", len(token_request(cred)), len(_compact({"token": token})))
        return token

    def upload_cbf(self, token: str, cbf: BloomFilter, now: datetime) -> int:
        tx_id = self.ledger.upload_cbf(token, cbf, now)
        self._count("upload", len(cbf_body(cbf)), len(_compact({"tx_id": tx_id})))
        return tx_id

    def check_exposure(self, qbf: BloomFilter, t_old: date, now: datetime) -> bool:
        exposed = self.ledger.check_exposure(qbf, t_old, now)
        self._count("query", len(query_body(qbf, t_old)), len(_compact({"exposed": exposed})))
        return exposed


class SimClock:
    """Settable clock handed to the HTTP app so simulated time drives the ledger."""

    def __init__(self, now: datetime | None = None):
        self.now = now

    def __call__(self) -> datetime:
        return self.now


_TOKEN_ERRORS = {e.__name__: e for e in (TokenExpired, TokenReused, TokenUnknown)}


class HttpBackend(_Accounting):
    """Talks to the REST API through any httpx-compatible client.

    When ``clock`` is given, it is set to the simulated time before each call.
    """

    def __init__(self, client, clock: SimClock | None = None):
        super().__init__()
        self.client = client
        self.clock = clock

    @classmethod
    def in_process(cls, ledger: Ledger) -> "HttpBackend":
        from fastapi.testclient import TestClient

        from .http import create_app

        clock = SimClock()
        return cls(TestClient(create_app(ledger, clock)), clock)

    def _tick(self, now: datetime):
        if self.clock is not None:
            self.clock.now = now

    def issue_token(self, cred: str, now: datetime) -> str:
        self._tick(now)
        body = token_request(cred)
        r = self.client.post("/v1/token", content=body,
                             headers={"content-type": "application/json"})
        if r.status_code == 401:
            raise Unauthorized(r.text)
        r.raise_for_status()
        self._count("token", len(body), len(r.content))
        return r.json()["token"]

    def upload_cbf(self, token: str, cbf: BloomFilter, now: datetime) -> int:
        self._tick(now)
        body = cbf_body(cbf)
        r = self.client.post("/v1/cbf", content=body, headers={"X-DIMY-Token": token})
        if r.status_code == 401:
            name = r.json().get("error", "")
            raise _TOKEN_ERRORS.get(name, TokenUnknown)(name)
        r.raise_for_status()
        self._count("upload", len(body), len(r.content))
        return r.json()["tx_id"]

    def check_exposure(self, qbf: BloomFilter, t_old: date, now: datetime) -> bool:
        self._tick(now)
        body = query_body(qbf, t_old)
        r = self.client.post("/v1/query", content=body,
                             headers={"content-type": "application/json"})
        r.raise_for_status()
        self._count("query", len(body), len(r.content))
        return r.json()["exposed"]
