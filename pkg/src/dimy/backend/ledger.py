"""Append-only contact-filter ledger with token-gated uploads.

The ledger never reads the host clock: every operation takes ``now``
explicitly so that simulations are reproducible.
"""

from __future__ import annotations

import math
import secrets
import threading
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from typing import Iterable, Optional

import numpy as np

from ..bloom import DEFAULT_PARAMS, BloomFilter, BloomParams, ParamsMismatch

TOKEN_LIFETIME = timedelta(hours=24)
RETENTION = timedelta(days=21)


class LedgerError(Exception):
    pass


class Unauthorized(LedgerError):
    pass


class TokenError(LedgerError):
    pass


class TokenUnknown(TokenError):
    pass


class TokenExpired(TokenError):
    pass


class TokenReused(TokenError):
    pass


class InvalidWindow(LedgerError, ValueError):
    pass


class ReplicaDivergence(LedgerError):
    pass


@dataclass
class AccessToken:
    value: bytes
    issued_at: datetime
    used: bool = False

    @property
    def hex(self) -> str:
        return self.value.hex()

    def valid_at(self, now: datetime) -> bool:
        return not self.used and now - self.issued_at <= TOKEN_LIFETIME


@dataclass(frozen=True)
class LedgerRecord:
    tx_id: int
    cbf: BloomFilter
    upload_time: datetime
    popcount: int


@dataclass(frozen=True)
class MatchPolicy:
    """Decides whether an intersection with ``t`` set bits counts as a match.

    ``fixed`` matches when ``t >= theta``. ``statistical`` matches when ``t``
    exceeds the overlap expected between two unrelated filters,
    ``E = |q| |c| / m``, by ``c`` standard deviations: ``t >= E + c sqrt(E)``.
    """

    mode: str = "fixed"
    theta: int = 3
    c: float = 4.0

    def __post_init__(self):
        if self.mode not in ("fixed", "statistical"):
            raise ValueError(f"unknown match mode {self.mode!r}")
        if self.theta < 1:
            raise ValueError("theta must be >= 1")
        if self.c <= 0:
            raise ValueError("c must be > 0")

    def matches(self, t: int, q_pop: int, c_pop: int, m: int) -> bool:
        if self.mode == "fixed":
            return t >= self.theta
        expected = q_pop * c_pop / m
        return t > 0 and t >= expected + self.c * math.sqrt(expected)

    def matches_any(self, t: np.ndarray, q_pop: int, c_pops: np.ndarray, m: int) -> bool:
        if self.mode == "fixed":
            return bool((t >= self.theta).any())
        expected = q_pop * c_pops / m
        return bool(((t > 0) & (t >= expected + self.c * np.sqrt(expected))).any())

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "MatchPolicy":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "theta": self.theta, "c": self.c}


def _as_utc(d: date) -> datetime:
    return datetime.combine(d, time.min, tzinfo=timezone.utc)


def _words(bf: BloomFilter, width: int) -> np.ndarray:
    body = bf.body()
    row = np.zeros(width * 8, dtype=np.uint8)
    row[:len(body)] = np.frombuffer(body, dtype=np.uint8)
    return row.view("<u8")


class _WordMatrix:
    """Stored filters as rows of 64-bit words, grown by doubling.

    Rows below the published record count are never rewritten, so readers
    holding an older array reference still see consistent data.
    """

    # rows per chunk in the dense scan; keeps temporaries cache-sized
    CHUNK = 16

    def __init__(self, params: BloomParams):
        self.width = (params.nbytes + 7) // 8
        self.rows = np.zeros((0, self.width), dtype=np.uint64)
        self.times = np.zeros(0, dtype=np.float64)
        self.pops = np.zeros(0, dtype=np.int64)

    def put(self, i: int, bf: BloomFilter, ts: float, pop: int):
        if i >= len(self.rows):
            cap = max(8, 2 * len(self.rows))
            rows = np.zeros((cap, self.width), dtype=np.uint64)
            rows[:i] = self.rows[:i]
            times = np.zeros(cap)
            times[:i] = self.times[:i]
            pops = np.zeros(cap, dtype=np.int64)
            pops[:i] = self.pops[:i]
            rows[i], times[i], pops[i] = _words(bf, self.width), ts, pop
            self.rows, self.times, self.pops = rows, times, pops
        else:
            self.rows[i], self.times[i], self.pops[i] = _words(bf, self.width), ts, pop

    def intersections(self, q: np.ndarray, lo: int, hi: int) -> np.ndarray:
        rows = self.rows
        nz = np.flatnonzero(q)
        if len(nz) * 8 < len(q):
            # sparse query: only words where the query has bits can contribute
            out = np.empty(hi - lo, dtype=np.int64)
            qn = q[nz]
            step = max(1, self.CHUNK * len(q) // max(len(nz), 1))
            for s in range(lo, hi, step):
                e = min(s + step, hi)
                out[s - lo:e - lo] = np.bitwise_count(rows[s:e, nz] & qn).sum(
                    axis=1, dtype=np.int64)
            return out
        out = np.empty(hi - lo, dtype=np.int64)
        for s in range(lo, hi, self.CHUNK):
            e = min(s + self.CHUNK, hi)
            out[s - lo:e - lo] = np.bitwise_count(rows[s:e] & q).sum(axis=1, dtype=np.int64)
        return out


class Ledger:
    """In-process stand-in for the permissioned blockchain.

    Writes go through one lock. Queries take a snapshot of the record tuple,
    so they see every append that completed before they started.
    """

    def __init__(self, ha_credentials: Iterable[str] = (), policy: MatchPolicy = MatchPolicy(),
                 params: BloomParams = DEFAULT_PARAMS, token_source=None):
        self.ha_credentials = frozenset(ha_credentials)
        self.policy = policy
        self.params = params
        self._token_source = token_source or secrets.token_bytes
        self._tokens: dict[bytes, AccessToken] = {}
        self._records: tuple[LedgerRecord, ...] = ()
        self._matrix = _WordMatrix(params)
        self._lock = threading.Lock()

    @property
    def records(self) -> tuple[LedgerRecord, ...]:
        return self._records

    def issue_token(self, ha_credential: str, now: datetime) -> AccessToken:
        if ha_credential not in self.ha_credentials:
            raise Unauthorized("unknown health-authority credential")
        with self._lock:
            while True:
                value = self._token_source(16)
                if value not in self._tokens:
                    break
            token = AccessToken(value, now)
            self._tokens[value] = token
            return token

    def upload_cbf(self, token, cbf: BloomFilter, now: datetime) -> int:
        """Consume ``token`` and append ``cbf``; returns the new tx_id."""
        value = _token_bytes(token)
        if cbf.params != self.params:
            raise ParamsMismatch(f"expected {self.params}, got {cbf.params}")
        with self._lock:
            stored = self._tokens.get(value)
            if stored is None:
                raise TokenUnknown("token was never issued")
            if stored.used:
                raise TokenReused("token already used")
            if now - stored.issued_at > TOKEN_LIFETIME:
                raise TokenExpired("token older than 24 hours")
            stored.used = True
            tx_id = self._records[-1].tx_id + 1 if self._records else 1
            record = LedgerRecord(tx_id, cbf.copy(), now, cbf.popcount())
            self._matrix.put(len(self._records), cbf, now.timestamp(), record.popcount)
            self._records = self._records + (record,)
            return tx_id

    def _window(self, t_old: date, now: datetime) -> datetime:
        today = now.date()
        if t_old > today:
            raise InvalidWindow("t_old is in the future")
        if today - t_old > timedelta(days=21):
            raise InvalidWindow("t_old is more than 21 days old")
        return max(_as_utc(t_old), now - RETENTION)

    def _scan(self, qbf: BloomFilter, t_old: date, now: datetime):
        """Intersection popcounts for records inside the window.

        Returns (record indices, popcounts, record popcounts).
        """
        if qbf.params != self.params:
            raise ParamsMismatch(f"expected {self.params}, got {qbf.params}")
        since = self._window(t_old, now).timestamp()
        # snapshot: count first, then arrays (rows below n are final)
        n = len(self._records)
        m = self._matrix
        rows_times, pops = m.times[:n], m.pops[:n]
        inside = np.flatnonzero((rows_times >= since) & (rows_times <= now.timestamp()))
        if not len(inside):
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        lo, hi = int(inside[0]), int(inside[-1]) + 1
        t = m.intersections(_words(qbf, m.width), lo, hi)[inside - lo]
        return inside, t, pops[inside]

    def match_counts(self, qbf: BloomFilter, t_old: date, now: datetime) -> list[tuple[int, int]]:
        """(tx_id, intersection popcount) for every record inside the window.

        Internal diagnostics only; the public query answers with a boolean.
        """
        records = self._records
        idx, t, _ = self._scan(qbf, t_old, now)
        return [(records[i].tx_id, int(c)) for i, c in zip(idx, t)]

    def check_exposure(self, qbf: BloomFilter, t_old: date, now: datetime) -> bool:
        q_pop = qbf.popcount()
        _, t, pops = self._scan(qbf, t_old, now)
        if q_pop == 0 or not len(t):
            return False
        return self.policy.matches_any(t, q_pop, pops, self.params.m)


def _token_bytes(token) -> bytes:
    if isinstance(token, AccessToken):
        return token.value
    if isinstance(token, str):
        try:
            return bytes.fromhex(token)
        except ValueError:
            raise TokenUnknown("token is not valid hex") from None
    return bytes(token)


class ReplicatedLedger:
    """N ledgers driven in lockstep; every replica recomputes each query.

    Tokens are issued by the first replica and mirrored to the others so
    that all replicas hold identical state.
    """

    def __init__(self, replicas: int, ha_credentials: Iterable[str] = (),
                 policy: MatchPolicy = MatchPolicy(), params: BloomParams = DEFAULT_PARAMS,
                 token_source=None):
        if replicas < 1:
            raise ValueError("need at least one replica")
        creds = list(ha_credentials)
        self.replicas = [Ledger(creds, policy, params, token_source) for _ in range(replicas)]

    @property
    def records(self):
        return self.replicas[0].records

    @property
    def params(self):
        return self.replicas[0].params

    def issue_token(self, ha_credential: str, now: datetime) -> AccessToken:
        token = self.replicas[0].issue_token(ha_credential, now)
        for r in self.replicas[1:]:
            with r._lock:
                r._tokens[token.value] = AccessToken(token.value, token.issued_at)
        return token

    def upload_cbf(self, token, cbf: BloomFilter, now: datetime) -> int:
        outcomes = set()
        for r in self.replicas:
            try:
                outcomes.add(("ok", r.upload_cbf(token, cbf, now)))
            except LedgerError as e:
                outcomes.add(("err", type(e)))
        if len(outcomes) != 1:
            raise ReplicaDivergence(f"replicas disagree on upload: {outcomes}")
        kind, value = outcomes.pop()
        if kind == "err":
            raise value("rejected by all replicas")
        return value

    def check_exposure(self, qbf: BloomFilter, t_old: date, now: datetime) -> bool:
        answers = {r.check_exposure(qbf, t_old, now) for r in self.replicas}
        if len(answers) != 1:
            raise ReplicaDivergence("replicas disagree on exposure")
        return answers.pop()
