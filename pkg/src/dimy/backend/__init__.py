from .ledger import (AccessToken, InvalidWindow, Ledger, LedgerError, LedgerRecord,
                     MatchPolicy, ReplicaDivergence, ReplicatedLedger, TokenError,
                     TokenExpired, TokenReused, TokenUnknown, Unauthorized)
from .client import HttpBackend, InProcessBackend

__all__ = [
    "AccessToken", "HttpBackend", "InProcessBackend", "InvalidWindow", "Ledger",
    "LedgerError", "LedgerRecord", "MatchPolicy", "ReplicaDivergence", "ReplicatedLedger",
    "TokenError", "TokenExpired", "TokenReused", "TokenUnknown", "Unauthorized",
]
