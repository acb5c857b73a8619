"""k-out-of-n Shamir secret sharing over GF(256), byte-wise.

Every byte of the secret gets its own random polynomial of degree k - 1;
all bytes of one share are evaluated at the same point, so a share is an
index byte plus a payload as long as the secret.
"""

from __future__ import annotations

from dataclasses import dataclass

# AES polynomial x^8 + x^4 + x^3 + x + 1
_POLY = 0x11B

_EXP = [0] * 510
_LOG = [0] * 256


def _build_tables():
    x = 1
    for i in range(255):
        _EXP[i] = x
        _LOG[x] = i
        # multiply by the generator 3 = x + 1
        x ^= x << 1
        if x & 0x100:
            x ^= _POLY
    for i in range(255, 510):
        _EXP[i] = _EXP[i - 255]


_build_tables()


class SharingError(ValueError):
    pass


class InvalidParams(SharingError):
    pass


class InsufficientShares(SharingError):
    pass


class LengthMismatch(SharingError):
    pass


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return _EXP[_LOG[a] - _LOG[b] + 255]


@dataclass(frozen=True)
class Share:
    index: int
    payload: bytes

    def __post_init__(self):
        if not 1 <= self.index <= 255:
            raise ValueError(f"share index must be in 1..255, got {self.index}")


def _eval(coeffs: list[int], x: int) -> int:
    # Horner, highest coefficient first
    acc = 0
    for c in reversed(coeffs):
        acc = gf_mul(acc, x) ^ c
    return acc


def split(secret: bytes, k: int, n: int, rng) -> list[Share]:
    """Split ``secret`` into ``n`` shares, any ``k`` of which reconstruct it."""
    if not secret:
        raise InvalidParams("secret must be non-empty")
    if not 1 <= k <= n <= 255:
        raise InvalidParams(f"need 1 <= k <= n <= 255, got k={k}, n={n}")
    polys = [[b] + [rng.getrandbits(8) for _ in range(k - 1)] for b in secret]
    return [
        Share(x, bytes(_eval(poly, x) for poly in polys))
        for x in range(1, n + 1)
    ]


def _lagrange_at_zero(xs: list[int]) -> list[int]:
    weights = []
    for j, xj in enumerate(xs):
        num = den = 1
        for m, xm in enumerate(xs):
            if m != j:
                num = gf_mul(num, xm)
                den = gf_mul(den, xm ^ xj)
        weights.append(gf_div(num, den))
    return weights


def reconstruct(shares: list[Share], k: int) -> bytes:
    """Interpolate the first ``k`` distinct-index shares at x = 0.

    The result is only a candidate: shares from different splits interpolate
    to garbage without any error, so callers must verify it independently.
    """
    if len({len(s.payload) for s in shares}) > 1:
        raise LengthMismatch("share payloads differ in length")
    chosen: dict[int, Share] = {}
    for share in shares:
        chosen.setdefault(share.index, share)
        if len(chosen) == k:
            break
    if k < 1 or len(chosen) < k:
        raise InsufficientShares(f"need {k} distinct shares, got {len(chosen)}")
    picked = list(chosen.values())
    length = len(picked[0].payload)
    weights = _lagrange_at_zero([s.index for s in picked])
    out = bytearray(length)
    for w, share in zip(weights, picked):
        for i, y in enumerate(share.payload):
            out[i] ^= gf_mul(w, y)
    return bytes(out)
