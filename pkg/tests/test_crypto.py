import hashlib
import random

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from dimy.crypto import (HARDENED, WIRE, GroupElement, GroupParams, InvalidElement, Scalar,
                         derive_encid, dh, keygen, public_element, random_scalar)

# order of 5 in Z_23* is 22; the toy group is only for hand-checked arithmetic
TOY = GroupParams(name="toy23", p=23, g=5, order=22, element_len=16)


def el(v, params=TOY):
    return GroupElement.from_int(v, params)


@pytest.mark.parametrize("params", [WIRE, HARDENED])
def test_named_groups_are_safe_prime_subgroups(params):
    q = (params.p - 1) // 2
    assert sympy.isprime(params.p) and sympy.isprime(q)
    assert params.order == q
    assert pow(params.g, q, params.p) == 1 and params.g != 1
    assert params.p.bit_length() == 8 * params.element_len


def test_toy_keygen_values():
    assert public_element(Scalar(4, TOY)).value == 4
    assert public_element(Scalar(3, TOY)).value == 10


def test_toy_dh():
    assert dh(Scalar(3, TOY), el(4)).value == 18
    assert dh(Scalar(1, TOY), el(17)) == el(17)


def test_toy_encid_is_sha256_of_padded_shared_element():
    expected = bytes.fromhex("c5f8843b733d968b612c38d7ecada8eced3c7b88bcbd8b6ef373e927915ef41e")
    a = derive_encid(Scalar(4, TOY), public_element(Scalar(3, TOY)))
    b = derive_encid(Scalar(3, TOY), public_element(Scalar(4, TOY)))
    assert a.digest == b.digest == expected
    assert expected == hashlib.sha256((18).to_bytes(16, "big")).digest()


@pytest.mark.parametrize("params", [WIRE, HARDENED])
def test_keygen_is_deterministic_under_seed(params):
    x1, e1 = keygen(params, random.Random(5))
    x2, e2 = keygen(params, random.Random(5))
    assert x1 == x2 and e1 == e2
    assert len(e1.encoded) == params.element_len


def test_random_scalar_rejects_out_of_range():
    class Stub:
        values = iter([0, TOY.order, TOY.order + 3, 7])

        def getrandbits(self, _):
            return next(self.values)

    assert random_scalar(TOY, Stub()).value == 7


@pytest.mark.parametrize("bad", [0, 23, 30])
def test_from_int_rejects_non_members(bad):
    with pytest.raises(InvalidElement):
        el(bad)


def test_decode_rejects_quadratic_non_residue_and_bad_length():
    # 2 is a non-residue mod p when p = 7 mod 8
    assert WIRE.p % 8 == 7 or pow(2, WIRE.order, WIRE.p) != 1
    nonres = next(v for v in range(2, 50) if pow(v, WIRE.order, WIRE.p) != 1)
    with pytest.raises(InvalidElement):
        GroupElement.decode(nonres.to_bytes(16, "big"), WIRE)
    with pytest.raises(InvalidElement):
        GroupElement.decode(b"\x01" * 15, WIRE)
    with pytest.raises(InvalidElement):
        dh(Scalar(5, WIRE), GroupElement(nonres.to_bytes(16, "big"), WIRE))


def test_element_len_must_be_16_or_32():
    with pytest.raises(ValueError):
        GroupParams(name="x", p=23, g=5, order=22, element_len=8)


def test_scalar_repr_hides_value():
    assert "123456789" not in repr(Scalar(123456789, WIRE))


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=WIRE.order - 1),
       st.integers(min_value=1, max_value=WIRE.order - 1))
def test_encid_symmetry(x, y):
    X, Y = Scalar(x, WIRE), Scalar(y, WIRE)
    assert derive_encid(X, public_element(Y)) == derive_encid(Y, public_element(X))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=WIRE.order - 1))
def test_encode_decode_roundtrip(x):
    e = public_element(Scalar(x, WIRE))
    assert GroupElement.decode(e.encoded, WIRE) == e
    assert len(e.encoded) == 16


def test_distinct_peers_give_distinct_encids():
    rng = random.Random(1)
    x, _ = keygen(WIRE, rng)
    digests = {derive_encid(x, keygen(WIRE, rng)[1]).digest for _ in range(200)}
    assert len(digests) == 200
