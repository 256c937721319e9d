import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoyq.envelope import (CLASSICAL_SUITE, TEST_SUITE, Envelope, Role, available_suites,
                             deserialize_envelope, deserialize_key, keygen, open_envelope, seal,
                             serialize_envelope, serialize_key)
from decoyq.errors import (AuthFailureError, DecoyqError, EnvelopeError, MalformedEnvelopeError,
                           SignatureFailureError, UnknownSuiteError, WrongRecipientError)

SUITES = [TEST_SUITE] + ([CLASSICAL_SUITE] if CLASSICAL_SUITE in available_suites() else [])


def _parties(suite, seed=0):
    rng = np.random.default_rng(seed)
    return keygen(suite, rng, Role.BACKEND), keygen(suite, rng, Role.USER), rng


def test_keygen_is_reproducible():
    a = keygen(TEST_SUITE, np.random.default_rng(5))
    b = keygen(TEST_SUITE, np.random.default_rng(5))
    assert a == b


def test_distinct_seeds_give_distinct_keys():
    pubs = {keygen(TEST_SUITE, np.random.default_rng(s)).public for s in range(500)}
    assert len(pubs) == 500


def test_unknown_suite():
    with pytest.raises(UnknownSuiteError):
        keygen("ROT13", np.random.default_rng(0))


def test_private_key_not_in_repr():
    k = keygen(TEST_SUITE, np.random.default_rng(1))
    assert k.private.hex() not in repr(k)
    assert k.public_only().private == b""


@pytest.mark.parametrize("suite", SUITES)
@pytest.mark.parametrize("size", [0, 1, 37, 4096])
def test_round_trip(suite, size):
    backend, user, rng = _parties(suite)
    msg = bytes(rng.integers(0, 256, size, dtype=np.uint8))
    env = seal(msg, backend.public_only(), user, rng)
    assert len(env.ciphertext) == size
    assert open_envelope(env, backend, user.public_only()) == msg
    again = deserialize_envelope(serialize_envelope(env))
    assert again == env


@pytest.mark.parametrize("suite", SUITES)
def test_equal_plaintexts_differ(suite):
    backend, user, rng = _parties(suite)
    a = seal(b"same bits", backend.public_only(), user, rng)
    b = seal(b"same bits", backend.public_only(), user, rng)
    assert a.nonce != b.nonce and a.ciphertext != b.ciphertext


@pytest.mark.parametrize("suite", SUITES)
def test_ciphertext_bit_flip_is_auth_failure(suite):
    backend, user, rng = _parties(suite)
    env = seal(b"\x01\x02\x03\x04", backend.public_only(), user, rng)
    ct = bytearray(env.ciphertext)
    ct[2] ^= 0x10
    bad = Envelope(env.suite_id, env.kem_ciphertext, env.nonce, bytes(ct), env.auth_tag, env.signature)
    with pytest.raises(AuthFailureError):
        open_envelope(bad, backend, user.public_only())


@pytest.mark.parametrize("suite", SUITES)
def test_wrong_recipient(suite):
    backend, user, rng = _parties(suite)
    stranger = keygen(suite, np.random.default_rng(77), Role.BACKEND)
    env = seal(b"payload", backend.public_only(), user, rng)
    with pytest.raises(WrongRecipientError):
        open_envelope(env, stranger, user.public_only())


@pytest.mark.parametrize("suite", SUITES)
def test_wrong_signer(suite):
    backend, user, rng = _parties(suite)
    other = keygen(suite, np.random.default_rng(78), Role.USER)
    env = seal(b"payload", backend.public_only(), user, rng)
    with pytest.raises(SignatureFailureError):
        open_envelope(env, backend, other.public_only())


def test_mixed_suites_refused():
    if len(SUITES) < 2:
        pytest.skip("only one suite available")
    backend, _, rng = _parties(TEST_SUITE)
    _, user, _ = _parties(CLASSICAL_SUITE)
    with pytest.raises(EnvelopeError):
        seal(b"x", backend.public_only(), user, rng)


@pytest.mark.parametrize("suite", SUITES)
def test_every_single_bit_mutation_rejected(suite):
    backend, user, rng = _parties(suite)
    env = seal(b"bitmap bytes", backend.public_only(), user, rng)
    blob = serialize_envelope(env)
    for i in range(len(blob) * 8):
        mutated = bytearray(blob)
        mutated[i // 8] ^= 1 << (i % 8)
        with pytest.raises(DecoyqError):
            open_envelope(deserialize_envelope(bytes(mutated)), backend, user.public_only())


def test_malformed_envelope_bytes():
    with pytest.raises(MalformedEnvelopeError):
        deserialize_envelope(b"\x05\x00\x00")
    backend, user, rng = _parties(TEST_SUITE)
    blob = serialize_envelope(seal(b"", backend.public_only(), user, rng))
    with pytest.raises(MalformedEnvelopeError):
        deserialize_envelope(blob + b"\x00")


@pytest.mark.parametrize("suite", SUITES)
def test_key_files(suite):
    k = keygen(suite, np.random.default_rng(3), Role.BACKEND)
    full = serialize_key(k)
    assert full[:4] == b"BKND"
    assert deserialize_key(full) == k
    pub = deserialize_key(serialize_key(k, include_private=False))
    assert pub.private == b"" and pub.public == k.public and pub.role is Role.BACKEND


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=2048), st.integers(0, 2**32))
def test_round_trip_property(msg, seed):
    backend, user, rng = _parties(TEST_SUITE, seed)
    env = seal(msg, backend.public_only(), user, rng)
    assert open_envelope(deserialize_envelope(serialize_envelope(env)), backend, user.public_only()) == msg


def test_equal_shape_inputs_give_equal_lengths():
    backend, user, rng = _parties(TEST_SUITE)
    a = serialize_envelope(seal(bytes(40), backend.public_only(), user, rng))
    b = serialize_envelope(seal(bytes(range(40)), backend.public_only(), user, rng))
    assert len(a) == len(b)
