"""Parcel codec: frame layout, round trips, hostile input."""

import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octask import wire
from octask.wire import DecodeError, Gid, Parcel


def test_empty_handshake_frame_is_34_bytes_plus_prefix():
    # field widths: 4 magic + 1 version + 1 kind + 8 request id
    #             + 12 gid + 4 action + 4 payload length
    frame = wire.encode(Parcel(wire.KIND_HANDSHAKE, 0, Gid(0, 0), 0, b""))
    assert len(frame) == 4 + 34
    assert struct.unpack_from("<I", frame)[0] == 34
    assert frame[4:8] == b"MTP1"


def test_round_trip_simple():
    p = Parcel(wire.KIND_INVOKE, 17, Gid(3, 12345), 9, b"payload")
    assert wire.decode(wire.encode(p)) == p


def _random_parcel(rng: random.Random) -> Parcel:
    return Parcel(
        kind=rng.choice((wire.KIND_INVOKE, wire.KIND_REPLY, wire.KIND_HANDSHAKE)),
        request_id=rng.getrandbits(64),
        target=Gid(rng.getrandbits(32), rng.getrandbits(64)),
        action_id=rng.getrandbits(32),
        payload=rng.randbytes(rng.randrange(0, 64)),
    )


def test_round_trip_fuzz_ten_thousand():
    rng = random.Random(0xC0DEC)
    for _ in range(10_000):
        p = _random_parcel(rng)
        assert wire.decode(wire.encode(p)) == p


@given(st.sampled_from([1, 2, 3]), st.integers(0, 2 ** 64 - 1),
       st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 64 - 1),
       st.integers(0, 2 ** 32 - 1), st.binary(max_size=256))
@settings(deadline=None, max_examples=200)
def test_round_trip_property(kind, rid, loc, idx, action, payload):
    p = Parcel(kind, rid, Gid(loc, idx), action, payload)
    assert wire.decode(wire.encode(p)) == p


def test_bad_magic_names_field():
    frame = bytearray(wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"")))
    frame[4] ^= 0xFF
    with pytest.raises(DecodeError) as err:
        wire.decode(bytes(frame))
    assert err.value.field == "magic"


def test_bad_version_names_field():
    frame = bytearray(wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"")))
    frame[8] = 99
    with pytest.raises(DecodeError) as err:
        wire.decode(bytes(frame))
    assert err.value.field == "version"


def test_bad_kind_names_field():
    frame = bytearray(wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"")))
    frame[9] = 77
    with pytest.raises(DecodeError) as err:
        wire.decode(bytes(frame))
    assert err.value.field == "kind"


def test_truncated_frame_names_first_incomplete_field():
    body = wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"abc"))[4:]
    with pytest.raises(DecodeError) as err:
        wire.decode_body(body[:3])
    assert err.value.field == "magic"
    with pytest.raises(DecodeError) as err:
        wire.decode_body(body[:16])
    assert err.value.field == "target.locality_id"
    with pytest.raises(DecodeError) as err:
        wire.decode_body(body[:20])
    assert err.value.field == "target.local_index"
    with pytest.raises(DecodeError) as err:
        wire.decode_body(body[:34])  # header fine, payload missing
    assert err.value.field == "payload"


def test_oversize_payload_rejected_both_ways():
    with pytest.raises(ValueError):
        wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"x" * 10),
                    max_payload=4)
    body = wire.encode(Parcel(wire.KIND_INVOKE, 1, Gid(0, 0), 0, b"x" * 10))[4:]
    with pytest.raises(DecodeError) as err:
        wire.decode_body(body, max_payload=4)
    assert err.value.field == "payload_length"


def test_length_prefix_mismatch_rejected():
    frame = bytearray(wire.encode(Parcel(wire.KIND_REPLY, 1, Gid(0, 0), 0, b"xy")))
    frame[0] += 1
    with pytest.raises(DecodeError) as err:
        wire.decode(bytes(frame))
    assert err.value.field == "length_prefix"


def test_gid_range_validation():
    with pytest.raises(ValueError):
        Gid(-1, 0)
    with pytest.raises(ValueError):
        Gid(0, 1 << 64)


@given(st.binary(max_size=128))
@settings(deadline=None, max_examples=300)
def test_decode_never_raises_anything_but_decode_error(blob):
    try:
        wire.decode(blob)
    except DecodeError:
        pass


def test_arbitrary_byte_soup_fuzz_only_decode_errors():
    rng = random.Random(0xF00D)
    survived = 0
    for _ in range(20_000):
        blob = rng.randbytes(rng.randrange(0, 90))
        try:
            wire.decode(blob)
            survived += 1
        except DecodeError:
            pass
    # random soup essentially never forms a valid frame
    assert survived == 0
