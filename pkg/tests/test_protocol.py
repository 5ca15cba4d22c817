import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fednerf.errors import ProtocolError
from fednerf.fl.protocol import Fin, Hello, Model, Update, decode_message, encode_message

u32 = st.integers(0, 2**32 - 1)
f32_arrays = st.lists(st.floats(width=32, allow_nan=False), max_size=50).map(lambda v: np.array(v, dtype=np.float32))

messages = st.one_of(
    st.builds(Hello, u32),
    st.builds(Model, u32, f32_arrays),
    st.builds(Update, u32, u32, u32, st.integers(0, 255), u32, f32_arrays),
    st.just(Fin()),
)


def test_hello_bytes():
    assert encode_message(Hello(3)) == bytes.fromhex("464E 00000005 01 00000003".replace(" ", ""))


def test_fin_bytes():
    assert encode_message(Fin()) == b"FN\x00\x00\x00\x01\x04"


def test_model_layout():
    frame = encode_message(Model(7, np.array([1.0, -2.5], dtype=np.float32)))
    assert frame[:2] == b"FN"
    assert struct.unpack(">I", frame[2:6])[0] == 1 + 8 + 8
    assert frame[6] == 0x02
    assert struct.unpack(">II", frame[7:15]) == (7, 2)
    assert struct.unpack("<2f", frame[15:]) == (1.0, -2.5)


def test_update_layout():
    frame = encode_message(Update(2, 9, 4096, 66, 27043, np.array([0.5], dtype=np.float32)))
    body = frame[7:]
    assert struct.unpack(">III", body[:12]) == (2, 9, 4096)
    assert body[12] == 66
    assert struct.unpack(">II", body[13:21]) == (27043, 1)
    assert struct.unpack("<f", body[21:]) == (0.5,)


@settings(max_examples=300)
@given(messages)
def test_roundtrip(msg):
    frame = encode_message(msg)
    back = decode_message(frame)
    assert back == msg
    assert encode_message(back) == frame


@pytest.mark.parametrize("frame,field", [
    (b"XN\x00\x00\x00\x01\x04", "magic"),
    (b"FN\x00\x00\x00\x01\x09", "type"),
    (b"FN\x00\x00\x00\x05\x01\x00\x00", "length"),
    (b"FN\x00\x00\x00\x00", "length"),
    (b"FN\x00", "length"),
    (b"FN\x00\x00\x00\x03\x01\x00\x00", "length"),
    (b"FN\x00\x00\x00\x09\x02\x00\x00\x00\x01\x00\x00\x00\x02", "param_count"),
])
def test_malformed_frames(frame, field):
    with pytest.raises(ProtocolError) as info:
        decode_message(frame)
    assert info.value.field == field


def test_truncated_model():
    frame = encode_message(Model(1, np.arange(10, dtype=np.float32)))
    for cut in range(len(frame)):
        with pytest.raises(ProtocolError):
            decode_message(frame[:cut])


def test_encode_range_checks():
    with pytest.raises(ProtocolError):
        encode_message(Hello(2**32))
    with pytest.raises(ProtocolError):
        encode_message(Update(1, 1, 1, 300, 0, np.zeros(1)))


@settings(max_examples=500)
@given(st.binary(max_size=64))
def test_random_bytes_never_crash(data):
    try:
        decode_message(data)
    except ProtocolError:
        pass
