"""Length-prefixed binary framing for server/client messages.

Frame: ``b"FN"``, u32 BE payload length (type byte + body), u8 type, body.
Integers in bodies are big-endian; parameter arrays are little-endian float32.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ProtocolError

MAGIC = b"FN"
HEADER = struct.Struct(">2sI")
MAX_PAYLOAD = 1 << 28

HELLO, MODEL, UPDATE, FIN = 0x01, 0x02, 0x03, 0x04


def _f32(params) -> np.ndarray:
    return np.ascontiguousarray(params, dtype="<f4").reshape(-1)


@dataclass(frozen=True)
class Hello:
    device_id: int


@dataclass(frozen=True, eq=False)
class Model:
    round: int
    params: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "params", _f32(self.params))

    def __eq__(self, other):
        return (isinstance(other, Model) and self.round == other.round
                and self.params.tobytes() == other.params.tobytes())


@dataclass(frozen=True, eq=False)
class Update:
    device_id: int
    round: int
    num_samples: int
    rssi: int
    rate_mbps_x100: int
    params: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "params", _f32(self.params))

    def _key(self):
        return (self.device_id, self.round, self.num_samples, self.rssi, self.rate_mbps_x100,
                self.params.tobytes())

    def __eq__(self, other):
        return isinstance(other, Update) and self._key() == other._key()


@dataclass(frozen=True)
class Fin:
    pass


Message = Hello | Model | Update | Fin


def _u32(value: int, field: str) -> bytes:
    if not 0 <= value < 1 << 32:
        raise ProtocolError(f"value {value} does not fit in u32", field)
    return struct.pack(">I", value)


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        type_byte, body = HELLO, _u32(msg.device_id, "device_id")
    elif isinstance(msg, Model):
        type_byte = MODEL
        body = _u32(msg.round, "round") + _u32(msg.params.size, "param_count") + msg.params.tobytes()
    elif isinstance(msg, Update):
        if not 0 <= msg.rssi <= 255:
            raise ProtocolError(f"value {msg.rssi} does not fit in u8", "rssi")
        type_byte = UPDATE
        body = b"".join([
            _u32(msg.device_id, "device_id"),
            _u32(msg.round, "round"),
            _u32(msg.num_samples, "num_samples"),
            bytes([msg.rssi]),
            _u32(msg.rate_mbps_x100, "rate_mbps_x100"),
            _u32(msg.params.size, "param_count"),
            msg.params.tobytes(),
        ])
    elif isinstance(msg, Fin):
        type_byte, body = FIN, b""
    else:
        raise ProtocolError(f"cannot encode {type(msg).__name__}", "type")
    return HEADER.pack(MAGIC, 1 + len(body)) + bytes([type_byte]) + body


def _params(body: bytes, offset: int, field: str = "param_count") -> np.ndarray:
    (count,) = struct.unpack_from(">I", body, offset)
    data = body[offset + 4:]
    if len(data) != 4 * count:
        raise ProtocolError(f"declares {count} floats but carries {len(data)} bytes", field)
    return np.frombuffer(data, dtype="<f4").copy()


def decode_payload(type_byte: int, body: bytes) -> Message:
    """Decode a message from its type byte and body."""
    if type_byte == HELLO:
        if len(body) != 4:
            raise ProtocolError(f"HELLO body must be 4 bytes, got {len(body)}", "length")
        return Hello(struct.unpack(">I", body)[0])
    if type_byte == MODEL:
        if len(body) < 8:
            raise ProtocolError(f"MODEL body too short ({len(body)} bytes)", "length")
        (rnd,) = struct.unpack_from(">I", body, 0)
        return Model(rnd, _params(body, 4))
    if type_byte == UPDATE:
        if len(body) < 21:
            raise ProtocolError(f"UPDATE body too short ({len(body)} bytes)", "length")
        dev, rnd, n = struct.unpack_from(">III", body, 0)
        rssi = body[12]
        (rate,) = struct.unpack_from(">I", body, 13)
        return Update(dev, rnd, n, rssi, rate, _params(body, 17))
    if type_byte == FIN:
        if body:
            raise ProtocolError(f"FIN body must be empty, got {len(body)} bytes", "length")
        return Fin()
    raise ProtocolError(f"unknown message type 0x{type_byte:02x}", "type")


def _check_header(header: bytes) -> int:
    magic, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}", "magic")
    if length < 1:
        raise ProtocolError("payload length must cover the type byte", "length")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit", "length")
    return length


def decode_message(data: bytes) -> Message:
    """Decode exactly one complete frame."""
    data = bytes(data)
    if len(data) < HEADER.size:
        raise ProtocolError(f"frame shorter than header ({len(data)} bytes)", "length")
    length = _check_header(data[:HEADER.size])
    if len(data) != HEADER.size + length:
        raise ProtocolError(
            f"header declares {length} payload bytes, frame carries {len(data) - HEADER.size}", "length"
        )
    return decode_payload(data[HEADER.size], data[HEADER.size + 1:])


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, remaining = [], n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed the connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> Message:
    """Read one frame from a stream socket."""
    length = _check_header(_recv_exact(sock, HEADER.size))
    payload = _recv_exact(sock, length)
    return decode_payload(payload[0], payload[1:])


def send_message(sock: socket.socket, msg: Message) -> int:
    data = encode_message(msg)
    sock.sendall(data)
    return len(data)
