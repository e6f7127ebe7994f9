"""Minimal CoAP (RFC 7252) message codec.

Only the pieces needed to emulate GET/PUT/POST traffic are supported: the
4-byte base header, a token of up to 8 bytes, the Uri-Path option and the
payload marker.  Blockwise transfer is not implemented, so a large payload
travels in a single message.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

COAP_VERSION = 1
PAYLOAD_MARKER = 0xFF
URI_PATH = 11
SUPPORTED_OPTIONS = frozenset({URI_PATH})
MAX_TOKEN_LEN = 8


class CoapError(ValueError):
    """Raised for messages that cannot be encoded or decoded."""


class MsgType(IntEnum):
    CONFIRMABLE = 0
    NON_CONFIRMABLE = 1
    ACK = 2
    RESET = 3


class Code(IntEnum):
    # value is the raw code byte: class << 5 | detail
    GET = 0x01
    POST = 0x02
    PUT = 0x03
    CREATED = 0x41  # 2.01
    CHANGED = 0x44  # 2.04
    CONTENT = 0x45  # 2.05

    @property
    def dotted(self) -> str:
        return f"{self.value >> 5}.{self.value & 0x1F:02d}"

    @property
    def is_request(self) -> bool:
        return self.value >> 5 == 0


REQUEST_METHODS = (Code.GET, Code.PUT, Code.POST)

RESPONSE_FOR = {
    Code.GET: Code.CONTENT,
    Code.PUT: Code.CHANGED,
    Code.POST: Code.CREATED,
}


@dataclass(frozen=True)
class CoapMessage:
    msg_type: MsgType
    code: Code
    message_id: int
    token: bytes = b""
    options: tuple[tuple[int, bytes], ...] = ()
    payload: bytes = b""
    version: int = field(default=COAP_VERSION)

    def __post_init__(self):
        # normalise options so that list input still compares equal
        object.__setattr__(
            self, "options", tuple((int(n), bytes(v)) for n, v in self.options)
        )

    @property
    def uri_path(self) -> str:
        return "/".join(v.decode("utf-8", "replace") for n, v in self.options if n == URI_PATH)


def _check(msg: CoapMessage) -> None:
    if msg.version != COAP_VERSION:
        raise CoapError(f"unsupported version {msg.version}")
    if len(msg.token) > MAX_TOKEN_LEN:
        raise CoapError(f"token length {len(msg.token)} exceeds {MAX_TOKEN_LEN}")
    if not 0 <= msg.message_id <= 0xFFFF:
        raise CoapError(f"message id {msg.message_id} out of range")
    if msg.code == Code.GET and msg.payload:
        raise CoapError("GET request must not carry a payload")
    last = 0
    for number, _ in msg.options:
        if number not in SUPPORTED_OPTIONS:
            raise CoapError(f"unsupported option number {number}")
        if number < last:
            raise CoapError("option numbers must be non-decreasing")
        last = number


def _ext(value: int) -> tuple[int, bytes]:
    """Nibble plus extended bytes for an option delta or length."""
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    if value < 65805:
        return 14, struct.pack("!H", value - 269)
    raise CoapError(f"option field {value} too large")


def encode_options(options) -> bytes:
    out = bytearray()
    prev = 0
    for number, value in options:
        d_nib, d_ext = _ext(number - prev)
        l_nib, l_ext = _ext(len(value))
        out.append(d_nib << 4 | l_nib)
        out += d_ext + l_ext + value
        prev = number
    return bytes(out)


def encode_message(msg: CoapMessage) -> bytes:
    _check(msg)
    header = struct.pack(
        "!BBH",
        msg.version << 6 | int(msg.msg_type) << 4 | len(msg.token),
        int(msg.code),
        msg.message_id,
    )
    body = msg.token + encode_options(msg.options)
    if msg.payload:
        body += bytes([PAYLOAD_MARKER]) + msg.payload
    return header + body


def encoded_length(msg: CoapMessage) -> int:
    n = 4 + len(msg.token) + len(encode_options(msg.options))
    return n + (1 + len(msg.payload) if msg.payload else 0)


def _read_ext(nibble: int, data: bytes, pos: int) -> tuple[int, int]:
    if nibble < 13:
        return nibble, pos
    if nibble == 13:
        if pos + 1 > len(data):
            raise CoapError("truncated option extension")
        return data[pos] + 13, pos + 1
    if nibble == 14:
        if pos + 2 > len(data):
            raise CoapError("truncated option extension")
        return struct.unpack_from("!H", data, pos)[0] + 269, pos + 2
    raise CoapError("reserved option nibble 15")


def decode_message(data: bytes) -> CoapMessage:
    data = bytes(data)
    if len(data) < 4:
        raise CoapError(f"truncated header: {len(data)} bytes")
    b0, raw_code, mid = struct.unpack_from("!BBH", data)
    version, mtype, tkl = b0 >> 6, (b0 >> 4) & 0x3, b0 & 0xF
    if version != COAP_VERSION:
        raise CoapError(f"unsupported version {version}")
    if tkl > MAX_TOKEN_LEN:
        raise CoapError(f"token length {tkl} exceeds {MAX_TOKEN_LEN}")
    try:
        code = Code(raw_code)
    except ValueError:
        raise CoapError(f"unsupported code 0x{raw_code:02x}") from None
    pos = 4
    if pos + tkl > len(data):
        raise CoapError("truncated token")
    token = data[pos:pos + tkl]
    pos += tkl

    options = []
    number = 0
    payload = b""
    while pos < len(data):
        byte = data[pos]
        pos += 1
        if byte == PAYLOAD_MARKER:
            payload = data[pos:]
            if not payload:
                raise CoapError("payload marker followed by empty payload")
            break
        delta, pos = _read_ext(byte >> 4, data, pos)
        length, pos = _read_ext(byte & 0xF, data, pos)
        if pos + length > len(data):
            raise CoapError("truncated option value")
        number += delta
        if number not in SUPPORTED_OPTIONS:
            raise CoapError(f"unsupported option number {number}")
        options.append((number, data[pos:pos + length]))
        pos += length

    msg = CoapMessage(MsgType(mtype), code, mid, token, tuple(options), payload)
    if code == Code.GET and payload:
        raise CoapError("GET request must not carry a payload")
    return msg


def make_request(method: Code, payload: bytes, message_id: int,
                 token: bytes = b"", path: str | None = None) -> CoapMessage:
    """Build a Confirmable request for one of GET, PUT or POST."""
    method = Code(method)
    if method not in REQUEST_METHODS:
        raise CoapError(f"{method.name} is not a request method")
    if method == Code.GET and payload:
        raise CoapError("GET request must not carry a payload")
    options = ()
    if path:
        options = tuple((URI_PATH, seg.encode()) for seg in path.strip("/").split("/"))
    msg = CoapMessage(MsgType.CONFIRMABLE, method, message_id, token, options, bytes(payload))
    _check(msg)
    return msg


def make_response(request: CoapMessage, payload: bytes = b"") -> CoapMessage:
    """Piggybacked ACK answering ``request`` with the conventional success code."""
    return CoapMessage(MsgType.ACK, RESPONSE_FOR[request.code], request.message_id,
                       request.token, (), payload)
