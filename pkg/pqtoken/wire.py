"""Bit-exact codec for the token, the protocol messages and TCP framing.

Message bodies are ``discriminator ‖ fields in tuple order ‖ signatures``, inner
signature before outer. Every variable-length field has the exact width given by
the active suite, so there are no per-field length prefixes. The CHECK request is
the bare 74-byte token with no discriminator; it is recognised by its length.
See docs/wire-format.md for byte diagrams.
"""

import struct
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import ClassVar, Dict, List, Tuple, Type, Union

from pqtoken.suite import SuiteParams

TOKEN_SIZE = 74
UUID_SIZE = 16
PERMS_SIZE = 16
PERM_CODE_SIZE = 15
PAYLOAD_SIZE = 32
U64_MAX = 2 ** 64 - 1
DEFAULT_MAX_FRAME_SIZE = 64 * 1024

_TOKEN = struct.Struct(">BB16s16sQ32s")
_U64 = struct.Struct(">Q")
_FRAME_HEADER = struct.Struct(">I")


class WireError(RuntimeError):
    pass


class FrameTooLarge(WireError):
    pass


class Discriminator(IntEnum):
    REGISTER = 0x01
    REGSUCCESS = 0x02
    CYCLE = 0x03
    CYCLEOK = 0x04
    STAMP = 0x05
    STAMPED = 0x06
    CHECKED = 0x08
    ERROR = 0x7F


class ErrorCode(IntEnum):
    BAD_TIME = 1
    KEY_EXPIRED = 2
    DUPLICATE_ID = 3
    DUPLICATE_KEY = 4
    BAD_SIGNATURE = 5
    UNKNOWN_CLIENT = 6
    DUPLICATE_TOKEN = 7
    UNKNOWN_ADMIN = 8
    MALFORMED_REQUEST = 9


class PermMode(IntEnum):
    DISABLED = 0
    LOOKUP = 1


RESERVED_PERM_MODES = range(2, 9)


class CheckStatus(IntEnum):
    VALID = 0
    UNKNOWN = 1
    EXPIRED = 2
    MALFORMED = 3
    CLIENT_GONE = 4


# ─────────────────────────────────────────────
# TOKEN
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class Token:
    protocol: int
    device: int
    uuid: bytes
    perms: bytes
    time: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.protocol <= 0xFF or not 0 <= self.device <= 0xFF:
            raise WireError("protocol and device must fit in one byte")
        if len(self.uuid) != UUID_SIZE:
            raise WireError(f"uuid must be {UUID_SIZE} bytes")
        if len(self.perms) != PERMS_SIZE:
            raise WireError(f"perms must be {PERMS_SIZE} bytes")
        if self.perms[0] in RESERVED_PERM_MODES:
            raise WireError(f"reserved permission mode {self.perms[0]}")
        if not 0 <= self.time <= U64_MAX:
            raise WireError("time must be an unsigned 64-bit integer")
        if len(self.payload) != PAYLOAD_SIZE:
            raise WireError(f"payload must be {PAYLOAD_SIZE} bytes")

    def __repr__(self):
        # the payload of a final token is the shared secret
        return (f"Token(protocol={self.protocol}, device={self.device}, uuid={self.uuid.hex()}, "
                f"perms={self.perms.hex()}, time={self.time})")

    @property
    def perm_mode(self) -> int:
        return self.perms[0]

    def encode(self) -> bytes:
        return _TOKEN.pack(self.protocol, self.device, self.uuid, self.perms, self.time, self.payload)

    @classmethod
    def decode(cls, data: bytes) -> "Token":
        if len(data) != TOKEN_SIZE:
            raise WireError(f"token must be exactly {TOKEN_SIZE} bytes, got {len(data)}")
        return cls(*_TOKEN.unpack(bytes(data)))

    def with_payload(self, payload: bytes) -> "Token":
        return replace(self, payload=payload)


def encode_token(token: Token) -> bytes:
    return token.encode()


def decode_token(data: bytes) -> Token:
    return Token.decode(data)


def perms_disabled() -> bytes:
    return bytes(PERMS_SIZE)


def perms_lookup(code: bytes) -> bytes:
    """Mode 1: a 15-byte code the server resolves to a scope."""
    if len(code) != PERM_CODE_SIZE:
        raise WireError(f"permission code must be {PERM_CODE_SIZE} bytes")
    return bytes([PermMode.LOOKUP]) + code


# ─────────────────────────────────────────────
# MESSAGES
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class Register:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.REGISTER
    uuid: bytes
    client_pubkey: bytes
    admin_uuid: bytes
    sig_client: bytes = b""
    sig_admin: bytes = b""


@dataclass(frozen=True)
class RegSuccess:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.REGSUCCESS
    id_hash: bytes
    sig_server: bytes = b""


@dataclass(frozen=True)
class Cycle:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.CYCLE
    uuid: bytes
    new_pubkey: bytes
    sig_new: bytes = b""
    sig_old: bytes = b""


@dataclass(frozen=True)
class CycleOk:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.CYCLEOK
    verification_hash: bytes
    sig_server: bytes = b""


@dataclass(frozen=True)
class Stamp:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.STAMP
    preview_token: Token
    encapsulation_key: bytes
    sig_client: bytes = b""


@dataclass(frozen=True)
class Stamped:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.STAMPED
    approval_hash: bytes
    ciphertext: bytes
    sig_server: bytes = b""


@dataclass(frozen=True)
class ErrorReply:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.ERROR
    code: int
    request_hash: bytes
    correct_time: int
    sig_server: bytes = b""


@dataclass(frozen=True)
class Checked:
    DISCRIMINATOR: ClassVar[Discriminator] = Discriminator.CHECKED
    status: int
    perms: bytes


@dataclass(frozen=True)
class Check:
    token: Token


WireMessage = Union[Register, RegSuccess, Cycle, CycleOk, Stamp, Stamped, ErrorReply, Checked, Check]

# (field, width) in wire order; widths are fixed sizes or SuiteParams attributes
_LAYOUTS: Dict[type, Tuple[Tuple[str, str], ...]] = {
    Register: (("uuid", "uuid"), ("client_pubkey", "s_key"), ("admin_uuid", "uuid"),
               ("sig_client", "s_sig"), ("sig_admin", "s_sig")),
    RegSuccess: (("id_hash", "s_hash"), ("sig_server", "s_sig")),
    Cycle: (("uuid", "uuid"), ("new_pubkey", "s_key"), ("sig_new", "s_sig"), ("sig_old", "s_sig")),
    CycleOk: (("verification_hash", "s_hash"), ("sig_server", "s_sig")),
    Stamp: (("preview_token", "token"), ("encapsulation_key", "s_ek"), ("sig_client", "s_sig")),
    Stamped: (("approval_hash", "s_hash"), ("ciphertext", "s_ct"), ("sig_server", "s_sig")),
    ErrorReply: (("code", "u8"), ("request_hash", "s_hash"), ("correct_time", "u64"), ("sig_server", "s_sig")),
    Checked: (("status", "u8"), ("perms", "perms")),
}

_SIGNATURES = {Register: 2, Cycle: 2, Checked: 0}
_FIXED_WIDTHS = {"uuid": UUID_SIZE, "perms": PERMS_SIZE, "token": TOKEN_SIZE, "u8": 1, "u64": 8}
_BY_DISCRIMINATOR: Dict[int, type] = {cls.DISCRIMINATOR: cls for cls in _LAYOUTS}


def _width(kind: str, params: SuiteParams) -> int:
    return _FIXED_WIDTHS[kind] if kind in _FIXED_WIDTHS else getattr(params, kind)


def _encode_field(value, kind: str) -> bytes:
    if kind == "u8":
        if not 0 <= value <= 0xFF:
            raise WireError(f"value {value} does not fit in one byte")
        return bytes([value])
    if kind == "u64":
        if not 0 <= value <= U64_MAX:
            raise WireError(f"value {value} does not fit in 64 bits")
        return _U64.pack(value)
    if kind == "token":
        return value.encode()
    return bytes(value)


def _decode_field(data: bytes, kind: str):
    if kind == "u8":
        return data[0]
    if kind == "u64":
        return _U64.unpack(data)[0]
    if kind == "token":
        return Token.decode(data)
    return bytes(data)


def _unsigned_fields(cls: type) -> Tuple[Tuple[str, str], ...]:
    layout = _LAYOUTS[cls]
    count = _SIGNATURES.get(cls, 1)
    return layout[:len(layout) - count]


def message_size(cls: type, params: SuiteParams) -> int:
    """Encoded size of a message type under ``params``."""
    if cls is Check:
        return TOKEN_SIZE
    return 1 + sum(_width(kind, params) for _, kind in _LAYOUTS[cls])


def encode_message(message: WireMessage, params: SuiteParams) -> bytes:
    if isinstance(message, Check):
        return message.token.encode()
    cls = type(message)
    if cls not in _LAYOUTS:
        raise WireError(f"not a wire message: {cls.__name__}")
    out = [bytes([cls.DISCRIMINATOR])]
    for name, kind in _LAYOUTS[cls]:
        encoded = _encode_field(getattr(message, name), kind)
        if len(encoded) != _width(kind, params):
            raise WireError(f"{cls.__name__}.{name} must be {_width(kind, params)} bytes, got {len(encoded)}")
        out.append(encoded)
    return b"".join(out)


def decode_message(data: bytes, params: SuiteParams) -> WireMessage:
    """Decode a discriminated message; any malformation raises WireError."""
    if not data:
        raise WireError("empty message")
    cls = _BY_DISCRIMINATOR.get(data[0])
    if cls is None:
        raise WireError(f"unknown discriminator 0x{data[0]:02x}")
    expected = message_size(cls, params)
    if len(data) < expected:
        raise WireError(f"truncated {cls.__name__}: {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise WireError(f"{len(data) - expected} trailing bytes after {cls.__name__}")
    values = {}
    offset = 1
    for name, kind in _LAYOUTS[cls]:
        width = _width(kind, params)
        values[name] = _decode_field(data[offset:offset + width], kind)
        offset += width
    return cls(**values)


def decode_request(data: bytes, params: SuiteParams) -> WireMessage:
    """Server side: a 74-byte body is a CHECK, anything else is discriminated."""
    if len(data) == TOKEN_SIZE:
        return Check(Token.decode(data))
    return decode_message(data, params)


def signing_bytes(message: WireMessage) -> bytes:
    """Bytes covered by the inner (or only) signature: the unsigned body."""
    cls = type(message)
    if cls not in _LAYOUTS or cls is Checked:
        raise WireError(f"{cls.__name__} carries no signature")
    parts = [bytes([cls.DISCRIMINATOR])]
    for name, kind in _unsigned_fields(cls):
        parts.append(_encode_field(getattr(message, name), kind))
    return b"".join(parts)


def outer_signing_bytes(message: WireMessage) -> bytes:
    """Bytes covered by the outer signature: exactly the inner signature."""
    if isinstance(message, Register):
        return message.sig_client
    if isinstance(message, Cycle):
        return message.sig_new
    raise WireError(f"{type(message).__name__} has no outer signature")


# ─────────────────────────────────────────────
# FRAMING
# ─────────────────────────────────────────────

def encode_frame(body: bytes, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE) -> bytes:
    if len(body) > max_frame_size:
        raise FrameTooLarge(f"frame of {len(body)} bytes exceeds {max_frame_size}")
    return _FRAME_HEADER.pack(len(body)) + body


class LengthPrefixedFramer:
    """Reassembles u32-big-endian length-prefixed frames from a byte stream."""

    def __init__(self, max_frame_size: int = DEFAULT_MAX_FRAME_SIZE):
        self.max_frame_size = max_frame_size
        self._buffer = bytearray()

    def encode(self, body: bytes) -> bytes:
        return encode_frame(body, self.max_frame_size)

    def feed(self, data: bytes) -> List[bytes]:
        self._buffer.extend(data)
        frames = []
        while len(self._buffer) >= _FRAME_HEADER.size:
            (length,) = _FRAME_HEADER.unpack_from(self._buffer)
            if length > self.max_frame_size:
                self._buffer.clear()
                raise FrameTooLarge(f"announced frame of {length} bytes exceeds {self.max_frame_size}")
            end = _FRAME_HEADER.size + length
            if len(self._buffer) < end:
                break
            frames.append(bytes(self._buffer[_FRAME_HEADER.size:end]))
            del self._buffer[:end]
        return frames

    @property
    def buffered(self) -> int:
        return len(self._buffer)
