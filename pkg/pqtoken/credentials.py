"""Credential, public identity, token and client-state files.

Credential file (mode 0600)::

    "PQTC" | version u8 | kind u8 | suite byte | uuid 16
    | u16 len | private key | u16 len | public key | u16 len | server public key

Public identity file::

    "PQTP" | version u8 | kind u8 | suite byte | uuid 16 | u16 len | public key

A server credential has a zero uuid and an empty server-key blob; nothing but
the server's own credential file ever holds its private key.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional, Tuple

from pqtoken.providers import SigningKeyPair
from pqtoken.protocol.identity import AdminIdentity, ClientIdentity, ProtocolTime, ServerIdentity
from pqtoken.state import key_id
from pqtoken.suite import SuiteId, UnknownSuite, suite_from_wire_byte
from pqtoken.wire import TOKEN_SIZE, U64_MAX, UUID_SIZE

logger = logging.getLogger(__name__)

CREDENTIAL_MAGIC = b"PQTC"
PUBLIC_MAGIC = b"PQTP"
FORMAT_VERSION = 1

_HEADER = struct.Struct(">4sBBB16s")
_BLOB_LEN = struct.Struct(">H")


class CredentialError(RuntimeError):
    pass


class CredentialKind(IntEnum):
    CLIENT = 1
    ADMIN = 2
    SERVER = 3


def _blob(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise CredentialError(f"key of {len(data)} bytes does not fit a credential file")
    return _BLOB_LEN.pack(len(data)) + data


def _read_blob(data: bytes, offset: int) -> Tuple[bytes, int]:
    if offset + _BLOB_LEN.size > len(data):
        raise CredentialError("credential file is truncated")
    (length,) = _BLOB_LEN.unpack_from(data, offset)
    offset += _BLOB_LEN.size
    if offset + length > len(data):
        raise CredentialError("credential file is truncated")
    return data[offset:offset + length], offset + length


def _read_header(data: bytes, magic: bytes) -> Tuple[CredentialKind, SuiteId, bytes]:
    if len(data) < _HEADER.size:
        raise CredentialError("credential file is truncated")
    found, version, kind, suite_byte, uuid = _HEADER.unpack_from(data)
    if found != magic:
        raise CredentialError(f"bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise CredentialError(f"unsupported credential format version {version}")
    try:
        return CredentialKind(kind), suite_from_wire_byte(suite_byte), uuid
    except (ValueError, UnknownSuite) as e:
        raise CredentialError(str(e)) from None


# ─────────────────────────────────────────────
# CREDENTIALS
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class Credential:
    kind: CredentialKind
    suite: SuiteId
    uuid: bytes
    keypair: SigningKeyPair
    server_public_key: bytes = b""

    def __post_init__(self):
        if len(self.uuid) != UUID_SIZE:
            raise CredentialError("uuid must be 16 bytes")
        if self.kind != CredentialKind.SERVER and not self.server_public_key:
            raise CredentialError("client and admin credentials must carry the server public key")
        if self.kind == CredentialKind.SERVER and self.server_public_key:
            raise CredentialError("a server credential carries no second public key")

    def __repr__(self):
        return f"Credential(kind={self.kind.name}, suite={self.suite.level.value}, uuid={self.uuid.hex()})"

    def encode(self) -> bytes:
        header = _HEADER.pack(CREDENTIAL_MAGIC, FORMAT_VERSION, self.kind, self.suite.wire_byte, self.uuid)
        return (header + _blob(self.keypair.private_key) + _blob(self.keypair.public_key)
                + _blob(self.server_public_key))

    @classmethod
    def decode(cls, data: bytes) -> "Credential":
        kind, suite, uuid = _read_header(data, CREDENTIAL_MAGIC)
        private_key, offset = _read_blob(data, _HEADER.size)
        public_key, offset = _read_blob(data, offset)
        server_public_key, offset = _read_blob(data, offset)
        if offset != len(data):
            raise CredentialError("trailing bytes after credential")
        return cls(kind, suite, uuid, SigningKeyPair(private_key, public_key), server_public_key)

    @classmethod
    def for_client(cls, client: ClientIdentity) -> "Credential":
        return cls(CredentialKind.CLIENT, client.suite, client.uuid, client.signing_keypair, client.server_public_key)

    @classmethod
    def for_admin(cls, admin: AdminIdentity) -> "Credential":
        return cls(CredentialKind.ADMIN, admin.suite, admin.admin_uuid, admin.keypair, admin.server_public_key)

    @classmethod
    def for_server(cls, server: ServerIdentity) -> "Credential":
        return cls(CredentialKind.SERVER, server.suite, bytes(UUID_SIZE), server.keypair)

    def client_identity(self, protocol_time: Optional[ProtocolTime] = None) -> ClientIdentity:
        self._expect(CredentialKind.CLIENT)
        return ClientIdentity(self.uuid, self.keypair, self.server_public_key, self.suite,
                              protocol_time or ProtocolTime())

    def admin_identity(self) -> AdminIdentity:
        self._expect(CredentialKind.ADMIN)
        return AdminIdentity(self.uuid, self.keypair, self.server_public_key, self.suite)

    def server_identity(self) -> ServerIdentity:
        self._expect(CredentialKind.SERVER)
        return ServerIdentity(self.keypair, self.suite)

    def public(self) -> "PublicIdentity":
        return PublicIdentity(self.kind, self.suite, self.uuid, self.keypair.public_key)

    def _expect(self, kind: CredentialKind):
        if self.kind != kind:
            raise CredentialError(f"expected a {kind.name.lower()} credential, got {self.kind.name.lower()}")


@dataclass(frozen=True)
class PublicIdentity:
    kind: CredentialKind
    suite: SuiteId
    uuid: bytes
    public_key: bytes

    def encode(self) -> bytes:
        return _HEADER.pack(PUBLIC_MAGIC, FORMAT_VERSION, self.kind, self.suite.wire_byte, self.uuid) + \
            _blob(self.public_key)

    @classmethod
    def decode(cls, data: bytes) -> "PublicIdentity":
        kind, suite, uuid = _read_header(data, PUBLIC_MAGIC)
        public_key, offset = _read_blob(data, _HEADER.size)
        if offset != len(data):
            raise CredentialError("trailing bytes after public identity")
        return cls(kind, suite, uuid, public_key)


# ─────────────────────────────────────────────
# FILES
# ─────────────────────────────────────────────

def write_private(path: str, data: bytes):
    """Write ``data`` readable by the owner only."""
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, data)
    finally:
        os.close(fd)
    os.chmod(path, 0o600)


def _read(path: str, what: str) -> bytes:
    p = Path(path)
    if not p.exists():
        raise CredentialError(f"{what} not found: {path}")
    return p.read_bytes()


def write_credential(path: str, credential: Credential):
    write_private(path, credential.encode())
    logger.info(f"Wrote {credential.kind.name.lower()} credential to {path}")


def read_credential(path: str, kind: Optional[CredentialKind] = None) -> Credential:
    credential = Credential.decode(_read(path, "credential file"))
    if kind is not None:
        credential._expect(kind)
    return credential


def write_public(path: str, identity: PublicIdentity):
    Path(path).write_bytes(identity.encode())


def read_public(path: str, kind: Optional[CredentialKind] = None) -> PublicIdentity:
    identity = PublicIdentity.decode(_read(path, "public identity file"))
    if kind is not None and identity.kind != kind:
        raise CredentialError(f"expected a {kind.name.lower()} public identity, got {identity.kind.name.lower()}")
    return identity


def write_token(path: str, token: bytes):
    if len(token) != TOKEN_SIZE:
        raise CredentialError(f"a token is {TOKEN_SIZE} bytes, got {len(token)}")
    write_private(path, token)


def read_token(path: str) -> bytes:
    data = _read(path, "token file")
    if len(data) != TOKEN_SIZE:
        raise CredentialError(f"{path} is not a token file ({len(data)} bytes)")
    return data


# ─────────────────────────────────────────────
# CLIENT STATE
# ─────────────────────────────────────────────

def state_path(credential_path: str) -> str:
    return f"{credential_path}.state"


def pending_path(credential_path: str) -> str:
    """Key pair of a cycle whose outcome is not known yet."""
    return f"{credential_path}.pending"


def load_protocol_time(path: str, public_key: bytes, max_protocol_time: int = U64_MAX) -> ProtocolTime:
    """Counter saved for ``public_key``; a different key starts a fresh epoch at 0."""
    p = Path(path)
    if not p.exists():
        return ProtocolTime(0, max_protocol_time)
    try:
        with open(p, "r") as f:
            doc = json.load(f)
        counter = int(doc.get("counter", 0)) if doc.get("key_id") == key_id(public_key) else 0
        return ProtocolTime(counter, max_protocol_time)
    except (OSError, ValueError) as e:
        raise CredentialError(f"unreadable client state {path}: {e}") from None


def save_protocol_time(path: str, public_key: bytes, protocol_time: ProtocolTime):
    doc = {"key_id": key_id(public_key), "counter": protocol_time.counter}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f)
    os.replace(tmp, path)
