from dataclasses import dataclass, field

from pqtoken.providers import SigningKeyPair
from pqtoken.suite import SuiteId
from pqtoken.wire import U64_MAX, ErrorCode, Token
from pqtoken.protocol.machine import CycleRequired


@dataclass
class ProtocolTime:
    """Per-client request counter; strictly monotonic within a key epoch."""
    counter: int = 0
    max: int = U64_MAX

    def __post_init__(self):
        if not 0 <= self.counter <= U64_MAX or not 0 < self.max <= U64_MAX:
            raise ValueError("protocol time must fit an unsigned 64-bit integer")

    @property
    def exhausted(self) -> bool:
        return self.counter >= self.max

    def advance(self) -> int:
        """Consume the current value and return it."""
        if self.exhausted:
            raise CycleRequired(ErrorCode.KEY_EXPIRED, self.counter)
        used = self.counter
        self.counter += 1
        return used

    def reset(self):
        self.counter = 0

    def resync(self, value: int):
        if not 0 <= value <= U64_MAX:
            raise ValueError("protocol time must fit an unsigned 64-bit integer")
        self.counter = value


@dataclass
class ClientIdentity:
    uuid: bytes
    signing_keypair: SigningKeyPair
    server_public_key: bytes
    suite: SuiteId
    protocol_time: ProtocolTime = field(default_factory=ProtocolTime)

    def __post_init__(self):
        if len(self.uuid) != 16:
            raise ValueError("client uuid must be 16 bytes")


@dataclass
class AdminIdentity:
    admin_uuid: bytes
    keypair: SigningKeyPair
    server_public_key: bytes
    suite: SuiteId


@dataclass
class ServerIdentity:
    keypair: SigningKeyPair
    suite: SuiteId


@dataclass(frozen=True)
class FinalToken:
    token: Token
    preview: Token
    approval_hash: bytes

    def __repr__(self):
        return f"FinalToken(uuid={self.token.uuid.hex()}, time={self.token.time})"

    def encode(self) -> bytes:
        return self.token.encode()
