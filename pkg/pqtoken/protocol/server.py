"""Server-side machines.

Each incoming request gets its own machine. Machines reach the store only
through ``StoreRequest`` items, so the same code runs against the in-memory
store, the log file, Redis, or the adversary harness. A rejected request is
answered with a signed ERROR reply bound to the hash of the offending body, and
the machine terminates with ``RequestRejected``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from pqtoken.providers import CryptoProvider, ProviderError
from pqtoken.protocol.identity import FinalToken, ServerIdentity
from pqtoken.protocol.machine import (
    Flow,
    RequestRejected,
    Send,
    StateMachine,
    StoreRequest,
    run_with_store,
)
from pqtoken.state import (
    ClientRecord,
    InsertResult,
    RotateResult,
    TokenRecord,
    TokenStatus,
    UnknownClient,
    system_clock,
)
from pqtoken.wire import (
    TOKEN_SIZE,
    U64_MAX,
    CheckStatus,
    Checked,
    Cycle,
    CycleOk,
    ErrorCode,
    ErrorReply,
    PermMode,
    Register,
    RegSuccess,
    Stamp,
    Stamped,
    Token,
    WireError,
    decode_request,
    encode_message,
    outer_signing_bytes,
    signing_bytes,
)

logger = logging.getLogger(__name__)

DEFAULT_KEY_LIFETIME = 90 * 24 * 3600.0
DEFAULT_TOKEN_TTL = 3600.0


@dataclass(frozen=True)
class ServerPolicy:
    key_lifetime: float = DEFAULT_KEY_LIFETIME
    token_ttl: float = DEFAULT_TOKEN_TTL
    max_protocol_time: int = U64_MAX


@dataclass
class ServerContext:
    identity: ServerIdentity
    provider: CryptoProvider
    policy: ServerPolicy = field(default_factory=ServerPolicy)
    clock: Callable[[], float] = system_clock


@dataclass(frozen=True)
class CheckResult:
    valid: bool
    perms: bytes = b""
    scope: Optional[str] = None
    reason: Optional[str] = None
    uuid: bytes = b""

    @property
    def status(self) -> CheckStatus:
        if self.valid:
            return CheckStatus.VALID
        return {
            "expired": CheckStatus.EXPIRED,
            "malformed": CheckStatus.MALFORMED,
            "client_gone": CheckStatus.CLIENT_GONE,
        }.get(self.reason, CheckStatus.UNKNOWN)


class ServerMachine(StateMachine):
    def __init__(self, ctx: ServerContext, body: bytes):
        super().__init__()
        self.ctx = ctx
        self.body = body

    @property
    def provider(self) -> CryptoProvider:
        return self.ctx.provider

    def _sign(self, message):
        signature = self.provider.sign(signing_bytes(message), self.ctx.identity.keypair.private_key)
        return replace(message, sig_server=signature)

    def _reply(self, message) -> Send:
        return Send(encode_message(self._sign(message), self.provider.params))

    def _reject(self, code: ErrorCode, correct_time: int = 0, subject: bytes = b"") -> Flow:
        who = f" from {subject.hex()}" if subject else ""
        logger.warning(f"{type(self).__name__}: rejecting request{who} with {code.name}")
        yield self._reply(ErrorReply(code=code, request_hash=self.provider.hash(self.body), correct_time=correct_time))
        raise RequestRejected(code, correct_time)


class RejectServer(ServerMachine):
    """Answers an undecodable or out-of-suite request."""

    def __init__(self, ctx: ServerContext, body: bytes, code: ErrorCode = ErrorCode.MALFORMED_REQUEST):
        super().__init__(ctx, body)
        self.code = code
        self._start()

    def _run(self) -> Flow:
        yield from self._reject(self.code)


# ─────────────────────────────────────────────
# REGISTRATION
# ─────────────────────────────────────────────

class RegisterServer(ServerMachine):
    def __init__(self, ctx: ServerContext, message: Register, body: bytes):
        super().__init__(ctx, body)
        self.message = message
        self._start()

    def _run(self) -> Flow:
        m = self.message
        admin = yield StoreRequest("get_admin", (m.admin_uuid,))
        if admin is None:
            yield from self._reject(ErrorCode.UNKNOWN_ADMIN, subject=m.uuid)
        if not self.provider.verify(m.sig_client, signing_bytes(m), m.client_pubkey) or \
                not self.provider.verify(m.sig_admin, outer_signing_bytes(m), admin.public_key):
            yield from self._reject(ErrorCode.BAD_SIGNATURE, subject=m.uuid)

        record = ClientRecord(uuid=m.uuid, public_key=m.client_pubkey, key_installed_at=self.ctx.clock())
        inserted = yield StoreRequest("insert_client", (record,))
        if inserted == InsertResult.DUPLICATE_ID:
            yield from self._reject(ErrorCode.DUPLICATE_ID, subject=m.uuid)
        if inserted == InsertResult.DUPLICATE_KEY:
            yield from self._reject(ErrorCode.DUPLICATE_KEY, subject=m.uuid)

        yield self._reply(RegSuccess(id_hash=self.provider.hash(m.uuid)))
        logger.info(f"Registered client {m.uuid.hex()} for admin {m.admin_uuid.hex()}")
        return record


# ─────────────────────────────────────────────
# KEY CYCLING
# ─────────────────────────────────────────────

class CycleServer(ServerMachine):
    def __init__(self, ctx: ServerContext, message: Cycle, body: bytes):
        super().__init__(ctx, body)
        self.message = message
        self._start()

    def _run(self) -> Flow:
        m = self.message
        record = yield StoreRequest("get_client", (m.uuid,))
        if record is None:
            yield from self._reject(ErrorCode.UNKNOWN_CLIENT, subject=m.uuid)
        # outer signature under the key currently on file, inner under the new one
        if not self.provider.verify(m.sig_old, outer_signing_bytes(m), record.public_key) or \
                not self.provider.verify(m.sig_new, signing_bytes(m), m.new_pubkey):
            yield from self._reject(ErrorCode.BAD_SIGNATURE, subject=m.uuid)

        try:
            rotated = yield StoreRequest("rotate_key", (m.uuid, m.new_pubkey, self.ctx.clock(), record.public_key))
        except UnknownClient:
            rotated = None
            yield from self._reject(ErrorCode.UNKNOWN_CLIENT, subject=m.uuid)
        if rotated == RotateResult.DUPLICATE_KEY:
            yield from self._reject(ErrorCode.DUPLICATE_KEY, subject=m.uuid)
        if rotated == RotateResult.STALE_KEY:
            # a concurrent cycle won; this request was signed with a retired key
            yield from self._reject(ErrorCode.BAD_SIGNATURE, subject=m.uuid)

        yield self._reply(CycleOk(verification_hash=self.provider.hash(m.uuid + m.new_pubkey)))
        logger.info(f"Client {m.uuid.hex()} moved to key epoch {record.key_epoch + 1}")
        return m.uuid


# ─────────────────────────────────────────────
# TOKEN STAMPING
# ─────────────────────────────────────────────

class StampServer(ServerMachine):
    def __init__(self, ctx: ServerContext, message: Stamp, body: bytes):
        super().__init__(ctx, body)
        self.message = message
        self._start()

    def _run(self) -> Flow:
        m = self.message
        preview = m.preview_token
        uuid = preview.uuid
        policy = self.ctx.policy

        record = yield StoreRequest("get_client", (uuid,))
        if record is None:
            yield from self._reject(ErrorCode.UNKNOWN_CLIENT, subject=uuid)
        if not self.provider.verify(m.sig_client, signing_bytes(m), record.public_key):
            yield from self._reject(ErrorCode.BAD_SIGNATURE, subject=uuid)
        if preview.time >= policy.max_protocol_time:
            yield from self._reject(ErrorCode.KEY_EXPIRED, record.expected_time, subject=uuid)

        try:
            advance = yield StoreRequest("compare_and_advance_time", (uuid, preview.time, record.key_epoch))
        except UnknownClient:
            advance = None
            yield from self._reject(ErrorCode.UNKNOWN_CLIENT, subject=uuid)
        if advance.stale_epoch:
            yield from self._reject(ErrorCode.BAD_SIGNATURE, subject=uuid)
        if not advance.ok:
            yield from self._reject(ErrorCode.BAD_TIME, advance.value, subject=uuid)

        # from here on the time slot is consumed whatever happens
        now = self.ctx.clock()
        if now - record.key_installed_at > policy.key_lifetime:
            yield from self._reject(ErrorCode.KEY_EXPIRED, advance.value, subject=uuid)

        try:
            encapsulation = self.provider.kem_encapsulate(m.encapsulation_key)
        except ProviderError:
            encapsulation = None
            yield from self._reject(ErrorCode.MALFORMED_REQUEST, advance.value, subject=uuid)

        final = preview.with_payload(encapsulation.secret)
        final_bytes = final.encode()
        token_record = TokenRecord(
            token_hash=self.provider.hash(final_bytes),
            uuid=uuid,
            perms=preview.perms,
            issued_at=now,
            expires_at=now + policy.token_ttl,
        )
        inserted = yield StoreRequest("insert_token", (token_record,))
        if inserted != InsertResult.OK:
            yield from self._reject(ErrorCode.DUPLICATE_TOKEN, advance.value, subject=uuid)

        approval_hash = self.provider.hash(final_bytes + preview.encode())
        yield self._reply(Stamped(approval_hash=approval_hash, ciphertext=encapsulation.ciphertext))
        logger.info(f"Stamped token for client {uuid.hex()} at protocol time {preview.time}")
        return FinalToken(token=final, preview=preview, approval_hash=approval_hash)


# ─────────────────────────────────────────────
# TOKEN CHECKING
# ─────────────────────────────────────────────

class CheckServer(StateMachine):
    """Answers a bare token presentation with an unsigned CHECKED reply."""

    def __init__(self, ctx: ServerContext, token: Optional[Token], body: bytes):
        super().__init__()
        self.ctx = ctx
        self.token = token
        self.body = body
        self._start()

    def _run(self) -> Flow:
        result = yield from self._evaluate()
        yield Send(encode_message(Checked(status=result.status, perms=result.perms or bytes(16)),
                                  self.ctx.provider.params))
        logger.info(f"Token check: {'valid' if result.valid else result.reason}")
        return result

    def _evaluate(self) -> Flow:
        token = self.token
        if token is None or token.protocol != self.ctx.identity.suite.wire_byte:
            return CheckResult(valid=False, reason="malformed")
        lookup = yield StoreRequest("lookup_token", (self.ctx.provider.hash(self.body), self.ctx.clock()))
        if lookup.status == TokenStatus.ABSENT:
            return CheckResult(valid=False, reason="unknown")
        if lookup.status == TokenStatus.EXPIRED:
            return CheckResult(valid=False, reason="expired", uuid=lookup.record.uuid)
        client = yield StoreRequest("get_client", (lookup.record.uuid,))
        if client is None:
            return CheckResult(valid=False, reason="client_gone", uuid=lookup.record.uuid)
        perms = lookup.record.perms
        scope = None
        if perms[0] == PermMode.LOOKUP:
            scope = yield StoreRequest("lookup_perm_code", (perms[1:],))
        return CheckResult(valid=True, perms=perms, scope=scope, uuid=lookup.record.uuid)


def server_check_token(token_bytes: bytes, store, clock: Callable[[], float], provider: CryptoProvider,
                       suite=None) -> CheckResult:
    """Direct check of a presented token against ``store``."""
    if len(token_bytes) != TOKEN_SIZE:
        return CheckResult(valid=False, reason="malformed")
    try:
        token = Token.decode(token_bytes)
    except WireError:
        token = None
    identity = ServerIdentity(keypair=None, suite=suite or provider.suite)
    machine = CheckServer(ServerContext(identity, provider, clock=clock), token, bytes(token_bytes))
    result, _ = run_with_store(machine, store)
    return result.unwrap()


# ─────────────────────────────────────────────
# DISPATCH
# ─────────────────────────────────────────────

def open_request(body: bytes, ctx: ServerContext) -> StateMachine:
    """Pick the machine for the first frame of a connection."""
    params = ctx.provider.params
    if len(body) == TOKEN_SIZE:
        try:
            token = decode_request(body, params).token
        except WireError:
            token = None
        return CheckServer(ctx, token, body)
    try:
        message = decode_request(body, params)
    except WireError as e:
        logger.warning(f"Undecodable request ({len(body)} bytes): {e}")
        return RejectServer(ctx, body)
    if isinstance(message, Register):
        return RegisterServer(ctx, message, body)
    if isinstance(message, Cycle):
        return CycleServer(ctx, message, body)
    if isinstance(message, Stamp):
        if message.preview_token.protocol != ctx.identity.suite.wire_byte:
            return RejectServer(ctx, body)
        return StampServer(ctx, message, body)
    logger.warning(f"Unexpected {type(message).__name__} sent to the server")
    return RejectServer(ctx, body)

