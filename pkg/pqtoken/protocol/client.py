"""Client-side machines: key cycling, token stamping and token presentation."""

import logging
import secrets
from dataclasses import replace
from typing import Callable, Optional

from pqtoken.providers import CryptoProvider, DecapsulationError, SigningKeyPair
from pqtoken.suite import SuiteParams
from pqtoken.protocol.identity import ClientIdentity, FinalToken
from pqtoken.protocol.machine import (
    RECEIVE,
    BadSignature,
    CycleRequired,
    Flow,
    HashMismatch,
    Send,
    ServerRejected,
    StateMachine,
    TimeResync,
    UnexpectedMessage,
)
from pqtoken.wire import (
    PAYLOAD_SIZE,
    Checked,
    Cycle,
    CycleOk,
    ErrorCode,
    ErrorReply,
    Stamp,
    Stamped,
    Token,
    WireMessage,
    decode_message,
    encode_message,
    signing_bytes,
)

logger = logging.getLogger(__name__)


class ServerFacingMachine(StateMachine):
    """Shared request/reply handling for the admin and client roles."""

    def __init__(self, provider: CryptoProvider, server_public_key: bytes):
        super().__init__()
        self.provider = provider
        self.server_public_key = server_public_key
        self.request_body = b""
        self._request_hash = b""

    def _request(self, message: WireMessage) -> Send:
        self.request_body = encode_message(message, self.provider.params)
        self._request_hash = self.provider.hash(self.request_body)
        return Send(self.request_body)

    def _signed_by_server(self, message: WireMessage) -> bool:
        return self.provider.verify(message.sig_server, signing_bytes(message), self.server_public_key)

    def _await_reply(self, expected: type) -> Flow:
        body = yield RECEIVE
        reply = decode_message(body, self.provider.params)
        if isinstance(reply, ErrorReply):
            self._raise_rejection(reply)
        if not isinstance(reply, expected):
            raise UnexpectedMessage(f"expected {expected.__name__}, got {type(reply).__name__}")
        if not self._signed_by_server(reply):
            raise BadSignature(f"{type(reply).__name__} is not signed by the server")
        return reply

    def _raise_rejection(self, reply: ErrorReply):
        if not self._signed_by_server(reply):
            raise BadSignature("ERROR reply is not signed by the server")
        if reply.request_hash != self._request_hash:
            raise UnexpectedMessage("ERROR reply answers a different request")
        if reply.code == ErrorCode.BAD_TIME:
            self._on_time_resync(reply.correct_time)
            raise TimeResync(reply.code, reply.correct_time)
        if reply.code == ErrorCode.KEY_EXPIRED:
            raise CycleRequired(reply.code, reply.correct_time)
        raise ServerRejected(reply.code, reply.correct_time)

    def _on_time_resync(self, correct_time: int):
        pass


# ─────────────────────────────────────────────
# KEY CYCLING
# ─────────────────────────────────────────────

class CycleClient(ServerFacingMachine):
    """Rotates the client signing key; the result is the updated identity."""

    def __init__(self, client: ClientIdentity, provider: CryptoProvider,
                 new_keypair: Optional[SigningKeyPair] = None):
        super().__init__(provider, client.server_public_key)
        self.client = client
        self.new_keypair = new_keypair or provider.generate_signing_keypair()
        self._start()

    def _run(self) -> Flow:
        client, new = self.client, self.new_keypair
        message = Cycle(uuid=client.uuid, new_pubkey=new.public_key)
        sig_new = self.provider.sign(signing_bytes(message), new.private_key)
        sig_old = self.provider.sign(sig_new, client.signing_keypair.private_key)
        yield self._request(replace(message, sig_new=sig_new, sig_old=sig_old))

        reply = yield from self._await_reply(CycleOk)
        if reply.verification_hash != self.provider.hash(client.uuid + new.public_key):
            raise HashMismatch("cycle verification hash does not match the new key")

        client.signing_keypair = new
        client.protocol_time.reset()
        logger.info(f"Client {client.uuid.hex()} cycled its signing key")
        return client


# ─────────────────────────────────────────────
# TOKEN STAMPING
# ─────────────────────────────────────────────

class StampClient(ServerFacingMachine):
    """Turns a preview token into a final token shared with the server."""

    def __init__(self, client: ClientIdentity, device: int, perms: bytes, provider: CryptoProvider,
                 random_bytes: Callable[[int], bytes] = secrets.token_bytes):
        super().__init__(provider, client.server_public_key)
        self.client = client
        self.device = device
        self.perms = perms
        self._random_bytes = random_bytes
        self._start()

    def _on_time_resync(self, correct_time: int):
        logger.warning(f"Client {self.client.uuid.hex()} resynchronised protocol time to {correct_time}")
        self.client.protocol_time.resync(correct_time)

    def _run(self) -> Flow:
        client = self.client
        if client.protocol_time.exhausted:
            raise CycleRequired(ErrorCode.KEY_EXPIRED, client.protocol_time.counter)

        preview = Token(
            protocol=client.suite.wire_byte,
            device=self.device,
            uuid=client.uuid,
            perms=self.perms,
            time=client.protocol_time.counter,
            payload=self._random_bytes(PAYLOAD_SIZE),
        )
        kem = self.provider.kem_generate()
        message = Stamp(preview_token=preview, encapsulation_key=kem.encapsulation_key)
        signature = self.provider.sign(signing_bytes(message), client.signing_keypair.private_key)
        send = self._request(replace(message, sig_client=signature))
        client.protocol_time.advance()
        yield send

        reply = yield from self._await_reply(Stamped)
        try:
            secret = self.provider.kem_decapsulate(reply.ciphertext, kem.decapsulation_key)
        except DecapsulationError:
            raise HashMismatch("ciphertext did not decapsulate") from None
        del kem

        final = preview.with_payload(secret)
        if self.provider.hash(final.encode() + preview.encode()) != reply.approval_hash:
            raise HashMismatch("approval hash does not match the derived token")
        logger.info(f"Client {client.uuid.hex()} stamped a token at protocol time {preview.time}")
        return FinalToken(token=final, preview=preview, approval_hash=reply.approval_hash)


# ─────────────────────────────────────────────
# TOKEN PRESENTATION
# ─────────────────────────────────────────────

class CheckClient(StateMachine):
    """Presents a final token; the result is the server's CHECKED reply."""

    def __init__(self, token: bytes, params: SuiteParams):
        super().__init__()
        self.token = bytes(token)
        self.params = params
        self._start()

    def _run(self) -> Flow:
        yield Send(self.token)
        body = yield RECEIVE
        reply = decode_message(body, self.params)
        if not isinstance(reply, Checked):
            raise UnexpectedMessage(f"expected Checked, got {type(reply).__name__}")
        return reply
