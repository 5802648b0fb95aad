import logging
from dataclasses import replace

from pqtoken.providers import CryptoProvider, SigningKeyPair
from pqtoken.protocol.client import ServerFacingMachine
from pqtoken.protocol.identity import AdminIdentity, ClientIdentity, ProtocolTime
from pqtoken.protocol.machine import Flow, HashMismatch
from pqtoken.wire import U64_MAX, Register, RegSuccess, signing_bytes

logger = logging.getLogger(__name__)


class RegisterAdmin(ServerFacingMachine):
    """Registers a new client; the result is the credential set to install on it."""

    def __init__(self, admin: AdminIdentity, new_uuid: bytes, new_keypair: SigningKeyPair,
                 provider: CryptoProvider, max_protocol_time: int = U64_MAX):
        super().__init__(provider, admin.server_public_key)
        self.admin = admin
        self.new_uuid = new_uuid
        self.new_keypair = new_keypair
        self.max_protocol_time = max_protocol_time
        self._start()

    def _run(self) -> Flow:
        message = Register(uuid=self.new_uuid, client_pubkey=self.new_keypair.public_key,
                           admin_uuid=self.admin.admin_uuid)
        sig_client = self.provider.sign(signing_bytes(message), self.new_keypair.private_key)
        sig_admin = self.provider.sign(sig_client, self.admin.keypair.private_key)
        yield self._request(replace(message, sig_client=sig_client, sig_admin=sig_admin))

        reply = yield from self._await_reply(RegSuccess)
        if reply.id_hash != self.provider.hash(self.new_uuid):
            raise HashMismatch("registration reply names a different identifier")

        logger.info(f"Admin {self.admin.admin_uuid.hex()} registered client {self.new_uuid.hex()}")
        return ClientIdentity(
            uuid=self.new_uuid,
            signing_keypair=self.new_keypair,
            server_public_key=self.admin.server_public_key,
            suite=self.admin.suite,
            protocol_time=ProtocolTime(0, self.max_protocol_time),
        )
