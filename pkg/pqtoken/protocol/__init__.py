"""Protocol logic for registration, key cycling, token stamping and checking.

Every action is a SANS-I/O state machine per role; see ``machine`` for the
recv / poll_transmit / poll_result contract.
"""

from pqtoken.protocol.admin import RegisterAdmin
from pqtoken.protocol.client import CheckClient, CycleClient, StampClient
from pqtoken.protocol.identity import AdminIdentity, ClientIdentity, FinalToken, ProtocolTime, ServerIdentity
from pqtoken.protocol.machine import (
    PENDING,
    BadSignature,
    CycleRequired,
    HashMismatch,
    MachineTerminated,
    ProtocolError,
    Ready,
    RequestRejected,
    Send,
    ServerRejected,
    StateMachine,
    StoreReply,
    StoreRequest,
    TimeResync,
    TransportError,
    UnexpectedMessage,
    run_with_store,
    service,
)
from pqtoken.protocol.server import (
    CheckResult,
    CycleServer,
    RegisterServer,
    ServerContext,
    ServerPolicy,
    StampServer,
    open_request,
    server_check_token,
)
from pqtoken.wire import Cycle, Register, Stamp


def admin_register(admin: AdminIdentity, new_uuid: bytes, new_keypair, provider, **kwargs) -> RegisterAdmin:
    return RegisterAdmin(admin, new_uuid, new_keypair, provider, **kwargs)


def server_handle_register(message: Register, body: bytes, ctx: ServerContext) -> RegisterServer:
    return RegisterServer(ctx, message, body)


def client_cycle(client: ClientIdentity, provider, new_keypair=None) -> CycleClient:
    return CycleClient(client, provider, new_keypair)


def server_handle_cycle(message: Cycle, body: bytes, ctx: ServerContext) -> CycleServer:
    return CycleServer(ctx, message, body)


def client_stamp(client: ClientIdentity, device: int, perms: bytes, provider, **kwargs) -> StampClient:
    return StampClient(client, device, perms, provider, **kwargs)


def server_handle_stamp(message: Stamp, body: bytes, ctx: ServerContext) -> StampServer:
    return StampServer(ctx, message, body)
