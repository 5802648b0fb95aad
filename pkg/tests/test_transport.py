import os
import socket
import struct
import sys
import unittest
from concurrent.futures import ThreadPoolExecutor
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.protocol import (
    AdminIdentity,
    CheckClient,
    ServerContext,
    ServerIdentity,
    ServerPolicy,
    TransportError,
    admin_register,
    client_cycle,
    client_stamp,
)
from pqtoken.providers import get_provider, liboqs_available
from pqtoken.providers.symbolic import SymbolicProvider
from pqtoken.state import AdminRecord, MemoryStore
from pqtoken.suite import get_suite
from pqtoken.transport import ProtocolServer, SocketChannel, drive, run_over_tcp
from pqtoken.wire import CheckStatus, ErrorCode, ErrorReply, decode_message, perms_disabled


class ServerTestCase(unittest.TestCase):
    """Real listener on an ephemeral port; the provider is shared in-process."""

    max_frame_size = 64 * 1024
    max_connections = 128
    idle_timeout = 5.0

    def make_provider(self):
        return SymbolicProvider(get_suite("L1"))

    def setUp(self):
        self.provider = self.make_provider()
        self.store = MemoryStore()
        identity = ServerIdentity(self.provider.generate_signing_keypair(), self.provider.suite)
        self.ctx = ServerContext(identity, self.provider, ServerPolicy())
        self.admin = AdminIdentity(os.urandom(16), self.provider.generate_signing_keypair(),
                                   identity.keypair.public_key, self.provider.suite)
        self.store.add_admin(AdminRecord(self.admin.admin_uuid, self.admin.keypair.public_key))
        self.server = ProtocolServer(self.ctx, self.store, ("127.0.0.1", 0), max_frame_size=self.max_frame_size,
                                     max_connections=self.max_connections, idle_timeout=self.idle_timeout)
        self.address = self.server.start()

    def tearDown(self):
        self.server.shutdown()

    def run_machine(self, machine):
        return run_over_tcp(machine, self.address, self.max_frame_size, timeout=10.0)

    def register(self):
        keypair = self.provider.generate_signing_keypair()
        return self.run_machine(admin_register(self.admin, os.urandom(16), keypair, self.provider)).unwrap()


class FullLifecycle:
    def test_full_lifecycle(self):
        client = self.register()
        self.assertTrue(self.run_machine(client_cycle(client, self.provider)).ok)
        final = self.run_machine(client_stamp(client, 1, perms_disabled(), self.provider)).unwrap()
        checked = self.run_machine(CheckClient(final.encode(), self.provider.params)).unwrap()
        self.assertEqual(checked.status, CheckStatus.VALID)


class TestSocketServer(FullLifecycle, ServerTestCase):
    def test_garbage_gets_a_signed_error(self):
        channel = SocketChannel.connect(self.address, timeout=5.0)
        try:
            channel.send(b"\x07" + bytes(40))
            reply = decode_message(channel.receive(), self.provider.params)
        finally:
            channel.close()
        self.assertIsInstance(reply, ErrorReply)
        self.assertEqual(reply.code, ErrorCode.MALFORMED_REQUEST)
        self.assertEqual(reply.request_hash, self.provider.hash(b"\x07" + bytes(40)))
        self.assertIsNotNone(self.register())

    def test_oversized_frame_closes_the_connection(self):
        sock = socket.create_connection(self.address, timeout=5.0)
        try:
            sock.sendall(struct.pack(">I", self.max_frame_size + 1))
            self.assertEqual(sock.recv(16), b"")
        finally:
            sock.close()

    def test_unreachable_server(self):
        spare = socket.socket()
        spare.bind(("127.0.0.1", 0))
        port = spare.getsockname()[1]
        spare.close()
        client = self.register()
        result = run_over_tcp(client_stamp(client, 1, perms_disabled(), self.provider), ("127.0.0.1", port),
                              timeout=2.0)
        self.assertIsInstance(result.error, TransportError)
        self.assertEqual(client.protocol_time.counter, 1)

    def test_concurrent_clients(self):
        clients = [self.register() for _ in range(32)]

        def stamp_many(client):
            return [self.run_machine(client_stamp(client, 0, perms_disabled(), self.provider)).unwrap().token.time
                    for _ in range(50)]

        with ThreadPoolExecutor(max_workers=32) as pool:
            times = list(pool.map(stamp_many, clients))
        for client, issued in zip(clients, times):
            self.assertEqual(issued, list(range(50)))
            self.assertEqual(self.store.get_client(client.uuid).expected_time, 50)


class TestIdleTimeout(ServerTestCase):
    idle_timeout = 0.5

    def test_silent_connection_is_closed(self):
        sock = socket.create_connection(self.address, timeout=5.0)
        try:
            self.assertEqual(sock.recv(16), b"")
        finally:
            sock.close()


class TestDrive(unittest.TestCase):
    class DeadChannel:
        def __init__(self):
            self.sent = []

        def send(self, body):
            self.sent.append(body)

        def receive(self):
            raise TransportError("connection closed by peer")

    def test_lost_reply_aborts_the_client(self):
        provider = SymbolicProvider(get_suite("L1"))
        server_key = provider.generate_signing_keypair()
        admin = AdminIdentity(b"A" * 16, provider.generate_signing_keypair(), server_key.public_key, provider.suite)
        channel = self.DeadChannel()
        result = drive(admin_register(admin, b"C" * 16, provider.generate_signing_keypair(), provider), channel)
        self.assertEqual(len(channel.sent), 1)
        self.assertIsInstance(result.error, TransportError)


@unittest.skipUnless(liboqs_available(), 'liboqs-python not installed')
class TestLiboqsLevel1(FullLifecycle, ServerTestCase):
    level = "L1"

    def make_provider(self):
        return get_provider("liboqs", self.level)


class TestLiboqsLevel3(TestLiboqsLevel1):
    level = "L3"


class TestLiboqsLevel5(TestLiboqsLevel1):
    level = "L5"


if __name__ == '__main__':
    unittest.main()
