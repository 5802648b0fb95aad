import os
import shutil
import stat
import sys
import tempfile
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.credentials import (
    Credential,
    CredentialError,
    CredentialKind,
    PublicIdentity,
    load_protocol_time,
    read_credential,
    read_public,
    read_token,
    save_protocol_time,
    state_path,
    write_credential,
    write_public,
    write_token,
)
from pqtoken.protocol import AdminIdentity, ClientIdentity, ProtocolTime, ServerIdentity
from pqtoken.providers.symbolic import SymbolicProvider
from pqtoken.suite import get_suite


class CredentialTestCase(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.provider = SymbolicProvider(get_suite("L3"))
        self.server = ServerIdentity(self.provider.generate_signing_keypair(), self.provider.suite)
        self.client = ClientIdentity(b"c" * 16, self.provider.generate_signing_keypair(),
                                     self.server.keypair.public_key, self.provider.suite)

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.tmpdir, name)


class TestCredentialFiles(CredentialTestCase):
    def test_client_file(self):
        write_credential(self.path('client.cred'), Credential.for_client(self.client))
        self.assertEqual(stat.S_IMODE(os.stat(self.path('client.cred')).st_mode), 0o600)
        loaded = read_credential(self.path('client.cred'), CredentialKind.CLIENT)
        identity = loaded.client_identity()
        self.assertEqual(identity.uuid, self.client.uuid)
        self.assertEqual(identity.signing_keypair, self.client.signing_keypair)
        self.assertEqual(identity.server_public_key, self.server.keypair.public_key)
        self.assertEqual(identity.suite.level.value, "L3")

    def test_server_and_admin(self):
        server = Credential.for_server(self.server)
        self.assertEqual(Credential.decode(server.encode()).server_identity().keypair, self.server.keypair)
        admin = AdminIdentity(b"a" * 16, self.provider.generate_signing_keypair(),
                              self.server.keypair.public_key, self.provider.suite)
        decoded = Credential.decode(Credential.for_admin(admin).encode())
        self.assertEqual(decoded.admin_identity().admin_uuid, admin.admin_uuid)

    def test_kind_is_enforced(self):
        write_credential(self.path('server.key'), Credential.for_server(self.server))
        with self.assertRaisesRegex(CredentialError, 'expected a client credential'):
            read_credential(self.path('server.key'), CredentialKind.CLIENT)
        with self.assertRaises(CredentialError):
            Credential.for_server(self.server).client_identity()

    def test_corrupt_files(self):
        data = Credential.for_client(self.client).encode()
        for bad in (b"", b"XXXX" + data[4:], data[:4] + b"\x09" + data[5:], data[:-1], data + b"\x00"):
            with self.assertRaises(CredentialError):
                Credential.decode(bad)
        with self.assertRaises(CredentialError):
            read_credential(self.path('absent'))

    def test_invariants(self):
        with self.assertRaises(CredentialError):
            Credential(CredentialKind.CLIENT, self.provider.suite, b"c" * 16, self.client.signing_keypair)
        with self.assertRaises(CredentialError):
            Credential(CredentialKind.CLIENT, self.provider.suite, b"c" * 15, self.client.signing_keypair, b"k")

    def test_repr_hides_keys(self):
        text = repr(Credential.for_client(self.client))
        self.assertNotIn(self.client.signing_keypair.private_key.hex(), text)
        self.assertIn("CLIENT", text)


class TestPublicIdentity(CredentialTestCase):
    def test_file(self):
        public = Credential.for_client(self.client).public()
        write_public(self.path('client.pub'), public)
        self.assertEqual(read_public(self.path('client.pub'), CredentialKind.CLIENT), public)
        with self.assertRaises(CredentialError):
            read_public(self.path('client.pub'), CredentialKind.ADMIN)

    def test_private_and_public_files_differ(self):
        encoded = PublicIdentity(CredentialKind.SERVER, self.provider.suite, bytes(16), b"pk").encode()
        with self.assertRaises(CredentialError):
            Credential.decode(encoded)


class TestTokensAndState(CredentialTestCase):
    def test_token_file(self):
        write_token(self.path('t.tok'), bytes(74))
        self.assertEqual(read_token(self.path('t.tok')), bytes(74))
        with self.assertRaises(CredentialError):
            write_token(self.path('t.tok'), bytes(73))
        with open(self.path('bad.tok'), 'wb') as f:
            f.write(bytes(10))
        with self.assertRaises(CredentialError):
            read_token(self.path('bad.tok'))

    def test_protocol_time_follows_the_key(self):
        path = state_path(self.path('client.cred'))
        self.assertTrue(path.endswith('client.cred.state'))
        key = self.client.signing_keypair.public_key
        self.assertEqual(load_protocol_time(path, key, 9), ProtocolTime(0, 9))
        save_protocol_time(path, key, ProtocolTime(5))
        self.assertEqual(load_protocol_time(path, key).counter, 5)
        other = self.provider.generate_signing_keypair().public_key
        self.assertEqual(load_protocol_time(path, other).counter, 0)

    def test_unreadable_state(self):
        path = self.path('broken.state')
        with open(path, 'w') as f:
            f.write('{not json')
        with self.assertRaises(CredentialError):
            load_protocol_time(path, b"k")


if __name__ == '__main__':
    unittest.main()
