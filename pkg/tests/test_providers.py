import os
import sys
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.providers import DecapsulationError, ProviderError, get_provider, liboqs_available
from pqtoken.providers.symbolic import SymbolicProvider
from pqtoken.suite import get_suite


class TestSymbolicProvider(unittest.TestCase):
    def setUp(self):
        self.provider = SymbolicProvider(get_suite("L1"))
        self.params = self.provider.params

    def test_term_sizes_follow_the_suite(self):
        keys = self.provider.generate_signing_keypair()
        kem = self.provider.kem_generate()
        enc = self.provider.kem_encapsulate(kem.encapsulation_key)
        self.assertEqual(len(keys.public_key), self.params.s_key)
        self.assertEqual(len(self.provider.sign(b"m", keys.private_key)), self.params.s_sig)
        self.assertEqual(len(kem.encapsulation_key), self.params.s_ek)
        self.assertEqual(len(enc.ciphertext), self.params.s_ct)
        self.assertEqual(len(enc.secret), 32)
        self.assertEqual(len(self.provider.hash(b"x")), self.params.s_hash)

    def test_sign_and_verify(self):
        keys = self.provider.generate_signing_keypair()
        other = self.provider.generate_signing_keypair()
        signature = self.provider.sign(b"message", keys.private_key)
        self.assertTrue(self.provider.verify(signature, b"message", keys.public_key))
        self.assertFalse(self.provider.verify(signature, b"messagf", keys.public_key))
        self.assertFalse(self.provider.verify(signature, b"message", other.public_key))
        tampered = bytearray(signature)
        tampered[-1] ^= 1
        self.assertFalse(self.provider.verify(bytes(tampered), b"message", keys.public_key))

    def test_verify_never_raises(self):
        keys = self.provider.generate_signing_keypair()
        self.assertFalse(self.provider.verify(b"", b"m", keys.public_key))
        self.assertFalse(self.provider.verify(b"\x00" * self.params.s_sig, b"m", b"junk"))

    def test_kem_round_trip(self):
        kem = self.provider.kem_generate()
        enc = self.provider.kem_encapsulate(kem.encapsulation_key)
        self.assertEqual(self.provider.kem_decapsulate(enc.ciphertext, kem.decapsulation_key), enc.secret)

    def test_kem_round_trip_over_many_key_pairs(self):
        secrets = set()
        for _ in range(1000):
            kem = self.provider.kem_generate()
            enc = self.provider.kem_encapsulate(kem.encapsulation_key)
            self.assertEqual(self.provider.kem_decapsulate(enc.ciphertext, kem.decapsulation_key), enc.secret)
            secrets.add(enc.secret)
        self.assertEqual(len(secrets), 1000)

    def test_ciphertext_does_not_carry_the_secret(self):
        kem = self.provider.kem_generate()
        enc = self.provider.kem_encapsulate(kem.encapsulation_key)
        self.assertNotIn(enc.secret, enc.ciphertext)

    def test_implicit_rejection(self):
        kem = self.provider.kem_generate()
        enc = self.provider.kem_encapsulate(kem.encapsulation_key)
        corrupted = bytearray(enc.ciphertext)
        corrupted[5] ^= 0xFF
        secret = self.provider.kem_decapsulate(bytes(corrupted), kem.decapsulation_key)
        self.assertEqual(len(secret), 32)
        self.assertNotEqual(secret, enc.secret)
        wrong_key = self.provider.kem_generate()
        self.assertNotEqual(self.provider.kem_decapsulate(enc.ciphertext, wrong_key.decapsulation_key), enc.secret)

    def test_wrong_ciphertext_length(self):
        kem = self.provider.kem_generate()
        with self.assertRaises(DecapsulationError):
            self.provider.kem_decapsulate(b"\x00" * 10, kem.decapsulation_key)

    def test_malformed_encapsulation_key(self):
        with self.assertRaises(ProviderError):
            self.provider.kem_encapsulate(b"\x00" * self.params.s_ek)

    def test_attacker_rules(self):
        kem = self.provider.kem_generate()
        enc = self.provider.kem_encapsulate(kem.encapsulation_key)
        other = self.provider.kem_generate()
        self.assertTrue(self.provider.is_ciphertext(enc.ciphertext))
        self.assertTrue(self.provider.is_decapsulation_key(kem.decapsulation_key))
        self.assertEqual(self.provider.open_ciphertext(enc.ciphertext, kem.decapsulation_key), enc.secret)
        self.assertIsNone(self.provider.open_ciphertext(enc.ciphertext, other.decapsulation_key))

    def test_seeded_randomness_is_deterministic(self):
        import random
        a = SymbolicProvider(get_suite("L1"), randbytes=random.Random(3).randbytes)
        b = SymbolicProvider(get_suite("L1"), randbytes=random.Random(3).randbytes)
        self.assertEqual(a.generate_signing_keypair(), b.generate_signing_keypair())

    def test_factory(self):
        self.assertIsInstance(get_provider("symbolic", "L3"), SymbolicProvider)
        with self.assertRaises(ProviderError):
            get_provider("rot13", "L1")


@unittest.skipUnless(liboqs_available(), 'liboqs-python not installed')
class TestLiboqsProvider(unittest.TestCase):
    def test_every_level(self):
        for level in ("L1", "L3", "L5"):
            provider = get_provider("liboqs", level)
            p = provider.params
            keys = provider.generate_signing_keypair()
            self.assertEqual(len(keys.public_key), p.s_key)
            signature = provider.sign(b"message", keys.private_key)
            self.assertEqual(len(signature), p.s_sig)
            self.assertTrue(provider.verify(signature, b"message", keys.public_key))
            self.assertFalse(provider.verify(signature, b"tampered", keys.public_key))

            kem = provider.kem_generate()
            self.assertEqual(len(kem.encapsulation_key), p.s_ek)
            enc = provider.kem_encapsulate(kem.encapsulation_key)
            self.assertEqual(len(enc.ciphertext), p.s_ct)
            self.assertEqual(provider.kem_decapsulate(enc.ciphertext, kem.decapsulation_key), enc.secret)

    def test_kem_round_trip_over_many_key_pairs(self):
        provider = get_provider("liboqs", "L1")
        for _ in range(1000):
            kem = provider.kem_generate()
            enc = provider.kem_encapsulate(kem.encapsulation_key)
            self.assertEqual(provider.kem_decapsulate(enc.ciphertext, kem.decapsulation_key), enc.secret)

    def test_corrupted_ciphertext_decapsulates_to_another_secret(self):
        provider = get_provider("liboqs", "L1")
        kem = provider.kem_generate()
        enc = provider.kem_encapsulate(kem.encapsulation_key)
        corrupted = bytearray(enc.ciphertext)
        corrupted[0] ^= 1
        self.assertNotEqual(provider.kem_decapsulate(bytes(corrupted), kem.decapsulation_key), enc.secret)
        with self.assertRaises(DecapsulationError):
            provider.kem_decapsulate(enc.ciphertext[:-1], kem.decapsulation_key)

    def test_verify_never_raises(self):
        provider = get_provider("liboqs", "L1")
        self.assertFalse(provider.verify(b"short", b"m", b"also short"))


if __name__ == '__main__':
    unittest.main()
