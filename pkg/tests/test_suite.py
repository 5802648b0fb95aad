import os
import sys
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.suite import SuiteLevel, SuiteParams, UnknownSuite, get_suite, suite_from_wire_byte, suite_params


class TestSuiteRegistry(unittest.TestCase):
    def test_level_one_sizes(self):
        p = suite_params("L1")
        self.assertEqual((p.s_key, p.s_sig, p.s_ek, p.s_ct, p.s_hash), (1312, 2420, 800, 768, 32))

    def test_level_three_and_five_sizes(self):
        self.assertEqual(suite_params("L3"), SuiteParams(1952, 3309, 1184, 1088, 48))
        self.assertEqual(suite_params("L5"), SuiteParams(2592, 4627, 1568, 1568, 64))

    def test_lookup_is_forgiving_about_spelling(self):
        self.assertIs(get_suite("l3"), get_suite(SuiteLevel.L3))
        self.assertIs(get_suite("5"), get_suite("L5"))
        suite = get_suite("L1")
        self.assertIs(get_suite(suite), suite)

    def test_unknown_level(self):
        with self.assertRaises(UnknownSuite):
            get_suite("L2")
        with self.assertRaises(UnknownSuite):
            suite_from_wire_byte(0x02)

    def test_wire_bytes(self):
        for level, byte in (("L1", 0x01), ("L3", 0x03), ("L5", 0x05)):
            suite = get_suite(level)
            self.assertEqual(suite.wire_byte, byte)
            self.assertIs(suite_from_wire_byte(byte), suite)

    def test_digest_width_matches_hash_size(self):
        for level in ("L1", "L3", "L5"):
            suite = get_suite(level)
            self.assertEqual(len(suite.digest(b"abc")), suite.params.s_hash)

    def test_level_one_digest_is_sha3_256(self):
        self.assertEqual(get_suite("L1").digest(b"").hex(),
                         "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a")

    def test_algorithm_names(self):
        suite = get_suite("L5")
        self.assertEqual((suite.dsa, suite.kem), ("ML-DSA-87", "ML-KEM-1024"))

    def test_sizes_must_be_positive(self):
        for sizes in ((-1, 1, 1, 1, 1), (1312, 2420, 800, 768, 0), (0, 0, 0, 0, 0)):
            with self.subTest(sizes=sizes):
                with self.assertRaises(ValueError):
                    SuiteParams(*sizes)


if __name__ == '__main__':
    unittest.main()
